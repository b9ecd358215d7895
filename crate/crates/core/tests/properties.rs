use oss_survival::coxph::{self, CoxOptions, DesignMatrix, Ties};
use oss_survival::km;
use proptest::prelude::*;

fn censored_sample(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0u32..30, any::<bool>()), 1..max)
        .prop_map(|v| v.into_iter().map(|(t, e)| (f64::from(t), e)).unzip())
}

proptest! {
    #[test]
    fn km_is_non_increasing_and_bounded((d, e) in censored_sample(40)) {
        let c = km::fit_km(&d, &e).unwrap();
        let mut prev = 1.0;
        for &s in &c.survival {
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s <= prev);
            prev = s;
        }
        let band = km::greenwood_band(&c, 0.95).unwrap();
        for i in 0..c.survival.len() {
            prop_assert!(band.lower[i] <= c.survival[i] + 1e-12 && c.survival[i] <= band.upper[i] + 1e-12);
        }
    }

    #[test]
    fn km_is_scale_invariant((d, e) in censored_sample(30), k in 0.1f64..50.0) {
        let a = km::fit_km(&d, &e).unwrap();
        let scaled: Vec<f64> = d.iter().map(|t| t * k).collect();
        let b = km::fit_km(&scaled, &e).unwrap();
        prop_assert_eq!(a.survival, b.survival);
    }

    #[test]
    fn late_censoring_keeps_event_times_and_raises_survival((d, e) in censored_sample(30), extra in 1usize..5) {
        let a = km::fit_km(&d, &e).unwrap();
        let last = d.iter().cloned().fold(0.0, f64::max);
        let mut d2 = d.clone();
        let mut e2 = e.clone();
        for i in 0..extra {
            d2.push(last + 1.0 + i as f64);
            e2.push(false);
        }
        let b = km::fit_km(&d2, &e2).unwrap();
        prop_assert_eq!(&a.event_times, &b.event_times);
        // the extra subjects only enlarge the risk sets, so survival rises
        for (x, y) in a.survival.iter().zip(&b.survival) {
            prop_assert!(y + 1e-15 >= *x);
        }
    }

    #[test]
    fn log_rank_is_symmetric_in_two_groups((d0, e0) in censored_sample(20), (d1, e1) in censored_sample(20)) {
        let ab = km::log_rank_test(&[(&d0, &e0), (&d1, &e1)]);
        let ba = km::log_rank_test(&[(&d1, &e1), (&d0, &e0)]);
        match (ab, ba) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
                prop_assert!((0.0..=1.0).contains(&a.p_value));
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "asymmetric outcome {:?} / {:?}", a, b),
        }
    }

    #[test]
    fn efron_equals_breslow_without_ties(
        rows in prop::collection::vec((0.0f64..1.0, 0.01f64..100.0, any::<bool>()), 5..40),
        beta in -2.0f64..2.0,
    ) {
        let mut times: Vec<f64> = rows.iter().map(|r| r.1).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        prop_assume!(times.len() == rows.len());
        let dm = DesignMatrix::new(
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| vec![r.0]).collect(),
            vec!["x".into()],
        ).unwrap();
        let a = coxph::partial_log_likelihood(&[beta], &dm, Ties::Efron).unwrap();
        let b = coxph::partial_log_likelihood(&[beta], &dm, Ties::Breslow).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn partial_likelihood_is_concave_along_lines(
        rows in prop::collection::vec((0u8..2, 1u32..10, any::<bool>()), 6..40),
        b0 in -2.0f64..2.0,
        step in 0.05f64..1.0,
    ) {
        let dm = DesignMatrix::new(
            rows.iter().map(|r| f64::from(r.1)).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| vec![f64::from(r.0)]).collect(),
            vec!["x".into()],
        ).unwrap();
        let f = |b: f64| coxph::partial_log_likelihood(&[b], &dm, Ties::Efron).unwrap();
        let mid = f(b0);
        let ends = 0.5 * (f(b0 - step) + f(b0 + step));
        prop_assert!(ends <= mid + 1e-9 * mid.abs().max(1.0));
    }

    #[test]
    fn cox_fit_is_invariant_to_row_order(seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let s = oss_survival::synth::two_group_exponential(200, 2.0, 0.1, 0.03, seed);
        let mut idx: Vec<usize> = (0..s.durations.len()).collect();
        let build = |idx: &[usize]| DesignMatrix::new(
            idx.iter().map(|&i| s.durations[i]).collect(),
            idx.iter().map(|&i| s.events[i]).collect(),
            idx.iter().map(|&i| vec![s.group[i]]).collect(),
            vec!["g".into()],
        ).unwrap();
        let a = coxph::fit_cox(&build(&idx), &CoxOptions::default()).unwrap();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = coxph::fit_cox(&build(&idx), &CoxOptions::default()).unwrap();
        prop_assert!((a.beta[0] - b.beta[0]).abs() < 1e-9);
    }
}
