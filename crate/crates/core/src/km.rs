//! Product-limit survival curves, Greenwood confidence bands and the
//! log-rank test.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KmError {
    #[error("no observations")]
    Empty,
    #[error("durations and event flags differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid duration {value} at index {index}")]
    InvalidDuration { index: usize, value: f64 },
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("log-rank test needs at least two non-empty groups")]
    TooFewGroups,
    #[error("degenerate log-rank input: {0}")]
    Degenerate(String),
}

/// A right-continuous Kaplan-Meier step function.
///
/// `survival[i]` is the estimate on `[event_times[i], event_times[i + 1])`;
/// before the first event time the estimate is 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub label: String,
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub deaths: Vec<usize>,
    /// Greenwood variance of the estimate at each event time.
    pub variance: Vec<f64>,
    /// Durations of censored subjects (one entry per subject).
    pub censor_times: Vec<f64>,
    /// Running Greenwood sum `Σ d / (n (n - d))`; infinite once S reaches 0.
    greenwood_sum: Vec<f64>,
}

fn validate(durations: &[f64], events: &[bool]) -> Result<(), KmError> {
    if durations.len() != events.len() {
        return Err(KmError::LengthMismatch(durations.len(), events.len()));
    }
    if durations.is_empty() {
        return Err(KmError::Empty);
    }
    if let Some((index, &value)) = durations.iter().enumerate().find(|(_, d)| !(**d >= 0.0 && d.is_finite())) {
        return Err(KmError::InvalidDuration { index, value });
    }
    Ok(())
}

/// Distinct times in ascending order with (deaths, censored) counts at each.
fn tally(durations: &[f64], events: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let t = durations[i];
        match out.last_mut() {
            Some(last) if last.0 == t => {
                if events[i] {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => out.push((t, usize::from(events[i]), usize::from(!events[i]))),
        }
    }
    out
}

pub fn fit_km(durations: &[f64], events: &[bool]) -> Result<SurvivalCurve, KmError> {
    fit_km_labeled(durations, events, "all")
}

pub fn fit_km_labeled(durations: &[f64], events: &[bool], label: &str) -> Result<SurvivalCurve, KmError> {
    validate(durations, events)?;
    let mut curve = SurvivalCurve {
        label: label.to_string(),
        event_times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        deaths: Vec::new(),
        variance: Vec::new(),
        censor_times: Vec::new(),
        greenwood_sum: Vec::new(),
    };
    let mut at_risk = durations.len();
    let mut s = 1.0;
    let mut gw = 0.0;
    for (t, d, c) in tally(durations, events) {
        if d > 0 {
            let n = at_risk as f64;
            let df = d as f64;
            s *= (n - df) / n;
            gw += if d < at_risk { df / (n * (n - df)) } else { f64::INFINITY };
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.deaths.push(d);
            curve.variance.push(if s > 0.0 { s * s * gw } else { 0.0 });
            curve.greenwood_sum.push(gw);
        }
        curve.censor_times.extend(std::iter::repeat_n(t, c));
        at_risk -= d + c;
    }
    Ok(curve)
}

/// Right-continuous evaluation of the step function.
pub fn survival_at(curve: &SurvivalCurve, t: f64) -> f64 {
    let k = curve.event_times.partition_point(|&e| e <= t);
    if k == 0 {
        1.0
    } else {
        curve.survival[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Pointwise bands at each event time from Greenwood's variance on the
/// log(-log S) scale, so both limits stay in `[0, 1]`.
pub fn greenwood_band(curve: &SurvivalCurve, level: f64) -> Result<Band, KmError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(KmError::InvalidLevel(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let mut lower = Vec::with_capacity(curve.survival.len());
    let mut upper = Vec::with_capacity(curve.survival.len());
    for (&s, &gw) in curve.survival.iter().zip(&curve.greenwood_sum) {
        if s <= 0.0 || s >= 1.0 {
            lower.push(s.clamp(0.0, 1.0));
            upper.push(s.clamp(0.0, 1.0));
            continue;
        }
        let se = gw.sqrt() / s.ln().abs();
        lower.push(s.powf((z * se).exp()));
        upper.push(s.powf((-z * se).exp()));
    }
    Ok(Band { level, lower, upper })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRankResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// K-sample log-rank test with the hypergeometric variance.
pub fn log_rank_test(groups: &[(&[f64], &[bool])]) -> Result<LogRankResult, KmError> {
    if groups.len() < 2 || groups.iter().any(|(d, _)| d.is_empty()) {
        return Err(KmError::TooFewGroups);
    }
    let k = groups.len();
    let mut pooled: Vec<(f64, bool, usize)> = Vec::new();
    for (g, (d, e)) in groups.iter().enumerate() {
        validate(d, e)?;
        pooled.extend(d.iter().zip(e.iter()).map(|(&t, &ev)| (t, ev, g)));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk: Vec<f64> = groups.iter().map(|(d, _)| d.len() as f64).collect();
    let mut observed_minus_expected = vec![0.0; k];
    let mut cov = DMatrix::<f64>::zeros(k, k);

    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        let mut j = i;
        let mut deaths = vec![0.0; k];
        let mut leaving = vec![0.0; k];
        while j < pooled.len() && pooled[j].0 == t {
            let (_, ev, g) = pooled[j];
            if ev {
                deaths[g] += 1.0;
            }
            leaving[g] += 1.0;
            j += 1;
        }
        let d: f64 = deaths.iter().sum();
        let n: f64 = at_risk.iter().sum();
        if d > 0.0 {
            let tie = if n > 1.0 { (n - d) / (n - 1.0) } else { 0.0 };
            for a in 0..k {
                let pa = at_risk[a] / n;
                observed_minus_expected[a] += deaths[a] - d * pa;
                for b in 0..k {
                    let pb = at_risk[b] / n;
                    let delta = if a == b { 1.0 } else { 0.0 };
                    cov[(a, b)] += d * pa * (delta - pb) * tie;
                }
            }
        }
        for g in 0..k {
            at_risk[g] -= leaving[g];
        }
        i = j;
    }

    if let Some(g) = (0..k).find(|&g| cov[(g, g)] <= 0.0) {
        return Err(KmError::Degenerate(format!("group {g} contributes no variance")));
    }
    let m = k - 1;
    let reduced = cov.view((0, 0), (m, m)).into_owned();
    let diff = DVector::from_iterator(m, observed_minus_expected[..m].iter().copied());
    let solved = reduced
        .clone()
        .cholesky()
        .map(|c| c.solve(&diff))
        .or_else(|| reduced.lu().solve(&diff))
        .ok_or_else(|| KmError::Degenerate("singular variance matrix".into()))?;
    let statistic = diff.dot(&solved).max(0.0);
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        ChiSquared::new(m as f64).expect("df >= 1").sf(statistic).clamp(0.0, 1.0)
    };
    Ok(LogRankResult {
        statistic,
        degrees_of_freedom: m,
        p_value,
    })
}

/// Writes the curve table: `group,time,survival,lower,upper,at_risk,deaths`.
pub fn write_curve_rows<W: Write>(
    curves: &[(SurvivalCurve, Band)],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "time", "survival", "lower", "upper", "at_risk", "deaths"])?;
    for (curve, band) in curves {
        for i in 0..curve.event_times.len() {
            w.write_record([
                curve.label.clone(),
                curve.event_times[i].to_string(),
                curve.survival[i].to_string(),
                band.lower[i].to_string(),
                band.upper[i].to_string(),
                curve.at_risk[i].to_string(),
                curve.deaths[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes censor marks: `group,time,survival` (the curve height at the mark).
pub fn write_censor_rows<W: Write>(curves: &[SurvivalCurve], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "time", "survival"])?;
    for curve in curves {
        for &t in &curve.censor_times {
            w.write_record([curve.label.clone(), t.to_string(), survival_at(curve, t).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_events() {
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(c.event_times, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.survival, vec![2.0 / 3.0, 2.0 / 3.0 * 0.5, 0.0]);
        assert_eq!(c.at_risk, vec![3, 2, 1]);
    }

    #[test]
    fn all_censored() {
        let c = fit_km(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(c.event_times.is_empty());
        assert_eq!(c.censor_times, vec![1.0, 2.0]);
        assert_eq!(survival_at(&c, 100.0), 1.0);
    }

    #[test]
    fn censoring_shrinks_risk_set() {
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(c.survival, vec![2.0 / 3.0, 0.0]);
        assert_eq!(c.at_risk, vec![3, 1]);
        assert_eq!(c.censor_times, vec![2.0]);
    }

    #[test]
    fn censored_tied_with_death_stays_at_risk() {
        // Deaths at t=1 see both the death and the tied censoring in the risk set.
        let c = fit_km(&[1.0, 1.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(c.at_risk, vec![3, 1]);
        assert_eq!(c.survival[0], 2.0 / 3.0);
    }

    #[test]
    fn input_errors() {
        assert_eq!(fit_km(&[], &[]), Err(KmError::Empty));
        assert!(matches!(fit_km(&[-1.0], &[true]), Err(KmError::InvalidDuration { index: 0, .. })));
        assert!(matches!(fit_km(&[f64::NAN], &[true]), Err(KmError::InvalidDuration { .. })));
        assert_eq!(fit_km(&[1.0], &[]), Err(KmError::LengthMismatch(1, 0)));
    }

    #[test]
    fn step_evaluation() {
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(survival_at(&c, 0.5), 1.0);
        assert_eq!(survival_at(&c, 1.0), 2.0 / 3.0);
        assert_eq!(survival_at(&c, 2.5), 1.0 / 3.0);
    }

    #[test]
    fn greenwood_single_death() {
        let mut d = vec![5.0; 10];
        d[0] = 1.0;
        let mut e = vec![false; 10];
        e[0] = true;
        let c = fit_km(&d, &e).unwrap();
        assert_eq!(c.survival, vec![0.9]);
        assert!((c.variance[0] - 0.009).abs() < 1e-15);
        let band = greenwood_band(&c, 0.95).unwrap();
        assert!(band.lower[0] < 0.9 && 0.9 < band.upper[0]);
        assert!(band.lower[0] >= 0.0 && band.upper[0] <= 1.0);
    }

    #[test]
    fn band_on_flat_curve() {
        let c = fit_km(&[3.0, 4.0], &[false, false]).unwrap();
        let b = greenwood_band(&c, 0.95).unwrap();
        assert!(b.lower.is_empty());
        // With no event times the step function is 1 everywhere and so is the band.
        assert_eq!(survival_at(&c, 10.0), 1.0);
        assert_eq!(greenwood_band(&c, 1.0), Err(KmError::InvalidLevel(1.0)));
        assert_eq!(greenwood_band(&c, 0.0), Err(KmError::InvalidLevel(0.0)));
    }

    #[test]
    fn wider_level_encloses_narrower() {
        let d = [1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let e = [true, true, false, true, false, true, true, false, true, false];
        let c = fit_km(&d, &e).unwrap();
        let b95 = greenwood_band(&c, 0.95).unwrap();
        let b99 = greenwood_band(&c, 0.99).unwrap();
        for i in 0..c.survival.len() {
            assert!(b99.lower[i] <= b95.lower[i] && b95.upper[i] <= b99.upper[i]);
        }
    }

    #[test]
    fn log_rank_identical_groups() {
        let d = [1.0, 2.0, 2.0, 5.0];
        let e = [true, false, true, true];
        let r = log_rank_test(&[(&d, &e), (&d, &e)]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.degrees_of_freedom, 1);
    }

    #[test]
    fn log_rank_hand_table() {
        // A = {1, 2}, B = {3, 4}, all events.
        // t=1: n=(2,2) d=1 -> E_A=1/2, V=1/4
        // t=2: n=(1,2) d=1 -> E_A=1/3, V=2/9
        // t=3, 4: A empty -> E_A=0, V=0
        // O_A - E_A = 2 - 5/6 = 7/6, V = 17/36, X = (49/36)/(17/36) = 49/17
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let ev = [true, true];
        let r = log_rank_test(&[(&a, &ev), (&b, &ev)]).unwrap();
        assert!((r.statistic - 49.0 / 17.0).abs() < 1e-12);
        let swapped = log_rank_test(&[(&b, &ev), (&a, &ev)]).unwrap();
        assert!((swapped.statistic - r.statistic).abs() < 1e-12);
    }

    #[test]
    fn log_rank_degenerate() {
        let a = [1.0, 2.0];
        let none = [false, false];
        let b = [0.5, 0.7];
        assert!(matches!(log_rank_test(&[(&a, &none), (&b, &none)]), Err(KmError::Degenerate(_))));
        assert_eq!(log_rank_test(&[(&a, &none)]), Err(KmError::TooFewGroups));
    }

    #[test]
    fn curve_export_rows() {
        let c = fit_km(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        let b = greenwood_band(&c, 0.95).unwrap();
        let mut buf = Vec::new();
        write_curve_rows(&[(c.clone(), b)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        let mut buf = Vec::new();
        write_censor_rows(&[c], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group,time,survival\nall,2,0.6666666666666666\n");
    }
}
