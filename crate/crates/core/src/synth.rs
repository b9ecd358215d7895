//! Synthetic data with known generating hazards.
//!
//! [`synthetic_bundle`] produces revision, release and origin logs whose
//! project lifetimes are exponential with attribute-dependent rates, so the
//! full pipeline can be exercised without the original repository export.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::cohort::{Host, RevisionEvent, StudyWindow};

/// Right-censored two-group exponential sample.
#[derive(Debug, Clone)]
pub struct TwoGroupSample {
    pub durations: Vec<f64>,
    pub events: Vec<bool>,
    /// 0/1 group indicator, alternating.
    pub group: Vec<f64>,
}

/// Group 1 has hazard `hazard_ratio * base_rate`, group 0 `base_rate`;
/// independent exponential censoring at `censor_rate`.
pub fn two_group_exponential(n: usize, hazard_ratio: f64, base_rate: f64, censor_rate: f64, seed: u64) -> TwoGroupSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e0 = Exp::new(base_rate).expect("positive rate");
    let e1 = Exp::new(base_rate * hazard_ratio).expect("positive rate");
    let ec = Exp::new(censor_rate).expect("positive rate");
    let mut out = TwoGroupSample {
        durations: Vec::with_capacity(n),
        events: Vec::with_capacity(n),
        group: Vec::with_capacity(n),
    };
    for i in 0..n {
        let g = i % 2;
        let t = if g == 1 { e1.sample(&mut rng) } else { e0.sample(&mut rng) };
        let c = ec.sample(&mut rng);
        out.durations.push(t.min(c));
        out.events.push(t <= c);
        out.group.push(g as f64);
    }
    out
}

/// Generator knobs for [`synthetic_bundle`]. Rates are per 28-day month.
#[derive(Debug, Clone, Copy)]
pub struct BundleSpec {
    pub projects: usize,
    pub seed: u64,
    pub base_rate: f64,
    pub hr_no_major_release: f64,
    pub hr_single_repo: f64,
    pub hr_few_authors: f64,
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec {
            projects: 240,
            seed: 2018,
            base_rate: 0.0015,
            hr_no_major_release: 3.0,
            hr_single_repo: 3.3,
            hr_few_authors: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub revisions: Vec<RevisionEvent>,
    pub releases: Vec<(String, DateTime<Utc>)>,
    pub origins: Vec<(String, Host)>,
}

const DAY_SECS: i64 = 86_400;

pub fn synthetic_bundle(spec: &BundleSpec, window: &StudyWindow) -> Bundle {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let month_secs = i64::from(window.month_length_days) * DAY_SECS;
    let start = window.start_instant();
    // Activity is recorded up to roughly 18 months past the window end.
    let horizon = window.end_instant() + Duration::seconds(18 * month_secs);
    let mut bundle = Bundle::default();

    for i in 0..spec.projects {
        let id = format!("proj-{i:04}");
        let host = match rng.random::<f64>() {
            u if u < 0.6 => Host::Github,
            u if u < 0.85 => Host::Pypi,
            _ => Host::Debian,
        };
        let major = rng.random_bool(0.5);
        let multi = rng.random_bool(0.35);
        let many_authors = rng.random_bool(0.25);
        let busy = rng.random_bool(0.2);

        let host_factor = match host {
            Host::Github => 1.0,
            Host::Pypi => 0.8,
            Host::Debian => 1.3,
        };
        let mut rate = spec.base_rate * host_factor;
        if !major {
            rate *= spec.hr_no_major_release;
        }
        if !multi {
            rate *= spec.hr_single_repo;
        }
        if !many_authors {
            rate *= spec.hr_few_authors;
        }
        let mut life_months = Exp::new(rate).expect("positive rate").sample(&mut rng);
        if busy {
            // Busy projects are short-lived bursts; this also bounds their log size.
            life_months = life_months.min(rng.random_range(0.2..5.0));
        }
        let offset_months = rng.random_range(-24.0..160.0);
        let first = start + Duration::seconds((offset_months * month_secs as f64) as i64);
        let mut last = first + Duration::seconds((life_months * month_secs as f64) as i64);
        if last > horizon {
            last = horizon - Duration::seconds(rng.random_range(0..30 * DAY_SECS));
            if last < first {
                last = first;
            }
        }
        let span_secs = (last - first).num_seconds();
        let span_days = span_secs as f64 / DAY_SECS as f64;

        let per_day = if busy {
            rng.random_range(1.3..2.5)
        } else {
            rng.random_range(0.01..0.08)
        };
        let pool: usize = if many_authors {
            rng.random_range(22..45)
        } else {
            rng.random_range(1..12)
        };
        let mut count = ((per_day * span_days).round() as usize).max(2);
        if many_authors {
            count = count.max(pool + 1);
        }
        if span_secs == 0 {
            count = 1;
        }

        let mut offsets: Vec<i64> = Vec::with_capacity(count);
        offsets.push(0);
        if count > 1 {
            offsets.push(span_secs);
            offsets.extend((2..count).map(|_| rng.random_range(0..=span_secs)));
        }
        offsets.sort_unstable();
        for (k, off) in offsets.iter().enumerate() {
            let author = if k < pool { k } else { rng.random_range(0..pool) };
            bundle.revisions.push(RevisionEvent {
                project_id: id.clone(),
                timestamp: first + Duration::seconds(*off),
                author_id: format!("{id}-dev{author:02}"),
                host,
            });
        }

        if major {
            let n = rng.random_range(1..=4);
            let mut rel: Vec<i64> = (0..n).map(|_| rng.random_range(0..=span_secs)).collect();
            rel.sort_unstable();
            bundle
                .releases
                .extend(rel.into_iter().map(|o| (id.clone(), first + Duration::seconds(o))));
        }

        bundle.origins.push((id.clone(), host));
        if multi {
            let extra: Vec<Host> = Host::ALL.into_iter().filter(|h| *h != host).collect();
            let n = rng.random_range(1..=2);
            bundle.origins.extend(extra.into_iter().take(n).map(|h| (id.clone(), h)));
        }
    }
    bundle
}

fn fmt_ts(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes `revisions.csv`, `releases.csv` and `origins.csv` into `dir`.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("revisions.csv"))?);
    writeln!(w, "project_id,timestamp,author_id,host")?;
    for e in &bundle.revisions {
        writeln!(w, "{},{},{},{}", e.project_id, fmt_ts(&e.timestamp), e.author_id, e.host)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("releases.csv"))?);
    writeln!(w, "project_id,timestamp")?;
    for (p, ts) in &bundle.releases {
        writeln!(w, "{p},{}", fmt_ts(ts))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("origins.csv"))?);
    writeln!(w, "project_id,host")?;
    for (p, h) in &bundle.origins {
        writeln!(w, "{p},{h}")?;
    }
    w.flush()
}

/// Config shipped next to a written bundle: every default, with input paths
/// relative to the config file.
pub fn bundle_config_toml() -> String {
    crate::config::RunConfig::default().to_toml_string()
}
