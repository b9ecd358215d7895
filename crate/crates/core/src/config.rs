//! Run configuration: a TOML file whose every key has a built-in default.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::Attribute;
use crate::bayes::SamplerConfig;
use crate::cohort::{build_study_window, StudyWindow, Thresholds};
use crate::coxph::{CoxOptions, Ties};

/// Environment variable that overrides `io.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "OSS_SURVIVAL_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub end_date: NaiveDate,
    pub total_months: u32,
    pub month_length_days: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            end_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            total_months: 165,
            month_length_days: 28,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmConfig {
    pub level: f64,
}

impl Default for KmConfig {
    fn default() -> Self {
        KmConfig { level: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoxMode {
    /// One model over every configured attribute.
    #[default]
    Joint,
    /// One model per attribute.
    PerAttribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxConfig {
    pub ties: Ties,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: CoxMode,
}

impl Default for CoxConfig {
    fn default() -> Self {
        let o = CoxOptions::default();
        CoxConfig {
            ties: o.ties,
            tol: o.tol,
            max_iter: o.max_iter,
            mode: CoxMode::Joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub prior_sd: f64,
    pub target_accept: f64,
    /// Spacing of the posterior survival grid, in months.
    pub grid_step: f64,
    /// Months at which posterior survival is quoted in the summary.
    pub report_months: Vec<f64>,
    /// Number of individual draw curves drawn behind each band.
    pub plot_curves: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        BayesConfig {
            chains: s.chains,
            warmup: s.warmup,
            draws: s.draws,
            seed: s.seed,
            prior_sd: 10.0,
            target_accept: s.target_accept,
            grid_step: 1.0,
            report_months: vec![120.0, 150.0, 165.0],
            plot_curves: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub revisions: PathBuf,
    pub releases: PathBuf,
    pub origins: PathBuf,
    /// A previously written cohort file; when set, the analysis stages read
    /// it instead of rebuilding the cohort from the logs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohort: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub delimiter: char,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            revisions: "revisions.csv".into(),
            releases: "releases.csv".into(),
            origins: "origins.csv".into(),
            cohort: None,
            output_dir: "out".into(),
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub attributes: Vec<Attribute>,
    pub window: WindowConfig,
    pub thresholds: Thresholds,
    pub km: KmConfig,
    pub cox: CoxConfig,
    pub bayes: BayesConfig,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            attributes: Attribute::ALL.to_vec(),
            window: WindowConfig::default(),
            thresholds: Thresholds::default(),
            km: KmConfig::default(),
            cox: CoxConfig::default(),
            bayes: BayesConfig::default(),
            io: IoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Reads a config file and resolves relative I/O paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.io.revisions);
        fix(&mut self.io.releases);
        fix(&mut self.io.origins);
        fix(&mut self.io.output_dir);
        if let Some(c) = self.io.cohort.as_mut() {
            fix(c);
        }
    }

    /// Applies the output-directory environment override, then explicit
    /// command-line overrides (which win).
    pub fn apply_overrides(&mut self, env_out: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) {
        if let Some(dir) = out.or(env_out) {
            self.io.output_dir = dir;
        }
        if let Some(seed) = seed {
            self.bayes.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.attributes.is_empty() {
            return fail("attributes must not be empty");
        }
        if self.window.month_length_days == 0 {
            return fail("window.month_length_days must be at least 1");
        }
        if self.thresholds.authors == 0 {
            return fail("thresholds.authors must be positive");
        }
        if !(self.thresholds.rev_per_day > 0.0 && self.thresholds.rev_per_day.is_finite()) {
            return fail("thresholds.rev_per_day must be positive");
        }
        if !(self.km.level > 0.0 && self.km.level < 1.0) {
            return fail("km.level must lie in (0, 1)");
        }
        if !self.cox.tol.is_finite() || self.cox.tol <= 0.0 || self.cox.max_iter == 0 {
            return fail("cox.tol must be positive and cox.max_iter at least 1");
        }
        let b = &self.bayes;
        if b.chains == 0 || b.draws < 4 {
            return fail("bayes.chains must be at least 1 and bayes.draws at least 4");
        }
        if !(b.prior_sd > 0.0 && b.prior_sd.is_finite()) {
            return fail("bayes.prior_sd must be positive");
        }
        if !(b.target_accept > 0.0 && b.target_accept < 1.0) {
            return fail("bayes.target_accept must lie in (0, 1)");
        }
        if !b.grid_step.is_finite() || b.grid_step <= 0.0 || b.report_months.iter().any(|m| m.is_nan() || *m < 0.0) {
            return fail("bayes.grid_step must be positive and report_months non-negative");
        }
        let io = &self.io;
        for (name, p) in [
            ("revisions", &io.revisions),
            ("releases", &io.releases),
            ("origins", &io.origins),
            ("output_dir", &io.output_dir),
        ] {
            if p.as_os_str().is_empty() {
                return Err(ConfigError::Invalid(format!("io.{name} must not be empty")));
            }
        }
        if io.cohort.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
            return fail("io.cohort must not be empty when given");
        }
        if !io.delimiter.is_ascii() {
            return fail("io.delimiter must be an ASCII character");
        }
        Ok(())
    }

    pub fn study_window(&self) -> StudyWindow {
        build_study_window(self.window.end_date, self.window.total_months, self.window.month_length_days)
    }

    pub fn cox_options(&self) -> CoxOptions {
        CoxOptions {
            ties: self.cox.ties,
            max_iter: self.cox.max_iter,
            tol: self.cox.tol,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            chains: self.bayes.chains,
            warmup: self.bayes.warmup,
            draws: self.bayes.draws,
            seed: self.bayes.seed,
            target_accept: self.bayes.target_accept,
        }
    }
}
