//! Bayesian exponential survival model.
//!
//! Each duration `y` is exponential with rate `λ = exp(xᵀβ)`; events
//! contribute the density `λ exp(-λy)` and censored rows the survival
//! `exp(-λy)`. Coefficients get independent `Normal(0, prior_sd)` priors.
//! The posterior is explored with an adaptive random-walk Metropolis sampler.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{coding, Attribute, CodedColumn, CodingError};
use crate::cohort::{Attributes, Subject};

#[derive(Debug, Error, PartialEq)]
pub enum BayesError {
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("expected {expected} coefficients, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("rate overflow at row {row}")]
    Overflow { row: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpRow {
    pub y: f64,
    pub event: bool,
    /// Covariates with the leading intercept element.
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpSurvModel {
    rows: Vec<ExpRow>,
    dim: usize,
    prior_sd: f64,
    names: Vec<String>,
    coding: Vec<CodedColumn>,
}

impl ExpSurvModel {
    pub fn new(rows: Vec<ExpRow>, names: Vec<String>, prior_sd: f64) -> Result<Self, BayesError> {
        let dim = names.len();
        if dim == 0 {
            return Err(BayesError::InvalidModel("at least the intercept is required".into()));
        }
        if !(prior_sd > 0.0 && prior_sd.is_finite()) {
            return Err(BayesError::InvalidModel(format!("prior_sd must be positive, got {prior_sd}")));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.x.len() != dim {
                return Err(BayesError::InvalidModel(format!("row {i}: expected {dim} covariates")));
            }
            if r.x[0] != 1.0 {
                return Err(BayesError::InvalidModel(format!("row {i}: intercept element must be 1")));
            }
            if !(r.y >= 0.0 && r.y.is_finite()) || r.x.iter().any(|v| !v.is_finite()) {
                return Err(BayesError::InvalidModel(format!("row {i}: non-finite or negative value")));
            }
        }
        Ok(ExpSurvModel {
            rows,
            dim,
            prior_sd,
            names,
            coding: Vec::new(),
        })
    }

    /// Intercept-only model with no data: the posterior equals the prior.
    pub fn prior_only(dim: usize, prior_sd: f64) -> Result<Self, BayesError> {
        let names = (0..dim).map(|j| format!("beta{j}")).collect();
        ExpSurvModel::new(Vec::new(), names, prior_sd)
    }

    pub fn rows(&self) -> &[ExpRow] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior_sd(&self) -> f64 {
        self.prior_sd
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn coding(&self) -> &[CodedColumn] {
        &self.coding
    }

    /// Covariate vector (with intercept) for a subject with these attributes.
    pub fn profile(&self, attributes: &Attributes) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.coding.iter().map(|c| c.value(attributes)))
            .collect()
    }
}

/// Intercept plus indicators for `formula`, using the same reference levels
/// as the Cox model.
pub fn model_for(subjects: &[Subject], formula: &[Attribute], prior_sd: f64) -> Result<ExpSurvModel, BayesError> {
    let cols = coding(subjects, formula)?;
    let rows = subjects
        .iter()
        .map(|s| ExpRow {
            y: s.duration_months,
            event: s.event(),
            x: std::iter::once(1.0)
                .chain(cols.iter().map(|c| c.value(&s.attributes)))
                .collect(),
        })
        .collect();
    let names = std::iter::once("intercept".to_string())
        .chain(cols.iter().map(CodedColumn::name))
        .collect();
    let mut model = ExpSurvModel::new(rows, names, prior_sd)?;
    model.coding = cols;
    Ok(model)
}

fn check_dim(beta: &[f64], dim: usize) -> Result<(), BayesError> {
    if beta.len() != dim {
        return Err(BayesError::Dimension {
            expected: dim,
            got: beta.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Censored exponential log-likelihood:
/// `Σ_events [xᵀβ − exp(xᵀβ) y] + Σ_censored [−exp(xᵀβ) y]`.
pub fn log_likelihood(beta: &[f64], model: &ExpSurvModel) -> Result<f64, BayesError> {
    check_dim(beta, model.dim)?;
    let mut total = 0.0;
    for (row, r) in model.rows.iter().enumerate() {
        let eta = dot(&r.x, beta);
        let hazard = eta.exp() * r.y;
        if !eta.is_finite() || !hazard.is_finite() {
            return Err(BayesError::Overflow { row });
        }
        total -= hazard;
        if r.event {
            total += eta;
        }
    }
    Ok(total)
}

/// Sum of independent `Normal(0, prior_sd)` log-densities.
pub fn log_prior(beta: &[f64], prior_sd: f64) -> f64 {
    let norm = -(prior_sd * (2.0 * PI).sqrt()).ln();
    beta.iter().map(|b| norm - 0.5 * (b / prior_sd).powi(2)).sum()
}

pub fn log_posterior(beta: &[f64], model: &ExpSurvModel) -> Result<f64, BayesError> {
    Ok(log_likelihood(beta, model)? + log_prior(beta, model.prior_sd))
}

/// Rows collapsed by identical covariate vector: `(x, events, total exposure)`.
/// The likelihood only depends on these sums.
struct Compressed {
    groups: Vec<(Vec<f64>, f64, f64)>,
    prior_sd: f64,
}

impl Compressed {
    fn new(model: &ExpSurvModel) -> Self {
        let mut map: BTreeMap<Vec<u64>, (Vec<f64>, f64, f64)> = BTreeMap::new();
        for r in &model.rows {
            let key = r.x.iter().map(|v| v.to_bits()).collect();
            let entry = map.entry(key).or_insert_with(|| (r.x.clone(), 0.0, 0.0));
            entry.1 += f64::from(u8::from(r.event));
            entry.2 += r.y;
        }
        Compressed {
            groups: map.into_values().collect(),
            prior_sd: model.prior_sd,
        }
    }

    /// `-inf` when a rate overflows, so such proposals are always rejected.
    fn log_posterior(&self, beta: &[f64]) -> f64 {
        let mut total = log_prior(beta, self.prior_sd);
        for (x, events, exposure) in &self.groups {
            let eta = dot(x, beta);
            let hazard = eta.exp() * exposure;
            if !hazard.is_finite() {
                return f64::NEG_INFINITY;
            }
            total += events * eta - hazard;
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub target_accept: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            draws: 2000,
            seed: 20_180_101,
            target_accept: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorDraws {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub dim: usize,
    pub names: Vec<String>,
    /// chain-major, then draw, then coefficient
    samples: Vec<f64>,
    pub seed: u64,
    pub warmup: usize,
    pub acceptance_rate: Vec<f64>,
    pub proposal_scale: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    /// Assembles draws from per-chain `draw × dim` samples. Used for
    /// diagnostics on externally produced chains.
    pub fn from_chains(chains: Vec<Vec<Vec<f64>>>) -> Self {
        let n_chains = chains.len();
        let draws = chains.iter().map(Vec::len).min().unwrap_or(0);
        let dim = chains.first().and_then(|c| c.first()).map(Vec::len).unwrap_or(0);
        let samples = chains
            .iter()
            .flat_map(|c| c[..draws].iter().flat_map(|d| d.iter().copied()))
            .collect();
        PosteriorDraws {
            chains: n_chains,
            draws_per_chain: draws,
            dim,
            names: (0..dim).map(|j| format!("beta{j}")).collect(),
            samples,
            seed: 0,
            warmup: 0,
            acceptance_rate: vec![f64::NAN; n_chains],
            proposal_scale: vec![f64::NAN; n_chains],
            warnings: Vec::new(),
        }
    }

    pub fn draw(&self, chain: usize, draw: usize) -> &[f64] {
        let start = (chain * self.draws_per_chain + draw) * self.dim;
        &self.samples[start..start + self.dim]
    }

    /// Every stored draw in chain order.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim.max(1))
    }

    /// Trace of one coefficient in one chain.
    pub fn trace(&self, chain: usize, component: usize) -> Vec<f64> {
        (0..self.draws_per_chain).map(|d| self.draw(chain, d)[component]).collect()
    }

    pub fn mean(&self, component: usize) -> f64 {
        let n = (self.chains * self.draws_per_chain) as f64;
        self.iter().map(|d| d[component]).sum::<f64>() / n
    }

    pub fn std_dev(&self, component: usize) -> f64 {
        let m = self.mean(component);
        let n = (self.chains * self.draws_per_chain) as f64;
        (self.iter().map(|d| (d[component] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    /// Type-7 quantile of one coefficient over all draws.
    pub fn quantile(&self, component: usize, q: f64) -> f64 {
        let mut v: Vec<f64> = self.iter().map(|d| d[component]).collect();
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, q)
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

struct ChainOutput {
    samples: Vec<f64>,
    acceptance_rate: f64,
    scale: f64,
}

fn sample_covariance(points: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let n = points.len() as f64;
    let mut mean = DVector::<f64>::zeros(dim);
    for p in points {
        mean += DVector::from_column_slice(p);
    }
    mean /= n;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for p in points {
        let d = DVector::from_column_slice(p) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov / (n - 1.0).max(1.0)
}

fn run_chain(target: &Compressed, dim: usize, config: &SamplerConfig, chain: usize) -> ChainOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64 + 1);

    let mut current: Vec<f64> = (0..dim)
        .map(|_| target.prior_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut current_lp = target.log_posterior(&current);
    for _ in 0..100 {
        if current_lp.is_finite() {
            break;
        }
        current.iter_mut().for_each(|b| *b *= 0.5);
        current_lp = target.log_posterior(&current);
    }

    let base_scale = 2.38 / (dim as f64).sqrt();
    let mut log_scale = base_scale.ln();
    let mut chol = DMatrix::<f64>::identity(dim, dim);
    let mut history: Vec<Vec<f64>> = Vec::new();
    let switch_at = config.warmup / 2;
    let collect_from = config.warmup / 4;
    let mut adapt_step = 0usize;

    let mut samples = Vec::with_capacity(config.draws * dim);
    let mut accepted = 0usize;
    let total = config.warmup + config.draws;
    for iter in 0..total {
        let z = DVector::<f64>::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &chol * z * log_scale.exp();
        let proposal: Vec<f64> = current.iter().zip(step.iter()).map(|(c, s)| c + s).collect();
        let proposal_lp = target.log_posterior(&proposal);
        let log_ratio = proposal_lp - current_lp;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            current = proposal;
            current_lp = proposal_lp;
            if iter >= config.warmup {
                accepted += 1;
            }
        }

        if iter < config.warmup {
            adapt_step += 1;
            let gain = (adapt_step as f64).powf(-0.6);
            log_scale += gain * (accept_prob - config.target_accept);
            if iter >= collect_from && iter < switch_at {
                history.push(current.clone());
            }
            if iter + 1 == switch_at && history.len() > dim + 1 {
                let n = history.len() as f64;
                let shrunk = sample_covariance(&history, dim) * (n / (n + 5.0))
                    + DMatrix::<f64>::identity(dim, dim) * (1e-3 * 5.0 / (n + 5.0));
                if let Some(c) = shrunk.cholesky() {
                    chol = c.l();
                    log_scale = base_scale.ln();
                    adapt_step = 0;
                }
            }
        } else {
            samples.extend_from_slice(&current);
        }
    }
    ChainOutput {
        samples,
        acceptance_rate: if config.draws > 0 {
            accepted as f64 / config.draws as f64
        } else {
            f64::NAN
        },
        scale: log_scale.exp(),
    }
}

/// Runs independent chains in parallel; chain `c` uses stream `c + 1` of a
/// ChaCha8 generator keyed by the master seed, so results do not depend on
/// thread scheduling.
pub fn sample_posterior(model: &ExpSurvModel, config: &SamplerConfig) -> Result<PosteriorDraws, BayesError> {
    if config.chains == 0 {
        return Err(BayesError::InvalidConfig("chains must be at least 1".into()));
    }
    if config.draws < 2 {
        return Err(BayesError::InvalidConfig("draws must be at least 2".into()));
    }
    if !(config.target_accept > 0.0 && config.target_accept < 1.0) {
        return Err(BayesError::InvalidConfig(format!(
            "target_accept must lie in (0, 1), got {}",
            config.target_accept
        )));
    }
    let target = Compressed::new(model);
    let dim = model.dim;
    let outputs: Vec<ChainOutput> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let target = &target;
                scope.spawn(move || run_chain(target, dim, config, c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });

    let mut warnings = Vec::new();
    for (c, o) in outputs.iter().enumerate() {
        if !(0.01..=0.99).contains(&o.acceptance_rate) {
            warnings.push(format!(
                "chain {c}: pathological acceptance rate {:.4} after warmup",
                o.acceptance_rate
            ));
        }
    }
    Ok(PosteriorDraws {
        chains: config.chains,
        draws_per_chain: config.draws,
        dim,
        names: model.names.clone(),
        acceptance_rate: outputs.iter().map(|o| o.acceptance_rate).collect(),
        proposal_scale: outputs.iter().map(|o| o.scale).collect(),
        samples: outputs.into_iter().flat_map(|o| o.samples).collect(),
        seed: config.seed,
        warmup: config.warmup,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub warnings: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Autocovariance at lags `0..n` (biased, divided by `n`), computed on demand.
fn autocovariance(chain: &[f64], lag: usize) -> f64 {
    let m = mean(chain);
    let n = chain.len();
    (0..n - lag).map(|i| (chain[i] - m) * (chain[i + lag] - m)).sum::<f64>() / n as f64
}

/// Potential scale reduction over the given (already split) chains.
fn rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let between = n * variance(&means);
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let between_over_n = if chains.len() > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * within + between_over_n;

    let rho = |lag: usize| {
        let acov = mean(&chains.iter().map(|c| autocovariance(c, lag)).collect::<Vec<_>>());
        1.0 - (within - acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        prev_pair = pair;
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * n as f64).log10());
    m * n as f64 / tau
}

/// Split-R̂ and effective sample size per coefficient.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Diagnostics, BayesError> {
    if draws.chains == 0 || draws.draws_per_chain < 4 {
        return Err(BayesError::InvalidConfig("diagnostics need at least 4 draws per chain".into()));
    }
    let half = draws.draws_per_chain / 2;
    let mut out = Diagnostics {
        rhat: Vec::new(),
        ess: Vec::new(),
        warnings: Vec::new(),
    };
    for j in 0..draws.dim {
        let mut split = Vec::with_capacity(draws.chains * 2);
        for c in 0..draws.chains {
            let trace = draws.trace(c, j);
            // Odd lengths drop the middle draw.
            split.push(trace[..half].to_vec());
            split.push(trace[trace.len() - half..].to_vec());
        }
        if split.iter().any(|c| variance(c) == 0.0) {
            out.warnings.push(format!("{}: zero-variance chain segment", draws.names[j]));
            out.rhat.push(f64::NAN);
            out.ess.push(f64::NAN);
            continue;
        }
        out.rhat.push(rhat(&split));
        out.ess.push(ess(&split));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSurvival {
    pub times: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub q025_curve: Vec<f64>,
    pub q975_curve: Vec<f64>,
    /// A thinned subset of individual draw curves, for plotting.
    pub sample_curves: Vec<Vec<f64>>,
}

/// Evenly spaced grid `0, step, 2 step, ..., end`.
pub fn time_grid(end: f64, step: f64) -> Vec<f64> {
    let n = (end / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Survival curves `exp(-λ t)` with `λ = exp(xᵀβ)` for every draw,
/// summarized pointwise by mean and 2.5% / 97.5% quantiles.
pub fn posterior_survival(
    draws: &PosteriorDraws,
    profile: &[f64],
    times: &[f64],
    keep_curves: usize,
) -> Result<PosteriorSurvival, BayesError> {
    check_dim(profile, draws.dim)?;
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(BayesError::InvalidGrid("times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BayesError::InvalidGrid("times must be strictly ascending".into()));
    }
    let mut rates: Vec<f64> = draws.iter().map(|b| dot(profile, b).exp()).collect();
    let total = rates.len();
    if total == 0 {
        return Err(BayesError::InvalidConfig("no draws".into()));
    }

    let stride = if keep_curves == 0 { 0 } else { total.div_ceil(keep_curves) };
    let sample_curves = if stride == 0 {
        Vec::new()
    } else {
        rates
            .iter()
            .step_by(stride)
            .map(|l| times.iter().map(|t| (-l * t).exp()).collect())
            .collect()
    };

    // S(t) is decreasing in λ for every t, so sorting the rates once orders
    // every column of curves in reverse.
    rates.sort_by(f64::total_cmp);
    let mut mean_curve = Vec::with_capacity(times.len());
    let mut q025_curve = Vec::with_capacity(times.len());
    let mut q975_curve = Vec::with_capacity(times.len());
    let mut column = vec![0.0; total];
    for &t in times {
        for (slot, l) in column.iter_mut().zip(rates.iter().rev()) {
            *slot = (-l * t).exp();
        }
        mean_curve.push(column.iter().sum::<f64>() / total as f64);
        q025_curve.push(quantile_sorted(&column, 0.025));
        q975_curve.push(quantile_sorted(&column, 0.975));
    }
    Ok(PosteriorSurvival {
        times: times.to_vec(),
        mean_curve,
        q025_curve,
        q975_curve,
        sample_curves,
    })
}

/// `group,time,mean,q025,q975` rows for each labelled curve.
pub fn write_posterior_rows<W: Write>(curves: &[(String, PosteriorSurvival)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "time", "mean", "q025", "q975"])?;
    for (label, c) in curves {
        for i in 0..c.times.len() {
            w.write_record([
                label.clone(),
                c.times[i].to_string(),
                c.mean_curve[i].to_string(),
                c.q025_curve[i].to_string(),
                c.q975_curve[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw draws as `chain,draw,<coefficient names...>`.
pub fn write_draws<W: Write>(draws: &PosteriorDraws, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(draws.names.iter().cloned());
    w.write_record(&header)?;
    for c in 0..draws.chains {
        for d in 0..draws.draws_per_chain {
            let mut rec = vec![c.to_string(), d.to_string()];
            rec.extend(draws.draw(c, d).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
