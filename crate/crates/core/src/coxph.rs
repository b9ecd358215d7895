//! Cox proportional-hazards regression.
//!
//! The partial likelihood is maximized by Newton-Raphson from `beta = 0` with
//! step-halving. Tied death times are handled with Efron's approximation by
//! default, Breslow's on request.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::attribute::{coding, Attribute, CodedColumn, CodingError};
use crate::cohort::Subject;

/// Two-sided 97.5% standard-normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// Coefficients beyond this magnitude are treated as a diverging (monotone)
/// likelihood rather than a finite estimate.
const MAX_ABS_BETA: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum CoxError {
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("covariate column `{0}` is constant; coefficient not identifiable")]
    NonIdentifiable(String),
    #[error("design has no observed events")]
    NoEvents,
    #[error("expected {expected} coefficients, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite coefficient vector")]
    NonFinite,
    #[error("invalid row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("monotone likelihood: coefficient for `{0}` diverges (complete or quasi-complete separation)")]
    MonotoneLikelihood(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

/// Durations, event flags and a dense row-major covariate block.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    durations: Vec<f64>,
    events: Vec<bool>,
    x: Vec<f64>,
    dim: usize,
    names: Vec<String>,
    coding: Vec<CodedColumn>,
    formula: Vec<Attribute>,
    /// Subject indices ordered by descending duration.
    order: Vec<usize>,
}

impl DesignMatrix {
    pub fn new(
        durations: Vec<f64>,
        events: Vec<bool>,
        rows: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self, CoxError> {
        let dim = names.len();
        if durations.len() != events.len() || durations.len() != rows.len() {
            return Err(CoxError::InvalidRow {
                row: durations.len().min(events.len()).min(rows.len()),
                message: "durations, events and covariate rows differ in length".into(),
            });
        }
        let mut x = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(CoxError::InvalidRow {
                    row: i,
                    message: format!("expected {dim} covariates, got {}", r.len()),
                });
            }
            if !(durations[i] >= 0.0 && durations[i].is_finite()) || r.iter().any(|v| !v.is_finite()) {
                return Err(CoxError::InvalidRow {
                    row: i,
                    message: "non-finite or negative value".into(),
                });
            }
            x.extend_from_slice(r);
        }
        let mut order: Vec<usize> = (0..durations.len()).collect();
        order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
        Ok(DesignMatrix {
            durations,
            events,
            x,
            dim,
            names,
            coding: Vec::new(),
            formula: Vec::new(),
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Indicator columns when built by [`encode_covariates`]; empty otherwise.
    pub fn coding(&self) -> &[CodedColumn] {
        &self.coding
    }

    pub fn formula(&self) -> &[Attribute] {
        &self.formula
    }

    /// Same covariates with durations replaced (used for rank-invariance checks).
    pub fn with_durations(&self, durations: Vec<f64>) -> Result<Self, CoxError> {
        let rows = (0..self.len()).map(|i| self.row(i).to_vec()).collect();
        let mut dm = DesignMatrix::new(durations, self.events.clone(), rows, self.names.clone())?;
        dm.coding = self.coding.clone();
        dm.formula = self.formula.clone();
        Ok(dm)
    }
}

/// Indicator-codes the requested attributes (no intercept column).
pub fn encode_covariates(subjects: &[Subject], formula: &[Attribute]) -> Result<DesignMatrix, CoxError> {
    let cols = coding(subjects, formula)?;
    let rows = subjects
        .iter()
        .map(|s| cols.iter().map(|c| c.value(&s.attributes)).collect())
        .collect();
    let mut dm = DesignMatrix::new(
        subjects.iter().map(|s| s.duration_months).collect(),
        subjects.iter().map(Subject::event).collect(),
        rows,
        cols.iter().map(CodedColumn::name).collect(),
    )?;
    dm.coding = cols;
    dm.formula = formula.to_vec();
    Ok(dm)
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    /// Negative Hessian of the log partial likelihood.
    information: DMatrix<f64>,
}

fn check_beta(beta: &[f64], dm: &DesignMatrix) -> Result<(), CoxError> {
    if beta.len() != dm.dim {
        return Err(CoxError::Dimension {
            expected: dm.dim,
            got: beta.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(CoxError::NonFinite);
    }
    Ok(())
}

fn evaluate(beta: &[f64], dm: &DesignMatrix, ties: Ties) -> Evaluation {
    let p = dm.dim;
    let eta: Vec<f64> = (0..dm.len())
        .map(|i| dm.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let risk: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut loglik = 0.0;
    let mut score = DVector::<f64>::zeros(p);
    let mut information = DMatrix::<f64>::zeros(p, p);

    let order = &dm.order;
    let mut i = 0;
    while i < order.len() {
        let t = dm.durations[order[i]];
        let mut d0 = 0.0;
        let mut d1 = DVector::<f64>::zeros(p);
        let mut d2 = DMatrix::<f64>::zeros(p, p);
        let mut deaths = 0usize;
        let mut j = i;
        while j < order.len() && dm.durations[order[j]] == t {
            let k = order[j];
            let x = DVector::from_column_slice(dm.row(k));
            let r = risk[k];
            s0 += r;
            s1.axpy(r, &x, 1.0);
            s2.ger(r, &x, &x, 1.0);
            if dm.events[k] {
                deaths += 1;
                d0 += r;
                d1.axpy(r, &x, 1.0);
                d2.ger(r, &x, &x, 1.0);
                loglik += eta[k];
                score += &x;
            }
            j += 1;
        }
        for l in 0..deaths {
            let f = match ties {
                Ties::Efron => l as f64 / deaths as f64,
                Ties::Breslow => 0.0,
            };
            let den = s0 - f * d0;
            loglik -= den.ln() + shift;
            let mean = (&s1 - &d1 * f) / den;
            score -= &mean;
            information += (&s2 - &d2 * f) / den - &mean * mean.transpose();
        }
        i = j;
    }
    Evaluation {
        loglik,
        score,
        information,
    }
}

/// Log partial likelihood at `beta`.
pub fn partial_log_likelihood(beta: &[f64], dm: &DesignMatrix, ties: Ties) -> Result<f64, CoxError> {
    check_beta(beta, dm)?;
    Ok(evaluate(beta, dm, ties).loglik)
}

/// Analytic gradient of [`partial_log_likelihood`].
pub fn score(beta: &[f64], dm: &DesignMatrix, ties: Ties) -> Result<Vec<f64>, CoxError> {
    check_beta(beta, dm)?;
    Ok(evaluate(beta, dm, ties).score.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub ties: Ties,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            ties: Ties::Efron,
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub hazard_ratios: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ties: Ties,
}

impl CoxFit {
    /// Derives hazard ratios, 95% Wald intervals and Wald p-values from the
    /// coefficient vector and its covariance.
    pub fn from_estimate(names: Vec<String>, beta: Vec<f64>, covariance: Vec<Vec<f64>>) -> CoxFit {
        let normal = Normal::standard();
        let std_errors: Vec<f64> = (0..beta.len()).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
        let hazard_ratios = beta.iter().map(|b| b.exp()).collect();
        let ci_low = beta.iter().zip(&std_errors).map(|(b, s)| (b - Z_975 * s).exp()).collect();
        let ci_high = beta.iter().zip(&std_errors).map(|(b, s)| (b + Z_975 * s).exp()).collect();
        let p_values = beta
            .iter()
            .zip(&std_errors)
            .map(|(b, s)| (2.0 * normal.sf((b / s).abs())).min(1.0))
            .collect();
        CoxFit {
            names,
            beta,
            covariance,
            std_errors,
            hazard_ratios,
            ci_low,
            ci_high,
            p_values,
            log_likelihood: f64::NAN,
            null_log_likelihood: f64::NAN,
            iterations: 0,
            converged: false,
            ties: Ties::Efron,
        }
    }
}

pub fn fit_cox(dm: &DesignMatrix, options: &CoxOptions) -> Result<CoxFit, CoxError> {
    if !dm.events.iter().any(|&e| e) {
        return Err(CoxError::NoEvents);
    }
    for j in 0..dm.dim {
        let first = dm.row(0)[j];
        if (0..dm.len()).all(|i| dm.row(i)[j] == first) {
            return Err(CoxError::NonIdentifiable(dm.names[j].clone()));
        }
    }

    let p = dm.dim;
    let mut beta = DVector::<f64>::zeros(p);
    let mut current = evaluate(beta.as_slice(), dm, options.ties);
    let null_log_likelihood = current.loglik;
    let mut iterations = 0;
    let mut converged = false;

    let diverging = |b: &DVector<f64>| b.iter().position(|v| v.abs() > MAX_ABS_BETA || !v.is_finite());

    while iterations < options.max_iter {
        iterations += 1;
        let Some(chol) = current.information.clone().cholesky() else {
            let j = diverging(&beta).unwrap_or(0);
            return Err(CoxError::MonotoneLikelihood(dm.names[j].clone()));
        };
        let step = chol.solve(&current.score);

        let slack = 1e-12 * current.loglik.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let candidate = &beta + &step * scale;
            let eval = evaluate(candidate.as_slice(), dm, options.ties);
            if eval.loglik.is_finite() && eval.loglik >= current.loglik - slack {
                accepted = Some((candidate, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((next_beta, next)) = accepted else {
            converged = current.score.amax() < options.tol;
            break;
        };
        let change = (next.loglik - current.loglik).abs();
        beta = next_beta;
        current = next;
        if let Some(j) = diverging(&beta) {
            return Err(CoxError::MonotoneLikelihood(dm.names[j].clone()));
        }
        if current.score.amax() < options.tol && change <= options.tol * current.loglik.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let covariance = current
        .information
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| CoxError::MonotoneLikelihood(dm.names[diverging(&beta).unwrap_or(0)].clone()))?;
    let cov_rows = (0..p).map(|i| (0..p).map(|j| covariance[(i, j)]).collect()).collect();

    let mut fit = CoxFit::from_estimate(dm.names.clone(), beta.iter().copied().collect(), cov_rows);
    fit.log_likelihood = current.loglik;
    fit.null_log_likelihood = null_log_likelihood;
    fit.iterations = iterations;
    fit.converged = converged;
    fit.ties = options.ties;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardRow {
    pub attribute: String,
    pub level: String,
    pub n: usize,
    pub hazard_ratio: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub reference: bool,
}

/// One reference row (HR 1) followed by one row per coded level, per attribute.
///
/// Designs built without attribute coding get one row per column, with `n`
/// the number of subjects whose covariate is non-zero.
pub fn hazard_table(fit: &CoxFit, dm: &DesignMatrix, subjects: &[Subject]) -> Vec<HazardRow> {
    let count = |attr: Attribute, level: &str| {
        subjects.iter().filter(|s| attr.level_of(&s.attributes) == level).count()
    };
    let column_row = |j: usize, attribute: String, level: String, n: usize| HazardRow {
        attribute,
        level,
        n,
        hazard_ratio: fit.hazard_ratios[j],
        ci_low: Some(fit.ci_low[j]),
        ci_high: Some(fit.ci_high[j]),
        p_value: Some(fit.p_values[j]),
        reference: false,
    };

    if dm.coding.is_empty() {
        return (0..dm.dim)
            .map(|j| {
                let n = (0..dm.len()).filter(|&i| dm.row(i)[j] != 0.0).count();
                column_row(j, dm.names[j].clone(), String::new(), n)
            })
            .collect();
    }

    let mut rows = Vec::new();
    for &attr in &dm.formula {
        rows.push(HazardRow {
            attribute: attr.column().to_string(),
            level: attr.reference().to_string(),
            n: count(attr, attr.reference()),
            hazard_ratio: 1.0,
            ci_low: None,
            ci_high: None,
            p_value: None,
            reference: true,
        });
        for (j, col) in dm.coding.iter().enumerate().filter(|(_, c)| c.attribute == attr) {
            rows.push(column_row(j, attr.column().to_string(), col.level.to_string(), count(attr, col.level)));
        }
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `attribute,level,n,hazard_ratio,ci_low,ci_high,p_value`; reference rows
/// leave the interval and p-value empty.
pub fn write_hazard_table<W: Write>(rows: &[HazardRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attribute", "level", "n", "hazard_ratio", "ci_low", "ci_high", "p_value"])?;
    for r in rows {
        w.write_record([
            r.attribute.clone(),
            r.level.clone(),
            r.n.to_string(),
            r.hazard_ratio.to_string(),
            opt(r.ci_low),
            opt(r.ci_high),
            opt(r.p_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}
