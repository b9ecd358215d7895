//! Stage orchestration and artifact emission.
//!
//! Every stage computes all of its artifacts in memory first and only then
//! writes them, each through a temporary file renamed into place. A failing
//! run therefore leaves no new or truncated files behind.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::attribute::Attribute;
use crate::bayes::{self, PosteriorDraws, PosteriorSurvival};
use crate::cohort::{self, Cohort, CohortSummary, ColumnMap, Subject};
use crate::config::{CoxMode, RunConfig};
use crate::coxph::{self, HazardRow};
use crate::km::{self, Band, SurvivalCurve};
use crate::report::{
    emit_summary, CoefficientSummary, CoxModelInfo, CoxSection, GroupSurvival, LogRankRow, PosteriorSection,
    Summary, SurvivalPoint,
};
use crate::svg::{self, Axes, PlotKind, PlotSpec, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cohort,
    Km,
    Cox,
    Bayes,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Cohort => "cohort",
            Stage::Km => "km",
            Stage::Cox => "cox",
            Stage::Bayes => "bayes",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::Cohort, Stage::Km, Stage::Cox, Stage::Bayes, Stage::All]
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Estimator(String),
    #[error("{0}")]
    Output(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input(_) => 2,
            RunError::Config(_) => 3,
            RunError::Estimator(_) => 4,
            RunError::Output(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Input(_) => "input",
            RunError::Config(_) => "config",
            RunError::Estimator(_) => "estimator",
            RunError::Output(_) => "output",
        }
    }

    /// Single-line JSON object for standard error.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: Summary,
}

/// In-memory artifacts, written together at the end of a run.
#[derive(Default)]
struct Artifacts(Vec<(String, Vec<u8>)>);

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.0.push((name.into(), bytes));
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| RunError::Output(format!("{name}: {e}")))?;
        self.add(name, buf);
        Ok(())
    }

    fn write_all(self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        let out_err = |e: std::io::Error| RunError::Output(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(out_err)?;
        let mut written = Vec::with_capacity(self.0.len());
        for (name, bytes) in self.0 {
            let target = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(out_err)?;
            tmp.write_all(&bytes).map_err(out_err)?;
            tmp.as_file().sync_all().map_err(out_err)?;
            tmp.persist(&target).map_err(|e| out_err(e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, RunError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| RunError::Input(format!("cannot read {}: {e}", path.display())))
}

struct Loaded {
    subjects: Vec<Subject>,
    cohort: Option<Cohort>,
    rejected: Vec<cohort::RowError>,
}

fn load_from_logs(config: &RunConfig) -> Result<Loaded, RunError> {
    let delim = config.io.delimiter as u8;
    let input = |what: &Path, e: cohort::CohortError| RunError::Input(format!("{}: {e}", what.display()));
    // Open everything up front so a missing file fails before any parsing.
    let rev_file = open(&config.io.revisions)?;
    let rel_file = open(&config.io.releases)?;
    let org_file = open(&config.io.origins)?;

    let revisions = cohort::parse_revision_log(rev_file, &ColumnMap::default(), delim)
        .map_err(|e| input(&config.io.revisions, e))?;
    let releases = cohort::parse_release_log(rel_file, delim).map_err(|e| input(&config.io.releases, e))?;
    let origins = cohort::parse_origin_log(org_file, delim).map_err(|e| input(&config.io.origins, e))?;

    let mut rejected = revisions.rejected;
    rejected.extend(releases.rejected);
    let built = cohort::cohort_from_logs(
        revisions.items,
        &releases.items,
        &origins,
        config.study_window(),
        &config.thresholds,
    )
    .map_err(|e| RunError::Input(e.to_string()))?;
    Ok(Loaded {
        subjects: built.subjects(),
        cohort: Some(built),
        rejected,
    })
}

fn load(stage: Stage, config: &RunConfig) -> Result<Loaded, RunError> {
    match (&config.io.cohort, stage) {
        (Some(path), Stage::Km | Stage::Cox | Stage::Bayes) => {
            let subjects = cohort::read_cohort_csv(open(path)?)
                .map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
            Ok(Loaded {
                subjects,
                cohort: None,
                rejected: Vec::new(),
            })
        }
        _ => load_from_logs(config),
    }
}

/// Per-level Kaplan-Meier curves and log-rank tests for one attribute.
pub struct KmAnalysis {
    pub attribute: Attribute,
    pub curves: Vec<(SurvivalCurve, Band)>,
    pub tests: Vec<LogRankRow>,
    pub warnings: Vec<String>,
}

/// Subjects of one level as (durations, event flags).
fn split_level(subjects: &[Subject], attribute: Attribute, level: &str) -> (Vec<f64>, Vec<bool>) {
    subjects
        .iter()
        .filter(|s| attribute.level_of(&s.attributes) == level)
        .map(|s| (s.duration_months, s.event()))
        .unzip()
}

pub fn km_by_attribute(subjects: &[Subject], attribute: Attribute, level: f64) -> Result<KmAnalysis, km::KmError> {
    let groups: Vec<(&'static str, Vec<f64>, Vec<bool>)> = attribute
        .levels()
        .iter()
        .map(|l| {
            let (d, e) = split_level(subjects, attribute, l);
            (*l, d, e)
        })
        .filter(|(_, d, _)| !d.is_empty())
        .collect();
    let mut curves = Vec::with_capacity(groups.len());
    for (label, d, e) in &groups {
        let curve = km::fit_km_labeled(d, e, label)?;
        let band = km::greenwood_band(&curve, level)?;
        curves.push((curve, band));
    }

    let mut tests = Vec::new();
    let mut warnings = Vec::new();
    let mut push_test = |comparison: String, members: &[&(&'static str, Vec<f64>, Vec<bool>)]| {
        let input: Vec<(&[f64], &[bool])> = members.iter().map(|g| (g.1.as_slice(), g.2.as_slice())).collect();
        match km::log_rank_test(&input) {
            Ok(r) => tests.push(LogRankRow {
                attribute: attribute.column().to_string(),
                comparison,
                groups: members.iter().map(|g| g.0.to_string()).collect(),
                statistic: r.statistic,
                degrees_of_freedom: r.degrees_of_freedom,
                p_value: r.p_value,
            }),
            Err(e) => warnings.push(format!("{} {comparison}: log-rank test skipped: {e}", attribute.column())),
        }
    };
    if groups.len() >= 2 {
        push_test("omnibus".to_string(), &groups.iter().collect::<Vec<_>>());
    }
    if groups.len() >= 3 {
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                push_test(format!("{} vs {}", groups[i].0, groups[j].0), &[&groups[i], &groups[j]]);
            }
        }
    }
    if groups.len() < 2 {
        warnings.push(format!("{}: single observed level, no log-rank test", attribute.column()));
    }
    Ok(KmAnalysis {
        attribute,
        curves,
        tests,
        warnings,
    })
}

fn x_range(config: &RunConfig, subjects: &[Subject]) -> (f64, f64) {
    let longest = subjects.iter().map(|s| s.duration_months).fold(0.0, f64::max);
    (0.0, f64::from(config.window.total_months).max(longest).max(1.0))
}

fn km_plot(analysis: &KmAnalysis, x: (f64, f64)) -> PlotSpec {
    let series = analysis
        .curves
        .iter()
        .map(|(c, b)| Series {
            label: format!("{} (n={})", c.label, c.at_risk.first().copied().unwrap_or(c.censor_times.len())),
            points: c.event_times.iter().copied().zip(c.survival.iter().copied()).collect(),
            band: Some(
                c.event_times
                    .iter()
                    .zip(b.lower.iter().zip(&b.upper))
                    .map(|(&t, (&lo, &hi))| (t, lo, hi))
                    .collect(),
            ),
            censor_marks: c.censor_times.iter().map(|&t| (t, km::survival_at(c, t))).collect(),
            thin_curves: Vec::new(),
        })
        .collect();
    let annotation = analysis
        .tests
        .iter()
        .find(|t| t.comparison == "omnibus")
        .map(|t| format!("log-rank p {}", svg::format_p(t.p_value)));
    PlotSpec {
        kind: PlotKind::KmSteps,
        title: format!("Kaplan-Meier: {}", analysis.attribute.column()),
        series,
        axes: Axes {
            x_label: "months".into(),
            y_label: "survival probability".into(),
            x_range: x,
            y_range: (0.0, 1.0),
        },
        annotation,
    }
}

fn run_km(config: &RunConfig, subjects: &[Subject], out: &mut Artifacts, warnings: &mut Vec<String>) -> Result<Vec<LogRankRow>, RunError> {
    let x = x_range(config, subjects);
    let mut all_tests = Vec::new();
    for &attr in &config.attributes {
        let analysis = km_by_attribute(subjects, attr, config.km.level).map_err(|e| RunError::Estimator(format!("km {attr}: {e}")))?;
        let name = attr.column();
        out.csv(&format!("km_{name}.csv"), |b| km::write_curve_rows(&analysis.curves, b))?;
        let curves: Vec<SurvivalCurve> = analysis.curves.iter().map(|(c, _)| c.clone()).collect();
        out.csv(&format!("km_{name}_censor.csv"), |b| km::write_censor_rows(&curves, b))?;
        let svg = svg::render_step_svg(&km_plot(&analysis, x)).map_err(|e| RunError::Estimator(e.to_string()))?;
        out.add(format!("km_{name}.svg"), svg.into_bytes());
        warnings.extend(analysis.warnings);
        all_tests.extend(analysis.tests);
    }
    out.csv("logrank.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["attribute", "comparison", "statistic", "df", "p_value"])?;
        for t in &all_tests {
            w.write_record([
                t.attribute.clone(),
                t.comparison.clone(),
                t.statistic.to_string(),
                t.degrees_of_freedom.to_string(),
                t.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(all_tests)
}

fn run_cox(config: &RunConfig, subjects: &[Subject], out: &mut Artifacts, warnings: &mut Vec<String>) -> Result<CoxSection, RunError> {
    let formulas: Vec<Vec<Attribute>> = match config.cox.mode {
        CoxMode::Joint => vec![config.attributes.clone()],
        CoxMode::PerAttribute => config.attributes.iter().map(|a| vec![*a]).collect(),
    };
    let opts = config.cox_options();
    let mut rows: Vec<HazardRow> = Vec::new();
    let mut models = Vec::new();
    for formula in formulas {
        let label = formula.iter().map(|a| a.column()).collect::<Vec<_>>().join(" + ");
        let est = |e: coxph::CoxError| RunError::Estimator(format!("cox [{label}]: {e}"));
        let dm = coxph::encode_covariates(subjects, &formula).map_err(est)?;
        let fit = coxph::fit_cox(&dm, &opts).map_err(est)?;
        if !fit.converged {
            warnings.push(format!("cox [{label}]: not converged after {} iterations", fit.iterations));
        }
        rows.extend(coxph::hazard_table(&fit, &dm, subjects));
        models.push(CoxModelInfo {
            attributes: formula.iter().map(|a| a.column().to_string()).collect(),
            converged: fit.converged,
            iterations: fit.iterations,
            log_likelihood: fit.log_likelihood,
            null_log_likelihood: fit.null_log_likelihood,
        });
    }
    out.csv("hazard_table.csv", |b| coxph::write_hazard_table(&rows, b))?;
    let forest = svg::render_forest(&rows, "Cox proportional hazards").map_err(|e| RunError::Estimator(e.to_string()))?;
    out.add("cox_forest.svg", forest.into_bytes());
    Ok(CoxSection {
        mode: match config.cox.mode {
            CoxMode::Joint => "joint".into(),
            CoxMode::PerAttribute => "per_attribute".into(),
        },
        ties: format!("{:?}", opts.ties).to_lowercase(),
        models,
        hazard_table: rows,
        caveat: "proportional-hazards assumption not tested".into(),
    })
}

/// Covariate vector selecting `level` of the model's single attribute.
fn level_profile(model: &bayes::ExpSurvModel, level: &str) -> Vec<f64> {
    std::iter::once(1.0)
        .chain(model.coding().iter().map(|c| if c.level == level { 1.0 } else { 0.0 }))
        .collect()
}

/// Posterior fit of `intercept + attribute indicators`, with survival curves
/// per observed level.
pub struct BayesAnalysis {
    pub attribute: Attribute,
    pub model: bayes::ExpSurvModel,
    pub draws: PosteriorDraws,
    pub diagnostics: bayes::Diagnostics,
    pub curves: Vec<(String, PosteriorSurvival)>,
}

pub fn bayes_by_attribute(config: &RunConfig, subjects: &[Subject], attribute: Attribute) -> Result<BayesAnalysis, bayes::BayesError> {
    let model = bayes::model_for(subjects, &[attribute], config.bayes.prior_sd)?;
    let draws = bayes::sample_posterior(&model, &config.sampler())?;
    let diagnostics = bayes::diagnostics(&draws)?;
    let grid = bayes::time_grid(f64::from(config.window.total_months), config.bayes.grid_step);
    let mut curves = Vec::new();
    let levels = std::iter::once(attribute.reference()).chain(model.coding().iter().map(|c| c.level));
    for level in levels {
        let profile = level_profile(&model, level);
        let curve = bayes::posterior_survival(&draws, &profile, &grid, config.bayes.plot_curves)?;
        curves.push((level.to_string(), curve));
    }
    Ok(BayesAnalysis {
        attribute,
        model,
        draws,
        diagnostics,
        curves,
    })
}

fn run_bayes(config: &RunConfig, subjects: &[Subject], out: &mut Artifacts, warnings: &mut Vec<String>) -> Result<Vec<PosteriorSection>, RunError> {
    let mut sections = Vec::new();
    for &attr in &config.attributes {
        let name = attr.column();
        let a = bayes_by_attribute(config, subjects, attr).map_err(|e| RunError::Estimator(format!("bayes {name}: {e}")))?;
        warnings.extend(a.draws.warnings.iter().map(|w| format!("bayes {name}: {w}")));
        warnings.extend(a.diagnostics.warnings.iter().map(|w| format!("bayes {name}: {w}")));

        out.csv(&format!("posterior_{name}.csv"), |b| bayes::write_posterior_rows(&a.curves, b))?;
        out.csv(&format!("draws_{name}.csv"), |b| bayes::write_draws(&a.draws, b))?;

        let series = a
            .curves
            .iter()
            .map(|(label, c)| Series {
                label: label.clone(),
                points: c.times.iter().copied().zip(c.mean_curve.iter().copied()).collect(),
                band: Some(
                    c.times
                        .iter()
                        .zip(c.q025_curve.iter().zip(&c.q975_curve))
                        .map(|(&t, (&lo, &hi))| (t, lo, hi))
                        .collect(),
                ),
                censor_marks: Vec::new(),
                thin_curves: c
                    .sample_curves
                    .iter()
                    .map(|s| c.times.iter().copied().zip(s.iter().copied()).collect())
                    .collect(),
            })
            .collect();
        let spec = PlotSpec {
            kind: PlotKind::PosteriorBands,
            title: format!("Posterior survival: {name}"),
            series,
            axes: Axes {
                x_label: "months".into(),
                y_label: "survival probability".into(),
                x_range: (0.0, f64::from(config.window.total_months).max(1.0)),
                y_range: (0.0, 1.0),
            },
            annotation: Some("mean with 2.5% / 97.5% quantiles".into()),
        };
        let svg = svg::render_step_svg(&spec).map_err(|e| RunError::Estimator(e.to_string()))?;
        out.add(format!("posterior_{name}.svg"), svg.into_bytes());

        let months = &config.bayes.report_months;
        let mut groups = Vec::new();
        for (label, _) in &a.curves {
            let s = bayes::posterior_survival(&a.draws, &level_profile(&a.model, label), &sorted_unique(months), 0)
                .map_err(|e| RunError::Estimator(format!("bayes {name}: {e}")))?;
            groups.push(GroupSurvival {
                group: label.clone(),
                survival: (0..s.times.len())
                    .map(|i| SurvivalPoint {
                        month: s.times[i],
                        mean: s.mean_curve[i],
                        q025: s.q025_curve[i],
                        q975: s.q975_curve[i],
                    })
                    .collect(),
            });
        }
        sections.push(PosteriorSection {
            attribute: name.to_string(),
            coding: a.model.names().to_vec(),
            coefficients: (0..a.draws.dim)
                .map(|j| CoefficientSummary {
                    name: a.model.names()[j].clone(),
                    mean: a.draws.mean(j),
                    q025: a.draws.quantile(j, 0.025),
                    q975: a.draws.quantile(j, 0.975),
                    rhat: a.diagnostics.rhat[j],
                    ess: a.diagnostics.ess[j],
                })
                .collect(),
            acceptance_rate: a.draws.acceptance_rate.clone(),
            groups,
        });
    }
    Ok(sections)
}

fn sorted_unique(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Runs one stage (or all of them) and writes its artifacts into
/// `config.io.output_dir`.
pub fn run(stage: Stage, config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let loaded = load(stage, config)?;
    let subjects = &loaded.subjects;
    let mut out = Artifacts::default();
    let mut warnings: Vec<String> = loaded
        .rejected
        .iter()
        .map(|r| format!("skipped input row: line {}: {}", r.line, r.message))
        .collect();

    let does = |s: Stage| stage == s || stage == Stage::All;
    if does(Stage::Cohort) {
        out.csv("cohort.csv", |b| {
            cohort::write_cohort_csv(subjects, b).map_err(|e| match e {
                cohort::CohortError::Csv(c) => c,
                other => csv::Error::from(std::io::Error::other(other.to_string())),
            })
        })?;
        if let Some(c) = loaded.cohort.as_ref().filter(|c| !c.is_empty()) {
            let strips = svg::render_duration_strips(c).map_err(|e| RunError::Estimator(e.to_string()))?;
            out.add("cohort_strips.svg", strips.into_bytes());
        }
    }
    if stage != Stage::Cohort && subjects.is_empty() {
        return Err(RunError::Estimator("cohort is empty".into()));
    }
    let log_rank = if does(Stage::Km) {
        Some(run_km(config, subjects, &mut out, &mut warnings)?)
    } else {
        None
    };
    let cox = if does(Stage::Cox) {
        Some(run_cox(config, subjects, &mut out, &mut warnings)?)
    } else {
        None
    };
    let posterior = if does(Stage::Bayes) {
        Some(run_bayes(config, subjects, &mut out, &mut warnings)?)
    } else {
        None
    };

    let mut summary = emit_summary(
        stage.name(),
        config.study_window(),
        CohortSummary::from_subjects(subjects),
        log_rank,
        cox,
        posterior,
    );
    summary.rejected_rows = loaded.rejected.len();
    summary.warnings = warnings.clone();
    let summary_name = if stage == Stage::All {
        "summary.json".to_string()
    } else {
        format!("summary_{}.json", stage.name())
    };
    out.add(summary_name, summary.to_json().into_bytes());

    let output_dir = config.io.output_dir.clone();
    let artifacts = out.write_all(&output_dir)?;
    Ok(RunOutcome {
        output_dir,
        artifacts,
        warnings,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, BundleSpec};

    fn small_bundle(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        let spec = BundleSpec {
            projects: 60,
            ..BundleSpec::default()
        };
        synth::write_bundle(&synth::synthetic_bundle(&spec, &cfg.study_window()), dir).unwrap();
        cfg.resolve_paths(dir);
        cfg.io.output_dir = dir.join("out");
        cfg.bayes.warmup = 200;
        cfg.bayes.draws = 200;
        cfg
    }

    #[test]
    fn stage_names_round_trip() {
        for s in [Stage::Cohort, Stage::Km, Stage::Cox, Stage::Bayes, Stage::All] {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("plot".parse::<Stage>().is_err());
    }

    #[test]
    fn error_codes_and_json() {
        let e = RunError::Estimator("boom".into());
        assert_eq!(e.exit_code(), 4);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "estimator");
        assert_eq!(v["error"]["message"], "boom");
        assert_eq!(RunError::Input(String::new()).exit_code(), 2);
        assert_eq!(RunError::Config(String::new()).exit_code(), 3);
        assert_eq!(RunError::Output(String::new()).exit_code(), 1);
    }

    #[test]
    fn cohort_stage_summary_matches_written_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_bundle(dir.path());
        let outcome = run(Stage::Cohort, &cfg).unwrap();
        let written = cohort::read_cohort_csv(File::open(dir.path().join("out/cohort.csv")).unwrap()).unwrap();
        assert_eq!(outcome.summary.cohort, CohortSummary::from_subjects(&written));
        assert!(outcome.summary.log_rank.is_none() && outcome.summary.posterior.is_none());
        assert!(dir.path().join("out/summary_cohort.json").exists());
    }

    #[test]
    fn analysis_stages_read_a_written_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_bundle(dir.path());
        run(Stage::Cohort, &cfg).unwrap();
        cfg.io.cohort = Some(dir.path().join("out/cohort.csv"));
        cfg.io.revisions = dir.path().join("missing.csv");
        let outcome = run(Stage::Bayes, &cfg).unwrap();
        let post = outcome.summary.posterior.unwrap();
        assert_eq!(post.len(), Attribute::ALL.len());
        for section in &post {
            for g in &section.groups {
                let months: Vec<f64> = g.survival.iter().map(|p| p.month).collect();
                assert_eq!(months, vec![120.0, 150.0, 165.0]);
            }
        }
    }

    #[test]
    fn estimator_failure_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_bundle(dir.path());
        let rows = "project_id,duration_months,censored,host,major_releases,high_rev_frequency,multi_repo,high_author_count\n\
                    a,1,false,pypi,true,false,true,true\nb,2,false,pypi,false,false,true,true\n";
        std::fs::write(dir.path().join("c.csv"), rows).unwrap();
        cfg.io.cohort = Some(dir.path().join("c.csv"));
        let err = run(Stage::Cox, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(!cfg.io.output_dir.exists());
    }

    #[test]
    fn host_gets_pairwise_tests() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_bundle(dir.path());
        let outcome = run(Stage::Km, &cfg).unwrap();
        let tests = outcome.summary.log_rank.unwrap();
        let host: Vec<&str> = tests.iter().filter(|t| t.attribute == "host").map(|t| t.comparison.as_str()).collect();
        assert_eq!(host, ["omnibus", "github vs pypi", "github vs debian", "pypi vs debian"]);
        assert_eq!(tests.iter().filter(|t| t.comparison == "omnibus").count(), 5);
    }
}
