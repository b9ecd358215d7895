//! The JSON run summary.

use serde::Serialize;

use crate::cohort::{CohortSummary, StudyWindow};
use crate::coxph::HazardRow;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRankRow {
    pub attribute: String,
    /// `omnibus` or `<level> vs <level>`.
    pub comparison: String,
    pub groups: Vec<String>,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxModelInfo {
    pub attributes: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxSection {
    pub mode: String,
    pub ties: String,
    pub models: Vec<CoxModelInfo>,
    pub hazard_table: Vec<HazardRow>,
    /// The proportional-hazards assumption is not tested by this tool.
    pub caveat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub month: f64,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSurvival {
    pub group: String,
    pub survival: Vec<SurvivalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSection {
    pub attribute: String,
    /// Indicator coding of the coefficients (intercept = reference level).
    pub coding: Vec<String>,
    pub coefficients: Vec<CoefficientSummary>,
    pub acceptance_rate: Vec<f64>,
    pub groups: Vec<GroupSurvival>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub stage: String,
    pub window: StudyWindow,
    pub cohort: CohortSummary,
    pub rejected_rows: usize,
    pub log_rank: Option<Vec<LogRankRow>>,
    pub cox: Option<CoxSection>,
    pub posterior: Option<Vec<PosteriorSection>>,
    pub warnings: Vec<String>,
}

/// Assembles the summary; stages that did not run are `None` and serialize
/// as `null`.
pub fn emit_summary(
    stage: &str,
    window: StudyWindow,
    cohort: CohortSummary,
    log_rank: Option<Vec<LogRankRow>>,
    cox: Option<CoxSection>,
    posterior: Option<Vec<PosteriorSection>>,
) -> Summary {
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        stage: stage.to_string(),
        window,
        cohort,
        rejected_rows: 0,
        log_rank,
        cox,
        posterior,
        warnings: Vec::new(),
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{build_study_window, Subject};
    use chrono::NaiveDate;

    #[test]
    fn missing_stages_are_null() {
        let w = build_study_window(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(), 165, 28);
        let s = emit_summary("km", w, CohortSummary::from_subjects(&[] as &[Subject]), Some(vec![]), None, None);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert!(v["posterior"].is_null());
        assert!(v["cox"].is_null());
        assert!(v["log_rank"].is_array());
        assert!(v["cohort"]["censored_fraction"].is_null());
        assert_eq!(v["window"]["start"], "2005-05-09");
    }
}
