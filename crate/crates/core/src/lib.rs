//! Survival analysis of open-source project lifetimes.
//!
//! The crate turns revision logs into a right-censored cohort
//! ([`cohort`]) and analyses it three ways: Kaplan-Meier curves with
//! log-rank tests ([`km`]), Cox proportional-hazards regression
//! ([`coxph`]) and a Bayesian exponential model sampled with adaptive
//! Metropolis ([`bayes`]). [`pipeline`] wires the stages together and
//! writes CSV, SVG and JSON artifacts.

pub mod attribute;
pub mod bayes;
pub mod cohort;
pub mod config;
pub mod coxph;
pub mod km;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod synth;

pub use attribute::Attribute;
pub use cohort::{Cohort, Host, ProjectRecord, StudyWindow, Subject};
pub use config::RunConfig;
pub use pipeline::{run, RunError, Stage};

// The guide's chapters are compiled as doctests so their snippets cannot rot.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cohort.md")]
    mod cohort {}
    #[doc = include_str!("../../../book/src/kaplan-meier.md")]
    mod kaplan_meier {}
    #[doc = include_str!("../../../book/src/cox.md")]
    mod cox {}
    #[doc = include_str!("../../../book/src/bayes.md")]
    mod bayes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
