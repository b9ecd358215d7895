//! The five categorical project attributes and their indicator coding.
//!
//! Both regression models use the same coding: each attribute contributes one
//! 0/1 column per observed non-reference level. Reference levels are the
//! "healthy" side of each attribute, so hazard ratios above 1 read as "more
//! likely to be abandoned than the reference".

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Attributes, Subject};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodingError {
    #[error("attribute `{attribute}` has a single observed level `{level}`")]
    SingleLevel { attribute: &'static str, level: &'static str },
    #[error("reference level `{level}` of attribute `{attribute}` is not observed")]
    MissingReference { attribute: &'static str, level: &'static str },
    #[error("no subjects to encode")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    MajorReleases,
    Host,
    MultiRepo,
    HighAuthorCount,
    HighRevFrequency,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::MajorReleases,
        Attribute::Host,
        Attribute::MultiRepo,
        Attribute::HighAuthorCount,
        Attribute::HighRevFrequency,
    ];

    /// Column name in the cohort file.
    pub fn column(self) -> &'static str {
        match self {
            Attribute::MajorReleases => "major_releases",
            Attribute::Host => "host",
            Attribute::MultiRepo => "multi_repo",
            Attribute::HighAuthorCount => "high_author_count",
            Attribute::HighRevFrequency => "high_rev_frequency",
        }
    }

    pub fn levels(self) -> &'static [&'static str] {
        match self {
            Attribute::Host => &["github", "pypi", "debian"],
            _ => &["true", "false"],
        }
    }

    pub fn reference(self) -> &'static str {
        match self {
            Attribute::MajorReleases | Attribute::MultiRepo | Attribute::HighAuthorCount => "true",
            Attribute::HighRevFrequency => "false",
            Attribute::Host => "github",
        }
    }

    pub fn level_of(self, a: &Attributes) -> &'static str {
        let b = |v: bool| if v { "true" } else { "false" };
        match self {
            Attribute::MajorReleases => b(a.has_major_release),
            Attribute::Host => a.host.as_str(),
            Attribute::MultiRepo => b(a.multi_repo),
            Attribute::HighAuthorCount => b(a.high_author_count),
            Attribute::HighRevFrequency => b(a.high_rev_frequency),
        }
    }

    /// Non-reference levels that get an indicator column, checked against
    /// the levels actually present in `subjects`.
    pub fn coded_levels(self, subjects: &[Subject]) -> Result<Vec<&'static str>, CodingError> {
        let first = subjects.first().ok_or(CodingError::Empty)?;
        let present: Vec<&'static str> = self
            .levels()
            .iter()
            .copied()
            .filter(|l| subjects.iter().any(|s| self.level_of(&s.attributes) == *l))
            .collect();
        if present.len() < 2 {
            return Err(CodingError::SingleLevel {
                attribute: self.column(),
                level: self.level_of(&first.attributes),
            });
        }
        if !present.contains(&self.reference()) {
            return Err(CodingError::MissingReference {
                attribute: self.column(),
                level: self.reference(),
            });
        }
        Ok(present.into_iter().filter(|l| *l != self.reference()).collect())
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.column() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// One indicator column of a design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CodedColumn {
    pub attribute: Attribute,
    pub level: &'static str,
}

impl CodedColumn {
    pub fn name(&self) -> String {
        format!("{}={}", self.attribute.column(), self.level)
    }

    pub fn value(&self, a: &Attributes) -> f64 {
        if self.attribute.level_of(a) == self.level {
            1.0
        } else {
            0.0
        }
    }
}

/// Indicator columns for `formula`, in formula order.
pub fn coding(subjects: &[Subject], formula: &[Attribute]) -> Result<Vec<CodedColumn>, CodingError> {
    let mut cols = Vec::new();
    for &attribute in formula {
        for level in attribute.coded_levels(subjects)? {
            cols.push(CodedColumn { attribute, level });
        }
    }
    Ok(cols)
}
