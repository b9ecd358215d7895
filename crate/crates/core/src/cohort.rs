//! Revision-log ingestion and construction of the right-censored study cohort.
//!
//! A project's observed lifetime runs from its first revision inside the
//! study window to its last revision inside the window. Its death is
//! observed only when that last in-window revision is also the last revision
//! anywhere in the log; otherwise the project is right-censored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: unknown host `{token}` (expected github, gitlab, pypi or debian)")]
    UnknownHost { line: u64, token: String },
    #[error("events for project `{0}` are not sorted by timestamp")]
    Unsorted(String),
    #[error("duplicate project_id `{0}` in cohort")]
    DuplicateProject(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Hosting service a revision was recorded on. GitLab is folded into `Github`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Host {
    Github,
    Pypi,
    Debian,
}

impl Host {
    pub const ALL: [Host; 3] = [Host::Github, Host::Pypi, Host::Debian];

    pub fn as_str(self) -> &'static str {
        match self {
            Host::Github => "github",
            Host::Pypi => "pypi",
            Host::Debian => "debian",
        }
    }
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Host {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "github" | "gitlab" => Ok(Host::Github),
            "pypi" => Ok(Host::Pypi),
            "debian" => Ok(Host::Debian),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevisionEvent {
    pub project_id: String,
    pub timestamp: DateTime<Utc>,
    pub author_id: String,
    pub host: Host,
}

/// The study frame: `total_months` months of `month_length_days` days ending
/// (exclusively) at midnight UTC on `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub total_months: u32,
    pub month_length_days: u32,
}

pub fn build_study_window(end: NaiveDate, total_months: u32, month_length_days: u32) -> StudyWindow {
    let days = i64::from(total_months) * i64::from(month_length_days);
    StudyWindow {
        start: end - Duration::days(days),
        end,
        total_months,
        month_length_days,
    }
}

impl StudyWindow {
    pub fn start_instant(&self) -> DateTime<Utc> {
        self.start.and_hms_opt(0, 0, 0).unwrap().and_utc()
    }

    pub fn end_instant(&self) -> DateTime<Utc> {
        self.end.and_hms_opt(0, 0, 0).unwrap().and_utc()
    }

    pub fn total_days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    /// Half-open membership test: `[start, end)`.
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start_instant() && ts < self.end_instant()
    }

    /// Fractional study month of an instant, measured from the window start.
    pub fn month_offset(&self, ts: DateTime<Utc>) -> f64 {
        let secs = (ts - self.start_instant()).num_seconds() as f64;
        secs / 86_400.0 / f64::from(self.month_length_days)
    }

    /// Month index `m` such that the instant falls in days `[28m, 28(m+1))`.
    pub fn month_index(&self, ts: DateTime<Utc>) -> Option<u32> {
        if !self.contains(ts) {
            return None;
        }
        let days = (ts - self.start_instant()).num_days();
        Some((days / i64::from(self.month_length_days)) as u32)
    }
}

/// Cut-offs used to dichotomize author counts and revision frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub authors: u32,
    pub rev_per_day: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            authors: 20,
            rev_per_day: 1.0,
        }
    }
}

/// Column names for the revision log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub project_id: String,
    pub timestamp: String,
    pub author_id: String,
    pub host: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            project_id: "project_id".into(),
            timestamp: "timestamp".into(),
            author_id: "author_id".into(),
            host: "host".into(),
        }
    }
}

/// A row that was skipped during parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub rejected: Vec<RowError>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            items: Vec::new(),
            rejected: Vec::new(),
        }
    }
}

pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Ok(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(naive.and_utc());
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(date.and_hms_opt(0, 0, 0).unwrap().and_utc());
    }
    Err(format!("malformed timestamp `{raw}`"))
}

fn reader<R: Read>(input: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CohortError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CohortError::MissingColumn(name.to_string()))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses a delimiter-separated revision log with a header row.
///
/// Rows with malformed timestamps are skipped and reported in
/// [`Parsed::rejected`]; an unknown host token or a missing column aborts.
pub fn parse_revision_log<R: Read>(
    input: R,
    schema: &ColumnMap,
    delimiter: u8,
) -> Result<Parsed<RevisionEvent>, CohortError> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers()?.clone();
    let idx = [
        column(&headers, &schema.project_id)?,
        column(&headers, &schema.timestamp)?,
        column(&headers, &schema.author_id)?,
        column(&headers, &schema.host)?,
    ];
    let mut out = Parsed::default();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let field = |i: usize| record.get(i).unwrap_or("");
        let host = field(idx[3])
            .parse::<Host>()
            .map_err(|token| CohortError::UnknownHost { line, token })?;
        match parse_timestamp(field(idx[1])) {
            Ok(timestamp) => out.items.push(RevisionEvent {
                project_id: field(idx[0]).to_string(),
                timestamp,
                author_id: field(idx[2]).to_string(),
                host,
            }),
            Err(message) => out.rejected.push(RowError { line, message }),
        }
    }
    Ok(out)
}

/// Parses the release log: `project_id, timestamp`.
pub fn parse_release_log<R: Read>(
    input: R,
    delimiter: u8,
) -> Result<Parsed<(String, DateTime<Utc>)>, CohortError> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers()?.clone();
    let (p, t) = (column(&headers, "project_id")?, column(&headers, "timestamp")?);
    let mut out = Parsed::default();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        match parse_timestamp(record.get(t).unwrap_or("")) {
            Ok(ts) => out.items.push((record.get(p).unwrap_or("").to_string(), ts)),
            Err(message) => out.rejected.push(RowError { line, message }),
        }
    }
    Ok(out)
}

/// Parses the origin log: `project_id, host`.
pub fn parse_origin_log<R: Read>(input: R, delimiter: u8) -> Result<Vec<(String, Host)>, CohortError> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers()?.clone();
    let (p, h) = (column(&headers, "project_id")?, column(&headers, "host")?);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        let host = record
            .get(h)
            .unwrap_or("")
            .parse::<Host>()
            .map_err(|token| CohortError::UnknownHost { line, token })?;
        out.push((record.get(p).unwrap_or("").to_string(), host));
    }
    Ok(out)
}

/// The five study attributes of one project, as used by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attributes {
    pub host: Host,
    pub has_major_release: bool,
    pub multi_repo: bool,
    pub high_author_count: bool,
    pub high_rev_frequency: bool,
}

/// One analysis row: duration, censoring and attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub project_id: String,
    pub duration_months: f64,
    pub censored: bool,
    pub attributes: Attributes,
}

impl Subject {
    /// Event indicator: 1 when the death was observed.
    pub fn event(&self) -> bool {
        !self.censored
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectRecord {
    pub project_id: String,
    pub first_observed: DateTime<Utc>,
    pub last_observed: DateTime<Utc>,
    pub last_in_scope: DateTime<Utc>,
    pub duration_days: i64,
    pub duration_months: f64,
    pub censored: bool,
    pub revision_count: u64,
    pub unique_authors: u64,
    pub host: Host,
    pub has_major_release: bool,
    pub multi_repo: bool,
    pub revision_frequency: f64,
    pub high_rev_frequency: bool,
    pub high_author_count: bool,
}

impl ProjectRecord {
    pub fn attributes(&self) -> Attributes {
        Attributes {
            host: self.host,
            has_major_release: self.has_major_release,
            multi_repo: self.multi_repo,
            high_author_count: self.high_author_count,
            high_rev_frequency: self.high_rev_frequency,
        }
    }

    pub fn subject(&self) -> Subject {
        Subject {
            project_id: self.project_id.clone(),
            duration_months: self.duration_months,
            censored: self.censored,
            attributes: self.attributes(),
        }
    }
}

/// Builds the cohort row for one project, or `None` when the project has no
/// revision inside the window.
///
/// `events` must be sorted by timestamp. The project's host is the most
/// frequent host among its in-window revisions (ties go to the earlier
/// variant of [`Host`]).
pub fn derive_project_record(
    events: &[RevisionEvent],
    releases: &[DateTime<Utc>],
    origin_count: usize,
    window: &StudyWindow,
    thresholds: &Thresholds,
) -> Result<Option<ProjectRecord>, CohortError> {
    let Some(first) = events.first() else {
        return Ok(None);
    };
    if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(CohortError::Unsorted(first.project_id.clone()));
    }
    let inside: Vec<&RevisionEvent> = events.iter().filter(|e| window.contains(e.timestamp)).collect();
    let (Some(first_in), Some(last_in)) = (inside.first(), inside.last()) else {
        return Ok(None);
    };
    let last_in_scope = events.last().unwrap().timestamp;

    let duration_days = (last_in.timestamp - first_in.timestamp).num_days();
    let revision_count = inside.len() as u64;
    let unique_authors = inside.iter().map(|e| e.author_id.as_str()).collect::<BTreeSet<_>>().len() as u64;

    let mut host_counts = [0usize; 3];
    for e in &inside {
        host_counts[e.host as usize] += 1;
    }
    let host = Host::ALL
        .into_iter()
        .max_by(|a, b| host_counts[*a as usize].cmp(&host_counts[*b as usize]).then(b.cmp(a)))
        .unwrap();

    let revision_frequency = revision_count as f64 / duration_days.max(1) as f64;
    let end = window.end_instant();

    Ok(Some(ProjectRecord {
        project_id: first.project_id.clone(),
        first_observed: first_in.timestamp,
        last_observed: last_in.timestamp,
        last_in_scope,
        duration_days,
        duration_months: duration_days as f64 / f64::from(window.month_length_days),
        censored: last_in_scope != last_in.timestamp,
        revision_count,
        unique_authors,
        host,
        has_major_release: releases.iter().any(|r| *r < end),
        multi_repo: origin_count > 1,
        revision_frequency,
        high_rev_frequency: revision_frequency > thresholds.rev_per_day,
        high_author_count: unique_authors > u64::from(thresholds.authors),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub size: usize,
    pub censored: usize,
    pub censored_fraction: Option<f64>,
    pub mean_duration_months: Option<f64>,
    pub median_duration_months: Option<f64>,
    /// attribute column name -> level -> count
    pub attribute_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl CohortSummary {
    pub fn from_subjects(subjects: &[Subject]) -> Self {
        let size = subjects.len();
        let censored = subjects.iter().filter(|s| s.censored).count();
        let mut durations: Vec<f64> = subjects.iter().map(|s| s.duration_months).collect();
        durations.sort_by(f64::total_cmp);
        let median = match size {
            0 => None,
            n if n % 2 == 1 => Some(durations[n / 2]),
            n => Some(0.5 * (durations[n / 2 - 1] + durations[n / 2])),
        };
        let mut attribute_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for s in subjects {
            for attr in crate::attribute::Attribute::ALL {
                *attribute_counts
                    .entry(attr.column().to_string())
                    .or_default()
                    .entry(attr.level_of(&s.attributes).to_string())
                    .or_default() += 1;
            }
        }
        CohortSummary {
            size,
            censored,
            censored_fraction: (size > 0).then(|| censored as f64 / size as f64),
            mean_duration_months: (size > 0).then(|| durations.iter().sum::<f64>() / size as f64),
            median_duration_months: median,
            attribute_counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub records: Vec<ProjectRecord>,
    pub window: StudyWindow,
    pub summary: CohortSummary,
}

impl Cohort {
    pub fn subjects(&self) -> Vec<Subject> {
        self.records.iter().map(ProjectRecord::subject).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Orders records by `project_id` and computes the summary.
pub fn build_cohort(mut records: Vec<ProjectRecord>, window: StudyWindow) -> Result<Cohort, CohortError> {
    records.sort_by(|a, b| a.project_id.cmp(&b.project_id));
    if let Some(dup) = records.windows(2).find(|w| w[0].project_id == w[1].project_id) {
        return Err(CohortError::DuplicateProject(dup[0].project_id.clone()));
    }
    let subjects: Vec<Subject> = records.iter().map(ProjectRecord::subject).collect();
    Ok(Cohort {
        summary: CohortSummary::from_subjects(&subjects),
        records,
        window,
    })
}

/// Groups raw logs per project and derives the full cohort.
///
/// The origin count of a project is the number of distinct hosts seen for it
/// in the origin log and in its own revisions.
pub fn cohort_from_logs(
    events: Vec<RevisionEvent>,
    releases: &[(String, DateTime<Utc>)],
    origins: &[(String, Host)],
    window: StudyWindow,
    thresholds: &Thresholds,
) -> Result<Cohort, CohortError> {
    let mut per_project: BTreeMap<String, Vec<RevisionEvent>> = BTreeMap::new();
    for e in events {
        per_project.entry(e.project_id.clone()).or_default().push(e);
    }
    let mut release_map: HashMap<&str, Vec<DateTime<Utc>>> = HashMap::new();
    for (p, ts) in releases {
        release_map.entry(p.as_str()).or_default().push(*ts);
    }
    let mut origin_map: HashMap<&str, BTreeSet<Host>> = HashMap::new();
    for (p, h) in origins {
        origin_map.entry(p.as_str()).or_default().insert(*h);
    }

    let mut records = Vec::with_capacity(per_project.len());
    for (project, mut evs) in per_project {
        evs.sort_by_key(|e| e.timestamp);
        let mut hosts: BTreeSet<Host> = evs.iter().map(|e| e.host).collect();
        if let Some(o) = origin_map.get(project.as_str()) {
            hosts.extend(o.iter().copied());
        }
        let rel = release_map.get(project.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(record) = derive_project_record(&evs, rel, hosts.len(), &window, thresholds)? {
            records.push(record);
        }
    }
    build_cohort(records, window)
}

pub const COHORT_COLUMNS: [&str; 8] = [
    "project_id",
    "duration_months",
    "censored",
    "host",
    "major_releases",
    "high_rev_frequency",
    "multi_repo",
    "high_author_count",
];

#[derive(Serialize, Deserialize)]
struct CohortRow {
    project_id: String,
    duration_months: f64,
    censored: bool,
    host: Host,
    major_releases: bool,
    high_rev_frequency: bool,
    multi_repo: bool,
    high_author_count: bool,
}

pub fn write_cohort_csv<W: Write>(subjects: &[Subject], out: W) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_writer(out);
    for s in subjects {
        w.serialize(CohortRow {
            project_id: s.project_id.clone(),
            duration_months: s.duration_months,
            censored: s.censored,
            host: s.attributes.host,
            major_releases: s.attributes.has_major_release,
            high_rev_frequency: s.attributes.high_rev_frequency,
            multi_repo: s.attributes.multi_repo,
            high_author_count: s.attributes.high_author_count,
        })?;
    }
    if subjects.is_empty() {
        w.write_record(COHORT_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort_csv<R: Read>(input: R) -> Result<Vec<Subject>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    for c in COHORT_COLUMNS {
        column(&headers, c)?;
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<CohortRow>() {
        let row = row?;
        if !(row.duration_months >= 0.0 && row.duration_months.is_finite()) {
            return Err(CohortError::Row {
                line: out.len() as u64 + 2,
                message: format!("invalid duration {}", row.duration_months),
            });
        }
        out.push(Subject {
            project_id: row.project_id,
            duration_months: row.duration_months,
            censored: row.censored,
            attributes: Attributes {
                host: row.host,
                has_major_release: row.major_releases,
                multi_repo: row.multi_repo,
                high_author_count: row.high_author_count,
                high_rev_frequency: row.high_rev_frequency,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn ev(project: &str, t: &str, author: &str) -> RevisionEvent {
        RevisionEvent {
            project_id: project.into(),
            timestamp: ts(t),
            author_id: author.into(),
            host: Host::Github,
        }
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn default_window() -> StudyWindow {
        build_study_window(date("2018-01-01"), 165, 28)
    }

    #[test]
    fn window_start_dates() {
        assert_eq!(default_window().start, date("2005-05-09"));
        assert_eq!(build_study_window(date("2018-01-01"), 0, 28).start, date("2018-01-01"));
        assert_eq!(build_study_window(date("2005-06-06"), 1, 28).start, date("2005-05-09"));
        assert_eq!(default_window().total_days(), 4620);
    }

    #[test]
    fn window_is_half_open() {
        let w = default_window();
        assert!(w.contains(ts("2005-05-09T00:00:00Z")));
        assert!(!w.contains(ts("2018-01-01T00:00:00Z")));
        assert!(w.contains(ts("2017-12-31T23:59:59Z")));
        assert_eq!(w.month_index(ts("2005-06-05T23:00:00Z")), Some(0));
        assert_eq!(w.month_index(ts("2005-06-06T00:00:00Z")), Some(1));
        assert_eq!(w.month_index(ts("2017-12-31T00:00:00Z")), Some(164));
    }

    #[test]
    fn host_tokens() {
        assert_eq!("GitLab".parse::<Host>(), Ok(Host::Github));
        assert_eq!("pypi".parse::<Host>(), Ok(Host::Pypi));
        assert!("sourceforge".parse::<Host>().is_err());
    }

    #[test]
    fn parse_single_row() {
        let data = "project_id,timestamp,author_id,host\np,2017-01-01T00:00:00Z,a,github\n";
        let parsed = parse_revision_log(data.as_bytes(), &ColumnMap::default(), b',').unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert!(parsed.rejected.is_empty());
        assert_eq!(parsed.items[0].timestamp, ts("2017-01-01T00:00:00Z"));
    }

    #[test]
    fn invalid_date_is_reported_with_line() {
        let data = "project_id,timestamp,author_id,host\n\
                    p,2017-01-01T00:00:00Z,a,github\n\
                    p,2017-13-40T00:00:00Z,a,github\n";
        let parsed = parse_revision_log(data.as_bytes(), &ColumnMap::default(), b',').unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.rejected[0].line, 3);
    }

    #[test]
    fn missing_column_and_unknown_host_are_fatal() {
        let data = "project_id,timestamp,host\np,2017-01-01T00:00:00Z,github\n";
        assert!(matches!(
            parse_revision_log(data.as_bytes(), &ColumnMap::default(), b','),
            Err(CohortError::MissingColumn(c)) if c == "author_id"
        ));
        let data = "project_id,timestamp,author_id,host\np,2017-01-01T00:00:00Z,a,bitbucket\n";
        assert!(matches!(
            parse_revision_log(data.as_bytes(), &ColumnMap::default(), b','),
            Err(CohortError::UnknownHost { line: 2, .. })
        ));
    }

    #[test]
    fn custom_schema_and_delimiter() {
        let data = "repo;when;who;where\nx;2010-01-01T00:00:00Z;a;debian\n";
        let schema = ColumnMap {
            project_id: "repo".into(),
            timestamp: "when".into(),
            author_id: "who".into(),
            host: "where".into(),
        };
        let parsed = parse_revision_log(data.as_bytes(), &schema, b';').unwrap();
        assert_eq!(parsed.items[0].host, Host::Debian);
    }

    #[test]
    fn five_rows_two_projects() {
        let data = "project_id,timestamp,author_id,host\n\
                    a,2010-01-01T00:00:00Z,u,github\n\
                    b,2010-01-02T00:00:00Z,u,pypi\n\
                    a,2010-01-03T00:00:00Z,v,github\n\
                    b,2010-01-04T00:00:00Z,w,pypi\n\
                    a,2010-01-05T00:00:00Z,u,github\n";
        let parsed = parse_revision_log(data.as_bytes(), &ColumnMap::default(), b',').unwrap();
        assert_eq!(parsed.items.len(), 5);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &parsed.items {
            *counts.entry(e.project_id.as_str()).or_default() += 1;
        }
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![3, 2]);
    }

    #[test]
    fn excluded_when_all_events_precede_window() {
        let events = vec![ev("p", "2001-01-01T00:00:00Z", "a"), ev("p", "2004-01-01T00:00:00Z", "a")];
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default()).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn later_activity_censors() {
        let events = vec![
            ev("p", "2010-01-01T00:00:00Z", "a"),
            ev("p", "2017-06-01T00:00:00Z", "a"),
            ev("p", "2019-02-01T00:00:00Z", "a"),
        ];
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default())
            .unwrap()
            .unwrap();
        assert!(r.censored);
        assert_eq!(r.last_observed, ts("2017-06-01T00:00:00Z"));
        assert_eq!(r.last_in_scope, ts("2019-02-01T00:00:00Z"));
        assert_eq!(r.revision_count, 2);
    }

    #[test]
    fn single_revision_project() {
        let events = vec![ev("p", "2012-03-04T05:06:07Z", "a")];
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.duration_days, 0);
        assert!(!r.censored);
        assert_eq!(r.revision_frequency, 1.0);
        assert!(!r.high_rev_frequency);
    }

    #[test]
    fn pre_window_activity_is_clamped() {
        let events = vec![
            ev("p", "2004-01-01T00:00:00Z", "a"),
            ev("p", "2005-05-09T00:00:00Z", "a"),
            ev("p", "2005-06-06T00:00:00Z", "a"),
        ];
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.duration_days, 28);
        assert_eq!(r.duration_months, 1.0);
    }

    #[test]
    fn unsorted_events_rejected() {
        let events = vec![ev("p", "2012-01-02T00:00:00Z", "a"), ev("p", "2012-01-01T00:00:00Z", "a")];
        assert!(matches!(
            derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default()),
            Err(CohortError::Unsorted(_))
        ));
    }

    #[test]
    fn threshold_strictness() {
        // 20 distinct authors and 20 revisions spread over exactly 20 days.
        let base = ts("2010-01-01T00:00:00Z");
        let mut events: Vec<RevisionEvent> = (0..19)
            .map(|i| RevisionEvent {
                project_id: "p".into(),
                timestamp: base + Duration::days(i),
                author_id: format!("a{i}"),
                host: Host::Pypi,
            })
            .collect();
        events.push(RevisionEvent {
            timestamp: base + Duration::days(20),
            author_id: "a19".into(),
            ..events[0].clone()
        });
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.unique_authors, 20);
        assert_eq!(r.revision_frequency, 1.0);
        assert!(!r.high_author_count);
        assert!(!r.high_rev_frequency);
        assert_eq!(r.host, Host::Pypi);

        events.insert(19, RevisionEvent {
            timestamp: base + Duration::days(19),
            author_id: "a20".into(),
            ..events[0].clone()
        });
        let r = derive_project_record(&events, &[], 1, &default_window(), &Thresholds::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.unique_authors, 21);
        assert!(r.high_author_count);
        assert!(r.high_rev_frequency);
    }

    #[test]
    fn releases_and_origins() {
        let events = vec![ev("p", "2012-01-01T00:00:00Z", "a")];
        let w = default_window();
        let t = Thresholds::default();
        let after = [ts("2018-01-01T00:00:00Z")];
        let before = [ts("2017-12-31T00:00:00Z")];
        assert!(!derive_project_record(&events, &after, 1, &w, &t).unwrap().unwrap().has_major_release);
        assert!(derive_project_record(&events, &before, 1, &w, &t).unwrap().unwrap().has_major_release);
        assert!(derive_project_record(&events, &[], 2, &w, &t).unwrap().unwrap().multi_repo);
    }

    fn record(id: &str, censored: bool, days: i64) -> ProjectRecord {
        let t0 = ts("2010-01-01T00:00:00Z");
        ProjectRecord {
            project_id: id.into(),
            first_observed: t0,
            last_observed: t0 + Duration::days(days),
            last_in_scope: t0 + Duration::days(days + i64::from(censored)),
            duration_days: days,
            duration_months: days as f64 / 28.0,
            censored,
            revision_count: 1,
            unique_authors: 1,
            host: Host::Github,
            has_major_release: false,
            multi_repo: false,
            revision_frequency: 1.0,
            high_rev_frequency: false,
            high_author_count: false,
        }
    }

    #[test]
    fn cohort_summary_counts() {
        let empty = build_cohort(vec![], default_window()).unwrap();
        assert_eq!(empty.summary.size, 0);
        assert_eq!(empty.summary.censored_fraction, None);

        let records: Vec<_> = (0..10).map(|i| record(&format!("p{}", 9 - i), i < 6, 28 * i)).collect();
        let c = build_cohort(records, default_window()).unwrap();
        assert_eq!(c.summary.censored_fraction, Some(0.6));
        assert_eq!(c.records[0].project_id, "p0");
        assert_eq!(c.summary.mean_duration_months, Some(4.5));
        assert_eq!(c.summary.attribute_counts["host"]["github"], 10);
    }

    #[test]
    fn duplicate_project_rejected() {
        let r = vec![record("a", false, 1), record("a", true, 2)];
        assert!(matches!(build_cohort(r, default_window()), Err(CohortError::DuplicateProject(_))));
    }

    #[test]
    fn cohort_csv_round_trip() {
        let records = vec![record("a", false, 3), record("b", true, 56)];
        let c = build_cohort(records, default_window()).unwrap();
        let mut buf = Vec::new();
        write_cohort_csv(&c.subjects(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), COHORT_COLUMNS.join(","));
        assert_eq!(read_cohort_csv(buf.as_slice()).unwrap(), c.subjects());
    }
}
