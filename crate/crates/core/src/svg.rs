//! Minimal SVG emitters for survival curves, posterior bands, cohort strips
//! and hazard-ratio forest plots.
//!
//! Output is plain text with fixed two-decimal coordinates, so identical
//! inputs render to identical bytes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cohort::Cohort;
use crate::coxph::HazardRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

type Points = Vec<(f64, f64)>;

#[derive(Debug, Error, PartialEq)]
pub enum SvgError {
    #[error("plot has no series")]
    NoSeries,
    #[error("axis range {0:?} is not a finite increasing interval")]
    BadRange((f64, f64)),
    #[error("plot kind {0:?} is not rendered by this function")]
    WrongKind(PlotKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    KmSteps,
    PosteriorBands,
    DurationStrips,
    Forest,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub label: String,
    /// Step plots: `(event time, value after the drop)`; line plots: vertices.
    pub points: Vec<(f64, f64)>,
    /// `(x, lower, upper)`, aligned with `points`.
    pub band: Option<Vec<(f64, f64, f64)>>,
    pub censor_marks: Vec<(f64, f64)>,
    /// Faint individual curves drawn behind the band (posterior draws).
    pub thin_curves: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub series: Vec<Series>,
    pub axes: Axes,
    pub annotation: Option<String>,
}

impl PlotSpec {
    pub fn validate(&self) -> Result<(), SvgError> {
        if self.series.is_empty() {
            return Err(SvgError::NoSeries);
        }
        for r in [self.axes.x_range, self.axes.y_range] {
            if !(r.0.is_finite() && r.1.is_finite() && r.1 > r.0) {
                return Err(SvgError::BadRange(r));
            }
        }
        Ok(())
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    width: f64,
    height: f64,
}

impl Frame {
    fn new(axes: &Axes, width: f64, height: f64) -> Self {
        Frame {
            x: axes.x_range,
            y: axes.y_range,
            width,
            height,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let x = x.clamp(self.x.0, self.x.1);
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let y = y.clamp(self.y.0, self.y.1);
        TOP + (1.0 - (y - self.y.0) / (self.y.1 - self.y.0)) * (self.height - TOP - BOTTOM)
    }

    fn point(&self, x: f64, y: f64) -> String {
        format!("{:.2},{:.2}", self.px(x), self.py(y))
    }
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="20" font-size="14">{}</text>"#,
        LEFT,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, axes: &Axes) {
    let (x0, x1) = f.x;
    let (y0, y1) = f.y;
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
        f.px(x0),
        f.py(y0),
        f.px(x1),
        f.py(y0),
        f.px(x0),
        f.py(y0),
        f.px(x0),
        f.py(y1)
    );
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * f64::from(i) / 5.0;
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(x),
            f.py(y0) + 16.0,
            tick_label(x)
        );
        let y = y0 + (y1 - y0) * f64::from(i) / 5.0;
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.px(x0) - 6.0,
            f.py(y) + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (f.px(x0) + f.px(x1)) / 2.0,
        f.height - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text class="ylabel" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (f.py(y0) + f.py(y1)) / 2.0,
        (f.py(y0) + f.py(y1)) / 2.0,
        escape(&axes.y_label)
    );
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// Vertices of a right-continuous step function starting at `(x0, start)`
/// and extended flat to `x1`.
fn step_vertices(start: f64, steps: &[(f64, f64)], x0: f64, x1: f64) -> Vec<(f64, f64)> {
    let mut v = vec![(x0, start)];
    let mut prev = start;
    for &(t, s) in steps {
        v.push((t, prev));
        v.push((t, s));
        prev = s;
    }
    v.push((x1.max(steps.last().map_or(x0, |p| p.0)), prev));
    v
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], class: &str, attrs: &str) {
    let coords: Vec<String> = pts.iter().map(|&(x, y)| f.point(x, y)).collect();
    let _ = writeln!(out, r#"<polyline class="{class}" points="{}" {attrs}/>"#, coords.join(" "));
}

fn polygon(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts.iter().map(|&(x, y)| f.point(x, y)).collect();
    let _ = writeln!(
        out,
        r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
        coords.join(" ")
    );
}

/// Renders step curves (`KmSteps`) or smooth curves (`PosteriorBands`)
/// with shaded bands, censor ticks, legend and an optional annotation.
pub fn render_step_svg(spec: &PlotSpec) -> Result<String, SvgError> {
    spec.validate()?;
    let steps = match spec.kind {
        PlotKind::KmSteps => true,
        PlotKind::PosteriorBands => false,
        other => return Err(SvgError::WrongKind(other)),
    };
    let f = Frame::new(&spec.axes, WIDTH, HEIGHT);
    let (x0, x1) = spec.axes.x_range;
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, &spec.title);
    axes(&mut out, &f, &spec.axes);

    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<g class="series" data-label="{}">"#, escape(&s.label));
        for thin in &s.thin_curves {
            polyline(&mut out, &f, thin, "draw", &format!(r#"fill="none" stroke="{color}" stroke-opacity="0.08""#));
        }
        if let Some(band) = &s.band {
            let (upper, lower): (Points, Points) = if steps {
                let hi: Vec<(f64, f64)> = band.iter().map(|b| (b.0, b.2)).collect();
                let lo: Vec<(f64, f64)> = band.iter().map(|b| (b.0, b.1)).collect();
                (step_vertices(1.0, &hi, x0, x1), step_vertices(1.0, &lo, x0, x1))
            } else {
                (band.iter().map(|b| (b.0, b.2)).collect(), band.iter().map(|b| (b.0, b.1)).collect())
            };
            let mut ring = upper;
            ring.extend(lower.into_iter().rev());
            polygon(&mut out, &f, &ring, color);
        }
        let line = if steps {
            step_vertices(1.0, &s.points, x0, x1)
        } else {
            s.points.clone()
        };
        polyline(&mut out, &f, &line, "curve", &format!(r#"fill="none" stroke="{color}" stroke-width="1.6""#));
        for &(t, v) in &s.censor_marks {
            let _ = writeln!(
                out,
                r#"<line class="censor" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                f.px(t),
                f.py(v) - 4.0,
                f.px(t),
                f.py(v) + 4.0
            );
        }
        let ly = TOP + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line class="legend-key" x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/><text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            ly,
            lx + 16.0,
            ly,
            lx + 22.0,
            ly + 4.0,
            escape(&s.label)
        );
        out.push_str("</g>\n");
    }
    if let Some(note) = &spec.annotation {
        let _ = writeln!(
            out,
            r#"<text class="annotation" x="{:.2}" y="{:.2}">{}</text>"#,
            f.px(x0) + 10.0,
            f.py(spec.axes.y_range.0) - 10.0,
            escape(note)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One horizontal segment per project from its first to its last observed
/// revision, ordered by duration (shortest at the top).
pub fn render_duration_strips(cohort: &Cohort) -> Result<String, SvgError> {
    if cohort.is_empty() {
        return Err(SvgError::NoSeries);
    }
    let w = &cohort.window;
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&cohort.records[a], &cohort.records[b]);
        ra.duration_days.cmp(&rb.duration_days).then_with(|| ra.project_id.cmp(&rb.project_id))
    });
    let months = f64::from(w.total_months.max(1));
    let height = 600.0;
    let ax = Axes {
        x_label: "study month".into(),
        y_label: "projects (ordered by duration)".into(),
        x_range: (0.0, months),
        y_range: (0.0, cohort.len() as f64),
    };
    let f = Frame::new(&ax, WIDTH, height);
    let mut out = String::new();
    header(&mut out, WIDTH, height, &format!("Observed project lifetimes (n = {})", cohort.len()));
    axes(&mut out, &f, &ax);
    let stroke = ((height - TOP - BOTTOM) / cohort.len() as f64).clamp(0.3, 3.0);
    for (rank, &i) in order.iter().enumerate() {
        let r = &cohort.records[i];
        let y = cohort.len() as f64 - rank as f64 - 0.5;
        let class = if r.censored { "strip censored" } else { "strip" };
        let color = if r.censored { "#555555" } else { "black" };
        let _ = writeln!(
            out,
            r#"<line class="{class}" data-project="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="{stroke:.2}"/>"#,
            escape(&r.project_id),
            f.px(w.month_offset(r.first_observed)),
            f.py(y),
            f.px(w.month_offset(r.last_observed)),
            f.py(y)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Forest plot of hazard ratios on a log axis; reference rows are labelled
/// but carry no interval.
pub fn render_forest(rows: &[HazardRow], title: &str) -> Result<String, SvgError> {
    if rows.is_empty() {
        return Err(SvgError::NoSeries);
    }
    let finite = |v: f64| v.is_finite() && v > 0.0;
    let mut lo = 1.0f64;
    let mut hi = 1.0f64;
    for r in rows {
        for v in [Some(r.hazard_ratio), r.ci_low, r.ci_high].into_iter().flatten() {
            if finite(v) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let (lx0, lx1) = ((lo.log10() - 0.1).floor(), (hi.log10() + 0.1).ceil());
    let row_h = 24.0;
    let height = TOP + BOTTOM + row_h * rows.len() as f64 + 12.0;
    let label_w = 250.0;
    let plot_l = label_w;
    let plot_r = WIDTH - 110.0;
    let px = |v: f64| plot_l + (v.log10().clamp(lx0, lx1) - lx0) / (lx1 - lx0) * (plot_r - plot_l);

    let mut out = String::new();
    header(&mut out, WIDTH, height, title);
    let base_y = TOP + row_h * rows.len() as f64 + 6.0;
    let _ = writeln!(
        out,
        r##"<line class="reference-line" x1="{:.2}" y1="{TOP:.2}" x2="{:.2}" y2="{base_y:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
        px(1.0),
        px(1.0)
    );
    let mut e = lx0 as i32;
    while f64::from(e) <= lx1 {
        let v = 10f64.powi(e);
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(v),
            base_y + 16.0,
            v
        );
        e += 1;
    }
    let _ = writeln!(
        out,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">hazard ratio (log scale)</text>"#,
        (plot_l + plot_r) / 2.0,
        height - 10.0
    );
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + row_h * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text class="row-label" x="10" y="{:.2}">{} = {} (n={})</text>"#,
            y + 4.0,
            escape(&r.attribute),
            escape(&r.level),
            r.n
        );
        if r.reference {
            let _ = writeln!(
                out,
                r#"<text class="reference" x="{:.2}" y="{:.2}">reference</text>"#,
                px(1.0) + 6.0,
                y + 4.0
            );
            continue;
        }
        if let (Some(a), Some(b)) = (r.ci_low, r.ci_high) {
            let _ = writeln!(
                out,
                r#"<line class="ci" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
                px(a),
                px(b)
            );
        }
        let _ = writeln!(
            out,
            r#"<rect class="estimate" x="{:.2}" y="{:.2}" width="7" height="7" fill="black"/>"#,
            px(r.hazard_ratio) - 3.5,
            y - 3.5
        );
        let p = r.p_value.map(format_p).unwrap_or_default();
        let _ = writeln!(
            out,
            r#"<text class="hr" x="{:.2}" y="{:.2}">{:.2} (p {})</text>"#,
            plot_r + 8.0,
            y + 4.0,
            r.hazard_ratio,
            p
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Three significant digits; values under 0.001 print as `< 0.001`.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        let digits = (2 - p.log10().floor() as i32).max(0) as usize;
        format!("= {p:.digits$}")
    }
}
