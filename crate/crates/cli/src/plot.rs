//! Learning-curve SVG rendering.
//!
//! Output is plain text with fixed number formatting, so equal input always
//! yields equal bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use al_seqtag::engine::RunRecord;
use al_seqtag::metrics::mean_std;

use crate::report::{read_csv, rows, ReportRow};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

/// Reads report rows from a records directory or a report CSV.
pub fn load_rows(input: &Path) -> Result<Vec<ReportRow>, CliError> {
    if input.is_dir() {
        let records = RunRecord::load_dir(input)?;
        Ok(rows(&records))
    } else {
        read_csv(input)
    }
}

/// One curve per label, one point per iteration (mean and sample std of F1
/// over runs).
pub fn curves(rows: &[ReportRow]) -> Vec<Curve> {
    let mut by_label: BTreeMap<String, BTreeMap<usize, Vec<&ReportRow>>> = BTreeMap::new();
    for r in rows {
        by_label.entry(r.curve_label()).or_default().entry(r.iteration).or_default().push(r);
    }
    by_label
        .into_iter()
        .map(|(label, iters)| {
            let points = iters
                .values()
                .map(|rs| {
                    let fr: Vec<f64> = rs.iter().map(|r| r.labeled_tokens as f64 / r.total_tokens.max(1) as f64).collect();
                    let f1: Vec<f64> = rs.iter().map(|r| r.f1).collect();
                    let (mean, std) = mean_std(&f1);
                    CurvePoint { fraction: mean_std(&fr).0, mean, std }
                })
                .collect();
            Curve { label, points }
        })
        .collect()
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

/// Renders curves as SVG: labeled-token fraction on x, F1 on y, ±1 std bands.
pub fn render_svg(curves: &[Curve]) -> Result<String, CliError> {
    let pts: Vec<&CurvePoint> = curves.iter().flat_map(|c| c.points.iter()).collect();
    if pts.is_empty() {
        return Err(CliError::Data("nothing to plot".into()));
    }
    let x_max = pts.iter().map(|p| p.fraction).fold(0.0, f64::max).max(1e-6);
    let y_lo = pts.iter().map(|p| p.mean - p.std).fold(f64::INFINITY, f64::min);
    let y_hi = pts.iter().map(|p| p.mean + p.std).fold(f64::NEG_INFINITY, f64::max);
    let y_min = ((y_lo * 10.0).floor() / 10.0).clamp(0.0, 1.0);
    let y_max = ((y_hi * 10.0).ceil() / 10.0).clamp(y_min + 0.1, 1.0_f64.max(y_min + 0.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y_min) / (y_max - y_min)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    );

    let x_step = nice_step(x_max);
    let mut k = 0;
    while k as f64 * x_step <= x_max + 1e-9 {
        let v = k as f64 * x_step;
        let x = sx(v);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP:.1}" x2="{x:.2}" y2="{:.1}" stroke="#dddddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{:.2}</text>"#, TOP + ph + 18.0, v);
        k += 1;
    }
    let y_step = nice_step(y_max - y_min);
    let mut k = 0;
    while y_min + k as f64 * y_step <= y_max + 1e-9 {
        let v = y_min + k as f64 * y_step;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{LEFT:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{:.2}</text>"#, LEFT - 6.0, y + 4.0, v);
        k += 1;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Fraction of labeled tokens</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">Span F1</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper: Vec<String> =
            c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.fraction), sy(p.mean + p.std))).collect();
        let lower: Vec<String> =
            c.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.fraction), sy(p.mean - p.std))).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.fraction), sy(p.mean))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text class="legend" x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&c.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `input` (records directory or report CSV) to `output`. Nothing is
/// written when there is nothing to plot.
pub fn plot(input: &Path, output: &Path) -> Result<usize, CliError> {
    let curves = curves(&load_rows(input)?);
    let svg = render_svg(&curves)?;
    std::fs::write(output, svg).map_err(|source| CliError::Write { path: output.to_path_buf(), source })?;
    Ok(curves.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(run: &str, strategy: &str, it: usize, tokens: usize, f1: f64) -> ReportRow {
        ReportRow {
            run_id: run.into(),
            strategy: strategy.into(),
            mc_variant: "NONE".into(),
            iteration: it,
            labeled_tokens: tokens,
            f1,
            precision: f1,
            recall: f1,
            train_seconds: 1.0,
            query_seconds: 0.5,
            model: "crf".into(),
            total_tokens: 1000,
        }
    }

    #[test]
    fn two_curves_two_legend_entries() {
        let rows = vec![
            row("a/0", "MNLP", 0, 20, 0.5),
            row("a/0", "MNLP", 1, 40, 0.6),
            row("b/0", "RANDOM", 0, 20, 0.5),
            row("b/0", "RANDOM", 1, 40, 0.55),
        ];
        let svg = render_svg(&curves(&rows)).unwrap();
        assert_eq!(svg.matches(r#"class="legend""#).count(), 2);
        assert_eq!(svg.matches(r#"class="band""#).count(), 2);
        assert_eq!(svg, render_svg(&curves(&rows)).unwrap());
    }

    #[test]
    fn single_repeat_band_has_zero_height() {
        let c = curves(&[row("a/0", "MNLP", 0, 20, 0.5), row("a/0", "MNLP", 1, 40, 0.6)]);
        assert!(c[0].points.iter().all(|p| p.std == 0.0));
        let svg = render_svg(&c).unwrap();
        assert_eq!(svg.matches(r#"class="band""#).count(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_svg(&[]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.svg");
        assert!(plot(dir.path(), &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn std_across_runs() {
        let c = curves(&[row("a/0", "MNLP", 0, 20, 0.8), row("a/1", "MNLP", 0, 22, 0.84)]);
        assert!((c[0].points[0].mean - 0.82).abs() < 1e-12);
        assert!((c[0].points[0].std - 0.02f64.hypot(0.02)).abs() < 1e-12);
        assert!((c[0].points[0].fraction - 0.021).abs() < 1e-12);
    }
}
