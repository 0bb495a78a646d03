use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use super::grid::{Cell, ComparisonGrid};
use super::{Choice, ConfigSummary, Objective, ScenarioError, ScenarioId, ScenarioReport};
use crate::bd::{aggregate_curve, write_curves_csv, Aggregation, MetricKind, RdCurve};
use crate::store::MetricRecord;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Aggregate RD curves of the configurations one scenario selected.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCurves {
    pub scenario: ScenarioId,
    pub curves: Vec<RdCurve>,
}

/// Harmonic-mean curve per selected configuration. Configurations without
/// a usable curve are skipped with a warning.
pub fn scenario_curves(
    report: &ScenarioReport,
    records: &[MetricRecord],
    ladder: &[u32],
    metric: MetricKind,
) -> ScenarioCurves {
    let mut curves = Vec::new();
    for key in report.selected_keys() {
        let rs: Vec<MetricRecord> = records.iter().filter(|r| key.matches(r)).cloned().collect();
        match aggregate_curve(key.to_string(), &rs, ladder, metric, Aggregation::HarmonicMean) {
            Ok(c) => curves.push(c),
            Err(e) => warn!("{}: no curve for {key}: {e}", report.spec.id),
        }
    }
    ScenarioCurves {
        scenario: report.spec.id.clone(),
        curves,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ArtifactKind {
    CurveCsv,
    CurveSvg,
    GridCsv,
    GridSvg,
    ScatterSvg,
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub path: PathBuf,
}

fn file_stem(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    w: f64,
    h: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn plot_w(&self) -> f64 {
        self.w - self.left - self.right
    }
    fn plot_h(&self) -> f64 {
        self.h - self.top - self.bottom
    }
}

fn svg_open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        esc(title)
    );
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Axes with five ticks each. `x_fmt` renders a tick value.
fn axes(
    out: &mut String,
    f: &Frame,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    x_label: &str,
    y_label: &str,
    x_fmt: impl Fn(f64) -> String,
) {
    let (l, t, pw, ph) = (f.left, f.top, f.plot_w(), f.plot_h());
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let x = l + frac * pw;
        let y = t + ph - frac * ph;
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{t}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            t + ph,
            t + ph + 14.0,
            esc(&x_fmt(x0 + frac * (x1 - x0)))
        );
        let _ = writeln!(
            out,
            r##"<line x1="{l}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"##,
            l + pw,
            l - 4.0,
            y + 4.0,
            y0 + frac * (y1 - y0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        l + pw / 2.0,
        f.h - 8.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        t + ph / 2.0,
        t + ph / 2.0,
        esc(y_label)
    );
}

fn rd_svg(set: &ScenarioCurves) -> String {
    let f = Frame {
        w: 720.0,
        h: 440.0,
        left: 60.0,
        right: 200.0,
        top: 32.0,
        bottom: 44.0,
    };
    let mut out = String::new();
    svg_open(&mut out, f.w, f.h, &format!("{} RD curves", set.scenario));
    let metric = set.curves.first().map_or(MetricKind::Vmaf, |c| c.metric);
    let points = set.curves.iter().flat_map(|c| c.points());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.rate.log10());
        x1 = x1.max(p.rate.log10());
        y0 = y0.min(p.quality);
        y1 = y1.max(p.quality);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (2.0, 4.0, 0.0, 100.0);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    axes(&mut out, &f, (x0, x1), (y0, y1), "bitrate (kb/s, log)", metric.name(), |v| {
        format!("{:.0}", 10f64.powf(v))
    });
    let sx = |v: f64| f.left + (v - x0) / (x1 - x0) * f.plot_w();
    let sy = |v: f64| f.top + f.plot_h() - (v - y0) / (y1 - y0) * f.plot_h();
    for (i, c) in set.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .points()
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.rate.log10()), sy(p.quality)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
        let ly = f.top + 14.0 + 18.0 * i as f64;
        let lx = f.w - f.right + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{:.1}" width="12" height="4" fill="{color}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 5.0,
            lx + 18.0,
            esc(&c.id)
        );
    }
    if set.curves.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">no data</text>"#,
            f.left + f.plot_w() / 2.0,
            f.top + f.plot_h() / 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Green for savings, red for losses, white at zero; saturates at ±100.
fn heat_color(v: f64) -> String {
    let t = (v.abs() / 100.0).min(1.0);
    let fade = |c: f64| (255.0 - t * (255.0 - c)).round() as u8;
    if v < 0.0 {
        format!("#{:02x}{:02x}{:02x}", fade(26.0), fade(152.0), fade(80.0))
    } else {
        format!("#{:02x}{:02x}{:02x}", fade(215.0), fade(48.0), fade(39.0))
    }
}

fn grid_svg(grid: &ComparisonGrid) -> String {
    let n = grid.labels.len() as f64;
    let cell = 64.0;
    let label_w = 12.0 + 7.0 * grid.labels.iter().map(|l| l.len()).max().unwrap_or(0) as f64;
    let (left, top) = (label_w, 40.0 + label_w);
    let (w, h) = (left + n * cell + 20.0, top + n * cell + 20.0);
    let mut out = String::new();
    svg_open(&mut out, w, h, &format!("{} ({})", grid.name(), grid.unit()));
    for (i, label) in grid.labels.iter().enumerate() {
        let y = top + (i as f64 + 0.5) * cell + 4.0;
        let x = left + (i as f64 + 0.5) * cell;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            esc(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 6.0,
            top - 6.0,
            esc(label)
        );
    }
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let (fill, text) = match c {
                Cell::Value(v) => (heat_color(*v), format!("{v:.1}")),
                Cell::NotAvailable(_) => ("#eeeeee".to_string(), "N/A".to_string()),
            };
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{text}</text>"##,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn scatter_svg(summaries: &[ConfigSummary]) -> String {
    let f = Frame {
        w: 720.0,
        h: 480.0,
        left: 60.0,
        right: 30.0,
        top: 32.0,
        bottom: 44.0,
    };
    let mut out = String::new();
    svg_open(&mut out, f.w, f.h, "coverage vs encode time");
    let timed: Vec<(&ConfigSummary, f64)> = summaries
        .iter()
        .filter_map(|s| s.total_hours.filter(|h| *h > 0.0).map(|h| (s, h.log10())))
        .collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, lx) in &timed {
        x0 = x0.min(*lx);
        x1 = x1.max(*lx);
        y0 = y0.min(s.coverage_percent());
        y1 = y1.max(s.coverage_percent());
    }
    if timed.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 100.0);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    axes(&mut out, &f, (x0, x1), (y0, y1), "total encode hours (log)", "coverage %", |v| {
        let h = 10f64.powf(v);
        if h < 10.0 {
            format!("{h:.2}")
        } else {
            format!("{h:.0}")
        }
    });
    let families: Vec<&str> = {
        let mut fs: Vec<&str> = summaries.iter().map(|s| s.key.family.as_str()).collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    };
    for (s, lx) in &timed {
        let color = PALETTE[families.iter().position(|f| *f == s.key.family).unwrap_or(0) % PALETTE.len()];
        let x = f.left + (lx - x0) / (x1 - x0) * f.plot_w();
        let y = f.top + f.plot_h() - (s.coverage_percent() - y0) / (y1 - y0) * f.plot_h();
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#,
            x + 6.0,
            y - 4.0,
            esc(&s.key.to_string())
        );
    }
    out.push_str("</svg>\n");
    out
}

fn objective_text(r: &ScenarioReport) -> String {
    let s = &r.spec;
    let goal = match s.objective {
        Objective::MaxCoverage => "max coverage".to_string(),
        Objective::FastestWithinSlack { slack_points } => {
            format!("fastest within {slack_points} coverage points of the max-coverage pick")
        }
        Objective::MinTimeWithinBudget => "fastest within budget".to_string(),
        Objective::MaxCoverageWithinBudget => "max coverage within budget".to_string(),
    };
    let budget = s
        .time_budget_hours
        .map_or(String::new(), |b| format!(", budget {b} h"));
    format!(
        "{goal}; vmaf > {}, checkpoint {} kb/s, overshoot > {}%{budget}",
        s.vmaf_threshold,
        s.checkpoint_kbps,
        s.overshoot_threshold * 100.0
    )
}

fn report_text(reports: &[ScenarioReport], grids: &[ComparisonGrid]) -> String {
    let mut out = String::from("Recommendations\n===============\n");
    for r in reports {
        let _ = writeln!(out, "\n{} ({})", r.spec.id, objective_text(r));
        for sel in &r.selections {
            match &sel.choice {
                Choice::Selected(s) => {
                    let _ = writeln!(out, "  {}: preset {} {}-pass", sel.family, s.key.preset, s.key.passes);
                }
                Choice::Infeasible(_) => {
                    let _ = writeln!(out, "  {}: no feasible preset", sel.family);
                }
            }
            let _ = writeln!(out, "    {}", sel.rationale);
        }
    }
    if !grids.is_empty() {
        out.push_str("\nSwitching encoders\n==================\n");
    }
    for g in grids {
        let _ = writeln!(out, "\n{} ({})", g.name(), g.unit());
        for (i, from) in g.labels.iter().enumerate() {
            for (j, to) in g.labels.iter().enumerate() {
                if i == j {
                    continue;
                }
                let text = match g.cell(i, j) {
                    Cell::Value(v) => format!("{v:+.2}"),
                    Cell::NotAvailable(why) => format!("N/A ({why})"),
                };
                let _ = writeln!(out, "  from {from} to {to}: {text}");
            }
        }
    }
    out
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, ScenarioError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Renders every artifact, then writes each one through a temporary file
/// and a rename. Returns the manifest in write order.
pub fn emit_report(
    out_dir: &Path,
    reports: &[ScenarioReport],
    grids: &[ComparisonGrid],
    curves: &[ScenarioCurves],
    summaries: &[ConfigSummary],
) -> Result<Vec<Artifact>, ScenarioError> {
    let mut rendered: Vec<(ArtifactKind, String, Vec<u8>)> = Vec::new();
    for set in curves {
        let stem = format!("rd_{}", file_stem(&set.scenario.to_string()));
        let mut csv = Vec::new();
        write_curves_csv(&set.curves, &mut csv)?;
        rendered.push((ArtifactKind::CurveCsv, format!("{stem}.csv"), csv));
        rendered.push((ArtifactKind::CurveSvg, format!("{stem}.svg"), rd_svg(set).into_bytes()));
    }
    for g in grids {
        let stem = format!("grid_{}", file_stem(&g.name()));
        let mut csv = Vec::new();
        g.write_csv(&mut csv)?;
        rendered.push((ArtifactKind::GridCsv, format!("{stem}.csv"), csv));
        rendered.push((ArtifactKind::GridSvg, format!("{stem}.svg"), grid_svg(g).into_bytes()));
    }
    if !summaries.is_empty() {
        rendered.push((
            ArtifactKind::ScatterSvg,
            "coverage_time.svg".into(),
            scatter_svg(summaries).into_bytes(),
        ));
    }
    rendered.push((
        ArtifactKind::Report,
        "report.txt".into(),
        report_text(reports, grids).into_bytes(),
    ));

    fs::create_dir_all(out_dir)?;
    rendered
        .into_iter()
        .map(|(kind, name, bytes)| {
            write_atomic(out_dir, &name, &bytes).map(|path| Artifact { kind, path })
        })
        .collect()
}
