//! Self-contained SVG line charts of a training history.
//!
//! One panel per quantity, stacked vertically: loss over steps, threshold over
//! steps (only when the history has thresholds), and held-out precision and
//! mIoU over epochs (only when snapshots are given). Each series is a single
//! `<polyline>`. Coordinates are printed with two decimals so output bytes
//! depend only on the input.

use std::fmt::Write;

use anyhow::{bail, Result};

use cal_core::trainer::StepRecord;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 32.0;

struct Series {
    label: &'static str,
    colour: &'static str,
    points: Vec<(f64, f64)>,
}

struct Panel {
    title: &'static str,
    x_label: &'static str,
    series: Vec<Series>,
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let all = || panel.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = extent(all().map(|p| p.0));
    let (y0, y1) = extent(all().map(|p| p.1));
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (upper, lower) = (top + MARGIN_TOP, top + PANEL_HEIGHT - MARGIN_BOTTOM);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);

    writeln!(
        out,
        r#"<text x="{left:.2}" y="{:.2}" font-size="14">{}</text>"#,
        top + 18.0,
        panel.title
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect x="{left:.2}" y="{upper:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
        right - left,
        lower - upper
    )
    .unwrap();
    for (value, y) in [(y1, upper), (y0, lower)] {
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{value:.4}</text>"#,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    for (value, x, anchor) in [(x0, left, "start"), (x1, right, "end")] {
        writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="{anchor}">{value}</text>"#,
            lower + 16.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        lower + 16.0,
        panel.x_label
    )
    .unwrap();

    for (k, s) in panel.series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.colour,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{}" text-anchor="end">{}</text>"#,
            right - 4.0,
            upper + 14.0 + 14.0 * k as f64,
            s.colour,
            s.label
        )
        .unwrap();
    }
}

/// Renders the history (and optional `(epoch, [miou, precision, recall, f1,
/// oa])` snapshots) as an SVG document.
pub fn render_svg(records: &[StepRecord], snapshots: &[(usize, [f64; 5])]) -> Result<String> {
    if records.is_empty() {
        bail!("history has no rows to plot");
    }
    let mut panels = vec![Panel {
        title: "Training loss",
        x_label: "step",
        series: vec![Series {
            label: "loss",
            colour: "#1f77b4",
            points: records.iter().map(|r| (r.step as f64, r.loss)).collect(),
        }],
    }];
    let thresholds: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.threshold.map(|t| (r.step as f64, t)))
        .collect();
    if !thresholds.is_empty() {
        panels.push(Panel {
            title: "Labeling threshold",
            x_label: "step",
            series: vec![Series {
                label: "threshold",
                colour: "#d62728",
                points: thresholds,
            }],
        });
    }
    if !snapshots.is_empty() {
        let metric = |i: usize| snapshots.iter().map(|(e, m)| (*e as f64, m[i])).collect();
        panels.push(Panel {
            title: "Held-out scores",
            x_label: "epoch",
            series: vec![
                Series {
                    label: "precision",
                    colour: "#2ca02c",
                    points: metric(1),
                },
                Series {
                    label: "mIoU",
                    colour: "#9467bd",
                    points: metric(0),
                },
            ],
        });
    }

    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, PANEL_HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    Ok(out)
}
