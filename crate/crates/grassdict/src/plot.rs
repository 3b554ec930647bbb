//! Minimal SVG line charts for experiment traces. Output is deterministic:
//! fixed layout, fixed palette, fixed numeric formatting.

use std::fmt::Write as _;

use crate::io::TraceData;
use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 45.0;

const PALETTE: [&str; 8] =
    ["#1b6ca8", "#d1495b", "#2e933c", "#e09f3e", "#7768ae", "#317b9a", "#8c5e58", "#444444"];

/// Render selected trace columns (all of them when `columns` is empty) as an
/// SVG line chart with percentage axes.
pub fn render_trace_svg(trace: &TraceData, columns: &[String]) -> Result<String> {
    if trace.rows.is_empty() {
        return Err(Error::EmptySet("trace has no rows to plot".into()));
    }
    let selected: Vec<usize> = if columns.is_empty() {
        (0..trace.columns.len()).collect()
    } else {
        columns
            .iter()
            .map(|c| {
                trace
                    .columns
                    .iter()
                    .position(|t| t == c)
                    .ok_or_else(|| Error::invalid(format!("trace has no column `{c}`")))
            })
            .collect::<Result<_>>()?
    };

    let x_min = trace.rows.first().map(|r| r.0).unwrap_or(1) as f64;
    let x_max = trace.rows.last().map(|r| r.0).unwrap_or(1) as f64;
    let x_span = (x_max - x_min).max(1.0);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |iter: f64| MARGIN_LEFT + (iter - x_min) / x_span * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (100.0 - v.clamp(0.0, 100.0)) / 100.0 * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" fill=\"white\"/>");

    // Axes and horizontal grid every 20 points.
    for tick in 0..=5 {
        let v = tick as f64 * 20.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_LEFT:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{v:.0}</text>",
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let x_ticks = 5usize.min(trace.rows.len() - 1).max(1);
    for t in 0..=x_ticks {
        let iter = x_min + x_span * t as f64 / x_ticks as f64;
        let x = x_of(iter);
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{iter:.0}</text>",
            MARGIN_TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_LEFT:.2}\" y1=\"{MARGIN_TOP:.2}\" x2=\"{MARGIN_LEFT:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
        MARGIN_TOP + plot_h
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_LEFT:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">iteration</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );

    // One polyline per selected column plus a legend entry.
    for (slot, &col) in selected.iter().enumerate() {
        let color = PALETTE[slot % PALETTE.len()];
        let mut points = String::new();
        for (iter, values) in &trace.rows {
            let _ = write!(points, "{:.2},{:.2} ", x_of(*iter as f64), y_of(values[col]));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 + slot as f64 * 18.0;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 28.0,
            ly + 4.0,
            trace.columns[col]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace(rows: usize) -> TraceData {
        TraceData {
            columns: vec!["t99".into(), "t97".into(), "wass_chordal".into()],
            rows: (1..=rows)
                .map(|i| (i, vec![i as f64, i as f64 + 1.0, 50.0]))
                .collect(),
        }
    }

    #[test]
    fn polyline_per_column_and_determinism() {
        let trace = sample_trace(8);
        let svg = render_trace_svg(&trace, &[]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg, render_trace_svg(&trace, &[]).unwrap(), "byte-identical output");

        let svg_subset = render_trace_svg(&trace, &["t97".to_string()]).unwrap();
        assert_eq!(svg_subset.matches("<polyline").count(), 1);
        assert!(render_trace_svg(&trace, &["missing".to_string()]).is_err());
    }

    #[test]
    fn empty_trace_is_an_error() {
        let trace = TraceData { columns: vec!["t99".into()], rows: vec![] };
        assert!(render_trace_svg(&trace, &[]).is_err());
    }
}
