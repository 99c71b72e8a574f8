//! Self-contained SVG charts.

use std::fmt::Write;

use spotvol_core::evaluation::{error_table, ForecastRecord, RejectionHeatmap};

use crate::error::{AppError, AppResult};

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    let mut p = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            p.push(' ');
        }
        let _ = write!(p, "{x:.1},{y:.1}");
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{p}\"/>\n")
}

/// One predicted-vs-actual panel per model, stacked, over the test span.
pub fn forecast_comparison(records: &[ForecastRecord]) -> AppResult<String> {
    if records.is_empty() {
        return Err(AppError::Data("no forecast records to plot".into()));
    }
    let table = error_table(records);
    let (w, ph, left, top) = (900.0, 220.0, 70.0, 30.0);
    let plot_w = w - left - 20.0;
    let plot_h = ph - top - 40.0;
    let h = ph * table.models.len() as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let n = table.days.len();
    for (k, model) in table.models.iter().enumerate() {
        let series: Vec<&ForecastRecord> = table
            .days
            .iter()
            .filter_map(|d| records.iter().find(|r| &r.model == model && r.day == *d))
            .collect();
        let values = series.iter().flat_map(|r| [r.prediction, r.actual]).filter(|v| v.is_finite());
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
        let y0 = ph * k as f64 + top;
        let x = |i: usize| left + if n > 1 { plot_w * i as f64 / (n - 1) as f64 } else { plot_w / 2.0 };
        let y = |v: f64| y0 + plot_h * (1.0 - (v - lo) / (hi - lo));
        let _ = writeln!(
            svg,
            "<text x=\"{left}\" y=\"{:.1}\" font-size=\"13\" font-weight=\"bold\">{} — predicted vs actual</text>",
            y0 - 10.0,
            escape(model)
        );
        let _ = writeln!(
            svg,
            "<rect x=\"{left}\" y=\"{y0:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#999\"/>"
        );
        for v in [lo, (lo + hi) / 2.0, hi] {
            let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>", left - 5.0, y(v) + 4.0);
        }
        let base = y0 + plot_h + 15.0;
        let _ = writeln!(svg, "<text x=\"{left}\" y=\"{base:.1}\">{}</text>", table.days[0]);
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{base:.1}\" text-anchor=\"end\">{}</text>", left + plot_w, table.days[n - 1]);
        let pts = |f: fn(&ForecastRecord) -> f64| -> Vec<(f64, f64)> {
            series.iter().enumerate().filter(|(_, r)| f(r).is_finite()).map(|(i, r)| (x(i), y(f(r)))).collect()
        };
        svg.push_str(&polyline(&pts(|r| r.actual), "#777", 1.0));
        svg.push_str(&polyline(&pts(|r| r.prediction), COLORS[k % COLORS.len()], 1.5));
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{base:.1}\" text-anchor=\"middle\"><tspan fill=\"#777\">actual</tspan> / <tspan fill=\"{}\">predicted</tspan></text>",
            left + plot_w / 2.0,
            COLORS[k % COLORS.len()]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Grid of segment rejection counts; row model beats column model.
pub fn dm_heatmap(map: &RejectionHeatmap) -> String {
    let k = map.models.len();
    let (cell, left, top) = (110.0, 130.0, 70.0);
    let w = left + cell * k as f64 + 20.0;
    let h = top + cell * k as f64 + 20.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        svg,
        "<text x=\"10\" y=\"20\" font-size=\"13\" font-weight=\"bold\">DM rejections (row more accurate than column, {} segments of {}, level {})</text>",
        map.segments, map.segment_size, map.significance
    );
    for (j, m) in map.models.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(m)
        );
    }
    for a in 0..k {
        let y = top + cell * a as f64;
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", left - 8.0, y + cell / 2.0 + 4.0, escape(&map.models[a]));
        for b in 0..k {
            let x = left + cell * b as f64;
            let share = if map.segments > 0 { map.counts[a][b] as f64 / map.segments as f64 } else { 0.0 };
            let shade = (255.0 * (1.0 - 0.8 * share)).round() as u8;
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#fff\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                map.cell_label(a, b)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
