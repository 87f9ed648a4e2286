//! Minimal deterministic SVG line charts for sweep results: NMSE (dB)
//! against SNR, one polyline per method, one file per (alpha, bits) pair.

use std::collections::BTreeMap;

use anyhow::{bail, Result};

use crate::report::ResultRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders one chart; series maps method name -> (snr, nmse_db) points.
fn render(series: &BTreeMap<String, Vec<(f64, f64)>>, alpha: f64, bits: u32) -> Result<String> {
    if series.is_empty() || series.values().all(|pts| pts.is_empty()) {
        bail!("no data points to plot");
    }
    let xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    let ys: Vec<f64> = series.values().flatten().map(|p| p.1).collect();
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let to_x = |v: f64| MARGIN_L + (v - x_min) / x_span * plot_w;
    let to_y = |v: f64| MARGIN_T + (y_max - v) / y_span * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let title = if bits == 0 {
        format!("NMSE vs SNR (alpha = {}, full resolution)", trim_num(alpha))
    } else {
        format!("NMSE vs SNR (alpha = {}, {bits}-bit ADC)", trim_num(alpha))
    };
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        fmt(WIDTH / 2.0)
    ));

    // axes
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B),
        fmt(WIDTH - MARGIN_R),
        fmt(HEIGHT - MARGIN_B)
    ));
    for i in 0..=4 {
        let fx = x_min + x_span * i as f64 / 4.0;
        let px = to_x(fx);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(px),
            fmt(HEIGHT - MARGIN_B),
            fmt(px),
            fmt(HEIGHT - MARGIN_B + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(HEIGHT - MARGIN_B + 18.0),
            trim_num(fx)
        ));
        let fy = y_min + y_span * i as f64 / 4.0;
        let py = to_y(fy);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_L - 5.0),
            fmt(py),
            fmt(MARGIN_L),
            fmt(py)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(py + 4.0),
            trim_num(fy)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">SNR (dB)</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 15.0)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">NMSE (dB)</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0)
    ));

    // series + legend
    for (idx, (method, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> = sorted
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(to_x(*x)), fmt(to_y(*y))))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in &sorted {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                fmt(to_x(*x)),
                fmt(to_y(*y))
            ));
        }
        let ly = MARGIN_T + 14.0 + idx as f64 * 16.0;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            fmt(WIDTH - MARGIN_R - 120.0),
            fmt(ly - 4.0),
            fmt(WIDTH - MARGIN_R - 100.0),
            fmt(ly - 4.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{method}</text>\n",
            fmt(WIDTH - MARGIN_R - 94.0),
            fmt(ly)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// File-name-safe axis value: `0.5` becomes `0p5`.
fn slug(v: f64) -> String {
    trim_num(v).replace('.', "p").replace('-', "m")
}

/// Renders one SVG per (alpha, bits) pair into `out_dir`, returning the
/// written paths.
pub fn plot_results(rows: &[ResultRow], out_dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    if rows.is_empty() {
        bail!("no rows to plot");
    }
    // group rows by (alpha, bits) with stable ordering
    let mut groups: BTreeMap<(String, u32), BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((fmt(row.alpha), row.bits))
            .or_default()
            .entry(row.method.clone())
            .or_default()
            .push((row.snr_db, row.nmse_db));
    }
    let mut written = Vec::new();
    for ((alpha_key, bits), series) in &groups {
        let alpha: f64 = alpha_key.parse().expect("formatted above");
        let svg = render(series, alpha, *bits)?;
        let path = out_dir.join(format!("nmse_alpha{}_bits{bits}.svg", slug(alpha)));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ResultRow> {
        let mut out = Vec::new();
        for method in ["dm", "ls", "lmmse"] {
            for snr in [0.0, 10.0, 20.0, 30.0] {
                out.push(ResultRow {
                    method: method.into(),
                    snr_db: snr,
                    alpha: 1.0,
                    bits: 0,
                    nmse_db: -snr / 2.0 - if method == "dm" { 5.0 } else { 0.0 },
                    latency_ms: 1.0,
                    n_realizations: 10,
                });
            }
        }
        out
    }

    #[test]
    fn twelve_rows_make_one_chart_with_three_series() {
        let dir = std::env::temp_dir().join("dmce_svg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let written = plot_results(&rows(), &dir).unwrap();
        assert_eq!(written.len(), 1);
        let svg = std::fs::read_to_string(&written[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains(">dm<") && svg.contains(">ls<") && svg.contains(">lmmse<"));
    }

    #[test]
    fn identical_input_produces_identical_bytes() {
        let dir = std::env::temp_dir().join("dmce_svg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let a = plot_results(&rows(), &dir).unwrap();
        let bytes_a = std::fs::read(&a[0]).unwrap();
        let b = plot_results(&rows(), &dir).unwrap();
        assert_eq!(bytes_a, std::fs::read(&b[0]).unwrap());
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = std::env::temp_dir().join("dmce_svg_test");
        std::fs::create_dir_all(&dir).unwrap();
        assert!(plot_results(&[], &dir).is_err());
    }
}
