//! Sweep result rows: CSV encoding with a fixed column set and a parser
//! that reports the offending line on malformed input.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub const CSV_HEADER: &str = "method,snr_db,alpha,bits,nmse_db,latency_ms,n";

/// One (method, grid point) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub snr_db: f64,
    pub alpha: f64,
    /// 0 = full resolution.
    pub bits: u32,
    pub nmse_db: f64,
    pub latency_ms: f64,
    pub n_realizations: usize,
}

impl ResultRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4},{}",
            self.method,
            fmt_axis(self.snr_db),
            fmt_axis(self.alpha),
            self.bits,
            self.nmse_db,
            self.latency_ms,
            self.n_realizations
        )
    }
}

/// Fixed-point axis formatting so identical sweeps serialize identically.
fn fmt_axis(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes rows sorted by (method, snr_db, alpha, bits).
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.snr_db.partial_cmp(&b.snr_db).unwrap())
            .then(a.alpha.partial_cmp(&b.alpha).unwrap())
            .then(a.bits.cmp(&b.bits))
    });
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in sorted {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        other => bail!(
            "{}: line 1: expected header {CSV_HEADER:?}, got {:?}",
            path.display(),
            other.map(|(_, h)| h).unwrap_or("")
        ),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            bail!(
                "{}: line {}: expected 7 fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        let parse = |what: &str, v: &str| -> Result<f64> {
            v.parse::<f64>().with_context(|| {
                format!("{}: line {}: bad {what} {v:?}", path.display(), idx + 1)
            })
        };
        rows.push(ResultRow {
            method: fields[0].to_string(),
            snr_db: parse("snr_db", fields[1])?,
            alpha: parse("alpha", fields[2])?,
            bits: fields[3].parse().with_context(|| {
                format!("{}: line {}: bad bits {:?}", path.display(), idx + 1, fields[3])
            })?,
            nmse_db: parse("nmse_db", fields[4])?,
            latency_ms: parse("latency_ms", fields[5])?,
            n_realizations: fields[6].parse().with_context(|| {
                format!("{}: line {}: bad n {:?}", path.display(), idx + 1, fields[6])
            })?,
        });
    }
    Ok(rows)
}
