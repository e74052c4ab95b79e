//! Record persistence. The CSV column set is a stable contract:
//! `n_P,n_Q,trial,k_used,queries_made,excess_error,ci_half_width,wall_time_ms`.
//! Comment lines start with `#` and carry the config hash for reproducibility.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ExperimentConfig, RateRecord};
use crate::{Error, Result};

pub const COLUMNS: [&str; 8] = [
    "n_P",
    "n_Q",
    "trial",
    "k_used",
    "queries_made",
    "excess_error",
    "ci_half_width",
    "wall_time_ms",
];

/// Write records with a config-hash stamp. Floats use the shortest
/// round-trippable representation, so `read_records` restores them exactly.
pub fn write_records(path: &Path, cfg: &ExperimentConfig, records: &[RateRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# covshift rate records\n");
    out.push_str(&format!("# config_hash={}\n", cfg.hash()));
    out.push_str(&format!("# family={}\n", cfg.family.id));
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n_p, r.n_q, r.trial, r.k_used, r.queries_made, r.excess_error, r.ci_half_width, r.wall_time_ms
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read records back, skipping comments and validating the header.
pub fn read_records(path: &Path) -> Result<Vec<RateRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| Error::CsvParse {
        line: 0,
        reason: "file has no header row".into(),
    })?;
    let have: Vec<&str> = header.split(',').map(str::trim).collect();
    let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !have.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing.join(", ")));
    }
    let col = |name: &str| have.iter().position(|h| *h == name).unwrap();
    let idx = [
        col("n_P"),
        col("n_Q"),
        col("trial"),
        col("k_used"),
        col("queries_made"),
        col("excess_error"),
        col("ci_half_width"),
        col("wall_time_ms"),
    ];
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |reason: String| Error::CsvParse { line: lineno + 1, reason };
        if fields.len() < have.len() {
            return Err(parse_err(format!(
                "expected {} fields, got {}",
                have.len(),
                fields.len()
            )));
        }
        let u = |i: usize| -> Result<usize> {
            fields[idx[i]]
                .parse()
                .map_err(|e| parse_err(format!("{}: {e}", COLUMNS[i])))
        };
        let f = |i: usize| -> Result<f64> {
            fields[idx[i]]
                .parse()
                .map_err(|e| parse_err(format!("{}: {e}", COLUMNS[i])))
        };
        records.push(RateRecord {
            n_p: u(0)?,
            n_q: u(1)?,
            trial: u(2)?,
            k_used: u(3)?,
            queries_made: u(4)?,
            excess_error: f(5)?,
            ci_half_width: f(6)?,
            wall_time_ms: f(7)?,
        });
        let _ = header_line;
    }
    Ok(records)
}
