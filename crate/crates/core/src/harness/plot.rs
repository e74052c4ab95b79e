//! Plot-script emission. The harness renders nothing itself; it writes a
//! self-contained Python script (matplotlib) with the records embedded, one
//! series per distinct n_Q value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::csv::read_records;
use crate::Result;

pub fn emit_plot_script(records_path: &Path, out_path: &Path) -> Result<()> {
    let records = read_records(records_path)?;
    let mut series: BTreeMap<usize, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in &records {
        series
            .entry(r.n_q)
            .or_default()
            .push((r.n_p + r.n_q, r.excess_error, r.ci_half_width));
    }
    let mut data = String::from("SERIES = {\n");
    for (n_q, rows) in &series {
        data.push_str(&format!("    \"n_Q={n_q}\": [\n"));
        for (n, e, ci) in rows {
            data.push_str(&format!("        ({n}, {e}, {ci}),\n"));
        }
        data.push_str("    ],\n");
    }
    data.push_str("}\n");

    let script = format!(
        r#"#!/usr/bin/env python3
"""Log-log excess error against pooled sample size, one series per n_Q.

Generated from {src}. Usage: python3 {name} [output.png]
"""
import sys

{data}

def main():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, rows in sorted(SERIES.items()):
        rows = [r for r in rows if r[1] > 0]
        if not rows:
            continue
        xs = [r[0] for r in rows]
        ys = [r[1] for r in rows]
        ax.loglog(xs, ys, "o", markersize=3, alpha=0.5, label=label)
    if any(SERIES.values()):
        ax.legend()
    ax.set_xlabel("n_P + n_Q")
    ax.set_ylabel("excess error")
    ax.grid(True, which="both", alpha=0.3)
    out = sys.argv[1] if len(sys.argv) > 1 else "rates.png"
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {{out}}")


if __name__ == "__main__":
    main()
"#,
        src = records_path.display(),
        name = out_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        data = data,
    );
    fs::write(out_path, script)?;
    Ok(())
}
