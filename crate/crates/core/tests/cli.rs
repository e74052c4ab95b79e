//! End-to-end checks of the command-line interface: subcommands, overrides,
//! output contracts, and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covshift"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("covshift-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn sweep_config(dir: &Path, out: &Path) -> PathBuf {
    write_config(
        dir,
        "sweep.json",
        &format!(
            r#"{{
                "family": {{"id": "margin_singularity", "params": {{"gamma": 1.0}}}},
                "sweep": {{"n_p": [200, 400], "n_q": [0]}},
                "trials": 2,
                "k_policy": "oracle_optimal",
                "m_eval": 400,
                "seed": 11,
                "output": "{}"
            }}"#,
            out.display()
        ),
    )
}

#[test]
fn sweep_writes_records_and_is_deterministic_modulo_timing() {
    let dir = workdir("sweep");
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    let cfg = sweep_config(&dir, &out_a);

    let status = bin().args(["sweep"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let status = bin()
        .args(["sweep"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_b)
        .status()
        .unwrap();
    assert!(status.success());

    let strip_timing = |path: &Path| {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                if l.starts_with('#') || l.starts_with("n_P") {
                    l.to_string()
                } else {
                    l.rsplit_once(',').unwrap().0.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    // identical configs give byte-identical rows apart from wall-clock timing
    // (and the config hash, which covers the output path)
    let rows = |s: String| s.lines().skip(3).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(rows(strip_timing(&out_a)), rows(strip_timing(&out_b)));

    let text = fs::read_to_string(&out_a).unwrap();
    assert!(text.starts_with("# covshift rate records"));
    assert!(text.contains("n_P,n_Q,trial,k_used,queries_made,excess_error,ci_half_width,wall_time_ms"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count() - 1, 4);
}

#[test]
fn seed_and_trials_overrides_change_the_run() {
    let dir = workdir("overrides");
    let out = dir.join("o.csv");
    let cfg = sweep_config(&dir, &out);
    let status = bin()
        .args(["sweep"])
        .arg(&cfg)
        .args(["--trials", "1", "--seed", "99"])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count() - 1, 2);
}

#[test]
fn cover_subcommand_emits_level_table() {
    let dir = workdir("cover");
    let out = dir.join("cover.csv");
    let cfg = write_config(
        &dir,
        "cover.json",
        &format!(
            r#"{{
                "family": {{"id": "disjoint_support", "params": {{"dim": 1}}}},
                "sweep": {{"n_p": [800], "n_q": [64]}},
                "trials": 1,
                "k_policy": "cover_adaptive",
                "m_eval": 400,
                "seed": 5,
                "output": "{}"
            }}"#,
            out.display()
        ),
    );
    let status = bin().args(["cover"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("n_P,n_Q,trial,level_k,added,total_queries"));
    // disjoint supports force queries at the first level
    let first_row = text.lines().find(|l| l.starts_with("800,")).unwrap();
    let fields: Vec<&str> = first_row.split(',').collect();
    assert!(fields[5].parse::<usize>().unwrap() >= 32);
}

#[test]
fn adapt_subcommand_writes_records_and_traces() {
    let dir = workdir("adapt");
    let out = dir.join("adapt.csv");
    let traces = dir.join("traces.csv");
    let cfg = write_config(
        &dir,
        "adapt.json",
        &format!(
            r#"{{
                "family": {{"id": "margin_singularity", "params": {{"gamma": 0.0}}}},
                "sweep": {{"n_p": [600], "n_q": [100]}},
                "trials": 1,
                "k_policy": "cover_adaptive",
                "m_eval": 300,
                "seed": 2,
                "output": "{}"
            }}"#,
            out.display()
        ),
    );
    let status = bin()
        .args(["adapt"])
        .arg(&cfg)
        .args(["--traces"])
        .arg(&traces)
        .status()
        .unwrap();
    assert!(status.success());
    let records = fs::read_to_string(&out).unwrap();
    assert!(records.lines().any(|l| l.starts_with("600,100,0,0,")));
    let trace_text = fs::read_to_string(&traces).unwrap();
    assert!(trace_text.starts_with("query,step,k,eta_k,lower,upper,stop_reason,final_label"));
    assert!(trace_text.lines().count() > 16);
}

#[test]
fn gamma_subcommand_reports_an_estimate() {
    let dir = workdir("gamma");
    let out = dir.join("gamma.csv");
    let cfg = write_config(
        &dir,
        "gamma.json",
        &format!(
            r#"{{
                "family": {{"id": "margin_singularity", "params": {{"gamma": 1.0}}}},
                "sweep": {{"n_p": [20000], "n_q": [20000]}},
                "trials": 1,
                "k_policy": "oracle_optimal",
                "m_eval": 400,
                "seed": 8,
                "output": "{}"
            }}"#,
            out.display()
        ),
    );
    let output = bin().args(["gamma"]).arg(&cfg).output().unwrap();
    assert!(output.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# gamma_hat="));
    assert!(text.contains("r,mean_ratio_q_over_p,envelope_log_q_over_p,probes_used"));
}

#[test]
fn plot_subcommand_round_trips_through_records() {
    let dir = workdir("plot");
    let out = dir.join("p.csv");
    let cfg = sweep_config(&dir, &out);
    assert!(bin().args(["sweep"]).arg(&cfg).status().unwrap().success());
    let script = dir.join("plot.py");
    let status = bin().args(["plot"]).arg(&out).arg(&script).status().unwrap();
    assert!(status.success());
    assert!(fs::read_to_string(&script).unwrap().contains("SERIES"));
}

#[test]
fn config_errors_exit_2_runtime_errors_exit_3() {
    let dir = workdir("exits");
    // unknown family id: configuration error
    let bad = write_config(
        &dir,
        "bad.json",
        r#"{
            "family": {"id": "nope", "params": {}},
            "sweep": {"n_p": [10], "n_q": [0]},
            "k_policy": "oracle_optimal",
            "m_eval": 400
        }"#,
    );
    let output = bin().args(["sweep"]).arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("margin_singularity"), "stderr was: {stderr}");

    // malformed JSON: configuration error
    let broken = write_config(&dir, "broken.json", "{not json");
    let output = bin().args(["sweep"]).arg(&broken).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // unreadable records file: runtime error
    let output = bin()
        .args(["plot"])
        .arg(dir.join("missing.csv"))
        .arg(dir.join("x.py"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}
