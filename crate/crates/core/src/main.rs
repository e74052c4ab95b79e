//! Command-line front end: sweeps, cover inspection, adaptive runs, transfer-
//! exponent estimation, and plot-script emission.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covshift::harness::{
    emit_plot_script, read_records, resolve_family, run_cover_once, run_sweep, write_records,
    ExperimentConfig, KPolicy,
};
use covshift::rng::{mix_seed, stream};
use covshift::diagnostics::{default_radii, estimate_gamma, GammaOutcome};
use covshift::{Error, Result};

#[derive(Parser)]
#[command(name = "covshift", about = "k-NN transfer learning under covariate shift", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured sweep and write rate records as CSV.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build covers at each sweep point; print level grid, per-level
    /// additions, and query counts as CSV.
    Cover {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the cover-based adaptive classifier sweep; optionally dump
    /// per-query traces for the first sweep point.
    Adapt {
        config: PathBuf,
        /// Write per-query interval-walk traces to this CSV path.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the transfer exponent on samples from the configured family.
    Gamma {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Emit a self-contained plotting script for a records CSV.
    Plot { records: PathBuf, out: PathBuf },
}

fn load_config(path: &PathBuf, ov: &Overrides) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(t) = ov.trials {
        cfg.trials = t;
    }
    if let Some(o) = &ov.out {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let records = run_sweep(cfg)?;
    if let Err(e) = write_records(&cfg.output, cfg, &records) {
        eprintln!("note: {} may hold partial output", cfg.output.display());
        return Err(e);
    }
    eprintln!("wrote {} records to {}", records.len(), cfg.output.display());
    Ok(())
}

fn cmd_cover(cfg: &ExperimentConfig) -> Result<()> {
    let mut out = String::from("# covshift cover summary\n");
    out.push_str(&format!("# config_hash={}\n", cfg.hash()));
    out.push_str("n_P,n_Q,trial,level_k,added,total_queries\n");
    for &n_p in &cfg.sweep.n_p {
        for &n_q in &cfg.sweep.n_q {
            for trial in 0..cfg.trials {
                let cover = run_cover_once(cfg, n_p, n_q, trial)?;
                let total = cover.queries().len();
                if cover.levels().is_empty() {
                    out.push_str(&format!("{n_p},{n_q},{trial},0,0,{total}\n"));
                }
                for &(k, added) in cover.level_additions() {
                    out.push_str(&format!("{n_p},{n_q},{trial},{k},{added},{total}\n"));
                }
            }
        }
    }
    fs::write(&cfg.output, &out)?;
    eprintln!("wrote cover summary to {}", cfg.output.display());
    Ok(())
}

fn cmd_adapt(cfg: &ExperimentConfig, traces: Option<&PathBuf>) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.k_policy = KPolicy::CoverAdaptive;
    let records = run_sweep(&cfg)?;
    write_records(&cfg.output, &cfg, &records)?;
    eprintln!("wrote {} records to {}", records.len(), cfg.output.display());

    if let Some(trace_path) = traces {
        let (n_p, n_q) = (cfg.sweep.n_p[0], cfg.sweep.n_q[0]);
        let family = resolve_family(&cfg.family, n_p, n_q)?;
        let source = family.sample_source(n_p, mix_seed(cfg.seed, &[stream::SOURCE, n_p as u64, n_q as u64, 0]));
        let target = family.sample_target(n_q, mix_seed(cfg.seed, &[stream::TARGET, n_p as u64, n_q as u64, 0]));
        let features: Vec<_> = target.iter().map(|(p, _)| p.clone()).collect();
        let sample = covshift::TransferSample::new(family.space(), source, vec![], features)?;
        let mut labeler = |i: usize| {
            target
                .get(i - n_p)
                .map(|(_, y)| *y)
                .ok_or_else(|| format!("index {i} outside the target block"))
        };
        let acfg = covshift::adaptive::AdaptiveConfig::new(cfg.resolve_v_b(&family), cfg.delta)?;
        let clf = covshift::adaptive::cover_based_classifier(&sample, &mut labeler, &acfg)?;
        let probes = family.sample_target_points(16, mix_seed(cfg.seed, &[stream::PROBES, n_p as u64, n_q as u64]));
        let mut out = String::from("query,step,k,eta_k,lower,upper,stop_reason,final_label\n");
        for (qi, x) in probes.iter().enumerate() {
            let trace = clf.trace(x)?;
            for (si, s) in trace.steps.iter().enumerate() {
                out.push_str(&format!(
                    "{qi},{si},{},{},{},{},{:?},{}\n",
                    s.k, s.eta_k, s.lower, s.upper, trace.stop_reason, trace.final_label
                ));
            }
        }
        fs::write(trace_path, &out)?;
        eprintln!("wrote traces to {}", trace_path.display());
    }
    Ok(())
}

fn cmd_gamma(cfg: &ExperimentConfig) -> Result<()> {
    let (n_p, n_q) = (cfg.sweep.n_p[0], cfg.sweep.n_q[0]);
    let family = resolve_family(&cfg.family, n_p, n_q)?;
    let source: Vec<_> = family
        .sample_source(n_p, mix_seed(cfg.seed, &[stream::SOURCE, n_p as u64, n_q as u64, 0]))
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let target = family.sample_target_points(n_q, mix_seed(cfg.seed, &[stream::TARGET, n_p as u64, n_q as u64, 0]));
    let probes = family.sample_target_points(cfg.gamma_probes, mix_seed(cfg.seed, &[stream::PROBES]));
    let radii = cfg.gamma_radii.clone().unwrap_or_else(default_radii);
    let outcome = estimate_gamma(&source, &target, &probes, &radii, cfg.gamma_min_count)?;

    let mut out = String::from("# covshift transfer-exponent estimate\n");
    out.push_str(&format!("# config_hash={}\n", cfg.hash()));
    match &outcome {
        GammaOutcome::Estimate(est) => {
            out.push_str(&format!(
                "# gamma_hat={} intercept={} fit_residual={} n_points_used={}\n",
                est.gamma_hat, est.intercept, est.fit_residual, est.n_points_used
            ));
            out.push_str("r,mean_ratio_q_over_p,envelope_log_q_over_p,probes_used\n");
            for s in &est.per_radius {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    s.radius, s.mean_ratio, s.envelope_log_ratio, s.probes_used
                ));
            }
            eprintln!("gamma_hat = {}", est.gamma_hat);
        }
        GammaOutcome::LikelyInfinite { zero_source_fraction } => {
            out.push_str(&format!(
                "# gamma likely infinite (disjoint supports): zero_source_fraction={zero_source_fraction}\n"
            ));
            eprintln!("gamma likely infinite: {zero_source_fraction:.2} of probes see no source mass");
        }
    }
    fs::write(&cfg.output, &out)?;
    eprintln!("wrote estimate to {}", cfg.output.display());
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Sweep { config, overrides } => cmd_sweep(&load_config(&config, &overrides)?),
        Cmd::Cover { config, overrides } => cmd_cover(&load_config(&config, &overrides)?),
        Cmd::Adapt { config, traces, overrides } => {
            cmd_adapt(&load_config(&config, &overrides)?, traces.as_ref())
        }
        Cmd::Gamma { config, overrides } => cmd_gamma(&load_config(&config, &overrides)?),
        Cmd::Plot { records, out } => {
            read_records(&records).map(|_| ())?;
            emit_plot_script(&records, &out)?;
            eprintln!("wrote plot script to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
