//! Experiment harness: JSON configuration, family presets, sweep execution,
//! and CSV persistence.
//!
//! A sweep crosses lists of source/target sample sizes, runs seeded trials at
//! each point, and writes one record per trial. Per-trial seeds derive from
//! `(seed, n_P, n_Q, trial)`, never from execution order, so adding or
//! removing trials or running on more workers cannot change existing rows.

mod csv;
mod plot;

pub use csv::{read_records, write_records};
pub use plot::emit_plot_script;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adaptive::{cover_based_classifier, AdaptiveConfig, LepskiClassifier};
use crate::classifier::{fit_pooled, optimal_k, RateSpec};
use crate::rng::{content_hash, mix_seed, stream};
use crate::space::{Point, TransferSample};
use crate::synth::{
    excess_error_mc, make_dimension_gap_family, make_disjoint_support_family,
    make_lowerbound_family, make_margin_singularity_family, FamilyParams, Gamma, LowerBoundSpec,
    Regime, TransferFamily,
};
use crate::{Error, Result};

/// Family preset: a string id plus a free-form parameter map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilySpec {
    pub id: String,
    #[serde(default)]
    pub params: Value,
}

/// Sample-size sweep: the cross product of the two lists is executed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_p: Vec<usize>,
    pub n_q: Vec<usize>,
}

/// How k is chosen for classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    /// Rate-optimal k from the family's certified parameters.
    OracleOptimal,
    /// A fixed k, clamped to the pooled sample size.
    Fixed(usize),
    /// Adaptive local k over the fully labeled pooled sample.
    AdaptiveLepski,
    /// Cover-based label requests plus adaptive local k over the retained set.
    CoverAdaptive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub sweep: SweepSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub k_policy: KPolicy,
    #[serde(default = "default_m_eval")]
    pub m_eval: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// VC bound for metric balls; defaults to 2d+1 for the family dimension.
    #[serde(default)]
    pub v_b: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Knobs for the `gamma` subcommand.
    #[serde(default = "default_gamma_probes")]
    pub gamma_probes: usize,
    #[serde(default = "default_gamma_min_count")]
    pub gamma_min_count: usize,
    #[serde(default)]
    pub gamma_radii: Option<Vec<f64>>,
}

fn default_trials() -> usize {
    1
}
fn default_m_eval() -> usize {
    10_000
}
fn default_delta() -> f64 {
    0.05
}
fn default_output() -> PathBuf {
    PathBuf::from("records.csv")
}
fn default_gamma_probes() -> usize {
    200
}
fn default_gamma_min_count() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.n_p.is_empty() || self.sweep.n_q.is_empty() {
            return Err(Error::Config("sweep lists must be nonempty".into()));
        }
        for (&n_p, &n_q) in self.sweep.n_p.iter().flat_map(|p| self.sweep.n_q.iter().map(move |q| (p, q))) {
            if n_p == 0 && n_q == 0 {
                return Err(Error::Config("every sweep point needs n_P or n_Q >= 1".into()));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.m_eval < 100 {
            return Err(Error::Config("m_eval must be at least 100".into()));
        }
        Ok(())
    }

    /// Stable hash of the configuration, stamped into output files.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", content_hash(text.as_bytes()))
    }

    pub fn resolve_v_b(&self, family: &TransferFamily) -> usize {
        self.v_b.unwrap_or(2 * family.space().dim() + 1)
    }
}

/// One measured sweep row.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRecord {
    pub n_p: usize,
    pub n_q: usize,
    pub trial: usize,
    /// Fixed/oracle k, or 0 for adaptive policies where k varies per query.
    pub k_used: usize,
    pub queries_made: usize,
    pub excess_error: f64,
    pub ci_half_width: f64,
    pub wall_time_ms: f64,
}

fn params_obj(spec: &FamilySpec) -> Result<serde_json::Map<String, Value>> {
    match &spec.params {
        Value::Object(m) => Ok(m.clone()),
        Value::Null => Ok(serde_json::Map::new()),
        other => Err(Error::Config(format!(
            "family params must be a JSON object, got {other}"
        ))),
    }
}

fn get_f64(m: &serde_json::Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match m.get(key) {
        Some(v) => v.as_f64().ok_or_else(|| Error::Config(format!("param `{key}` must be a number"))),
        None => default.ok_or_else(|| Error::Config(format!("missing required param `{key}`"))),
    }
}

fn get_usize(m: &serde_json::Map<String, Value>, key: &str, default: Option<usize>) -> Result<usize> {
    match m.get(key) {
        Some(v) => v
            .as_u64()
            .map(|u| u as usize)
            .ok_or_else(|| Error::Config(format!("param `{key}` must be a nonnegative integer"))),
        None => default.ok_or_else(|| Error::Config(format!("missing required param `{key}`"))),
    }
}

fn get_gamma(m: &serde_json::Map<String, Value>, key: &str) -> Result<Gamma> {
    match m.get(key) {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("param `{key}`: {e}"))),
        None => Err(Error::Config(format!("missing required param `{key}`"))),
    }
}

fn get_regime(m: &serde_json::Map<String, Value>, key: &str, default: Regime) -> Result<Regime> {
    match m.get(key) {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::Config(format!("param `{key}`: {e}"))),
        None => Ok(default),
    }
}

fn sigma_from(m: &serde_json::Map<String, Value>, count: usize) -> Result<Vec<i8>> {
    match m.get("sigma") {
        None => Ok(alternating_sigma(count)),
        Some(Value::String(s)) if s == "alternating" => Ok(alternating_sigma(count)),
        Some(Value::String(s)) if s == "all_plus" => Ok(vec![1; count]),
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| {
                v.as_i64()
                    .and_then(|x| i8::try_from(x).ok())
                    .ok_or_else(|| Error::Config("sigma entries must be ±1".into()))
            })
            .collect(),
        Some(other) => Err(Error::Config(format!(
            "sigma must be \"alternating\", \"all_plus\", or an array, got {other}"
        ))),
    }
}

fn alternating_sigma(count: usize) -> Vec<i8> {
    (0..count).map(|j| if j % 2 == 0 { 1 } else { -1 }).collect()
}

/// The proof-style schedule for the hard-instance family: cell side
/// `r = c_r * (n_P^(d0/(d0+gamma/alpha)) + n_Q)^(-1/(alpha*d0))`, plateau
/// mass `w = c_w * r^d` (doubling regime) or `c_w * r^(d+alpha*beta)`
/// (covering regime).
#[allow(clippy::too_many_arguments)]
pub fn scheduled_lowerbound_spec(
    gamma: Gamma,
    alpha: f64,
    c_alpha: f64,
    beta: f64,
    dim: usize,
    regime: Regime,
    c_r: f64,
    c_w: f64,
    m: usize,
    n_p: usize,
    n_q: usize,
) -> Result<LowerBoundSpec> {
    let params = FamilyParams {
        gamma,
        c_gamma: 1.0,
        alpha,
        c_alpha,
        beta,
        c_beta: 1.0,
        dim,
        regime,
    };
    params.validate()?;
    let d0 = RateSpec::new(params.clone())?.d0();
    let pooled_scale = match gamma {
        Gamma::Infinite => 1.0 + n_q as f64,
        Gamma::Finite(g) => (n_p as f64).powf(d0 / (d0 + g / alpha)) + n_q as f64,
    };
    let r = c_r * pooled_scale.powf(-1.0 / (alpha * d0));
    let w = match regime {
        Regime::Dm => c_w * r.powi(dim as i32),
        Regime::Bcn => c_w * r.powf(dim as f64 + alpha * beta),
    };
    Ok(LowerBoundSpec {
        r,
        m,
        w,
        sigma: alternating_sigma(m),
        params,
    })
}

/// Available family preset ids.
pub const FAMILY_IDS: &[&str] = &[
    "margin_singularity",
    "lowerbound",
    "lowerbound_scheduled",
    "dimension_gap",
    "disjoint_support",
];

/// Resolve a family preset at a sweep point. Scheduled presets depend on
/// `(n_P, n_Q)`; fixed presets ignore them.
pub fn resolve_family(spec: &FamilySpec, n_p: usize, n_q: usize) -> Result<TransferFamily> {
    let p = &params_obj(spec)?;
    match spec.id.as_str() {
        "margin_singularity" => make_margin_singularity_family(
            get_gamma(p, "gamma")?,
            get_f64(p, "alpha", Some(1.0))?,
            get_f64(p, "c_alpha", Some(1.0))?,
        ),
        "dimension_gap" => make_dimension_gap_family(
            get_usize(p, "d_p", None)?,
            get_usize(p, "d_q", None)?,
            get_f64(p, "alpha", Some(1.0))?,
            get_f64(p, "c_alpha", Some(1.0))?,
        ),
        "disjoint_support" => make_disjoint_support_family(get_usize(p, "dim", Some(1))?),
        "lowerbound" => {
            let m = get_usize(p, "m", None)?;
            let params = FamilyParams {
                gamma: get_gamma(p, "gamma")?,
                c_gamma: 1.0,
                alpha: get_f64(p, "alpha", Some(1.0))?,
                c_alpha: get_f64(p, "c_alpha", Some(3.0))?,
                beta: get_f64(p, "beta", Some(1.0))?,
                c_beta: 1.0,
                dim: get_usize(p, "dim", Some(1))?,
                regime: get_regime(p, "regime", Regime::Dm)?,
            };
            make_lowerbound_family(LowerBoundSpec {
                r: get_f64(p, "r", None)?,
                m,
                w: get_f64(p, "w", None)?,
                sigma: sigma_from(p, m)?,
                params,
            })
        }
        "lowerbound_scheduled" => {
            let m = get_usize(p, "m", Some(4))?;
            let mut spec = scheduled_lowerbound_spec(
                get_gamma(p, "gamma")?,
                get_f64(p, "alpha", Some(1.0))?,
                get_f64(p, "c_alpha", Some(3.0))?,
                get_f64(p, "beta", Some(1.0))?,
                get_usize(p, "dim", Some(1))?,
                get_regime(p, "regime", Regime::Dm)?,
                get_f64(p, "c_r", Some(0.25))?,
                get_f64(p, "c_w", Some(0.1))?,
                m,
                n_p,
                n_q,
            )?;
            spec.sigma = sigma_from(p, m)?;
            make_lowerbound_family(spec)
        }
        other => Err(Error::UnknownFamily {
            id: other.to_string(),
            available: FAMILY_IDS.join(", "),
        }),
    }
}

fn run_one(cfg: &ExperimentConfig, n_p: usize, n_q: usize, trial: usize) -> Result<RateRecord> {
    let family = resolve_family(&cfg.family, n_p, n_q)?;
    let v_b = cfg.resolve_v_b(&family);
    let t = trial as u64;
    let seed_src = mix_seed(cfg.seed, &[stream::SOURCE, n_p as u64, n_q as u64, t]);
    let seed_tgt = mix_seed(cfg.seed, &[stream::TARGET, n_p as u64, n_q as u64, t]);
    let seed_eval = mix_seed(cfg.seed, &[stream::EVAL, n_p as u64, n_q as u64, t]);

    let started = Instant::now();
    let source = family.sample_source(n_p, seed_src);
    let (estimate, ci, k_used, queries) = match cfg.k_policy {
        KPolicy::OracleOptimal | KPolicy::Fixed(_) => {
            let target = family.sample_target(n_q, seed_tgt);
            let sample = TransferSample::new(family.space(), source, target, vec![])?;
            let k = match cfg.k_policy {
                KPolicy::OracleOptimal => {
                    optimal_k(n_p, n_q, &RateSpec::new(family.params().clone())?)?
                }
                KPolicy::Fixed(k) => k.clamp(1, sample.len()),
                _ => unreachable!(),
            };
            let model = fit_pooled(&sample)?;
            let h = |x: &Point| model.predict(x, k).expect("k within range");
            let (e, c) = excess_error_mc(h, &family, cfg.m_eval, seed_eval)?;
            (e, c, k, 0)
        }
        KPolicy::AdaptiveLepski => {
            let target = family.sample_target(n_q, seed_tgt);
            let mut labeled = source;
            labeled.extend(target);
            let acfg = AdaptiveConfig::new(v_b, cfg.delta)?;
            let clf = LepskiClassifier::fit(&labeled, &acfg)?;
            let h = |x: &Point| clf.predict(x).expect("query dimension matches");
            let (e, c) = excess_error_mc(h, &family, cfg.m_eval, seed_eval)?;
            (e, c, 0, 0)
        }
        KPolicy::CoverAdaptive => {
            let target = family.sample_target(n_q, seed_tgt);
            let features: Vec<Point> = target.iter().map(|(p, _)| p.clone()).collect();
            let sample = TransferSample::new(family.space(), source, vec![], features)?;
            let mut labeler = |i: usize| {
                target
                    .get(i - n_p)
                    .map(|(_, y)| *y)
                    .ok_or_else(|| format!("index {i} outside the target block"))
            };
            let acfg = AdaptiveConfig::new(v_b, cfg.delta)?;
            let clf = cover_based_classifier(&sample, &mut labeler, &acfg)?;
            let queries = clf.cover().queries().len();
            let h = |x: &Point| clf.predict(x).expect("query dimension matches");
            let (e, c) = excess_error_mc(h, &family, cfg.m_eval, seed_eval)?;
            (e, c, 0, queries)
        }
    };
    Ok(RateRecord {
        n_p,
        n_q,
        trial,
        k_used,
        queries_made: queries,
        excess_error: estimate,
        ci_half_width: ci,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Execute the sweep. Records come back sorted by `(n_P, n_Q, trial)` and are
/// deterministic given the config (wall-clock timings aside).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RateRecord>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n_p in &cfg.sweep.n_p {
        for &n_q in &cfg.sweep.n_q {
            for trial in 0..cfg.trials {
                jobs.push((n_p, n_q, trial));
            }
        }
    }
    let mut records = jobs
        .into_par_iter()
        .map(|(n_p, n_q, trial)| run_one(cfg, n_p, n_q, trial))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.n_p, r.n_q, r.trial));
    Ok(records)
}

/// Label oracle wiring used by the `cover`/`adapt` subcommands: returns the
/// per-level additions of the cover built at one sweep point.
pub fn run_cover_once(
    cfg: &ExperimentConfig,
    n_p: usize,
    n_q: usize,
    trial: usize,
) -> Result<crate::cover::CoverIndex> {
    let family = resolve_family(&cfg.family, n_p, n_q)?;
    let t = trial as u64;
    let source = family.sample_source(n_p, mix_seed(cfg.seed, &[stream::SOURCE, n_p as u64, n_q as u64, t]));
    let features = family.sample_target_points(n_q, mix_seed(cfg.seed, &[stream::TARGET, n_p as u64, n_q as u64, t]));
    let sample = TransferSample::new(family.space(), source, vec![], features)?;
    crate::cover::build_cover(&sample, cfg.delta, cfg.resolve_v_b(&family))
}
