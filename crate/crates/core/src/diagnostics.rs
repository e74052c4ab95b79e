//! Measurement instruments: empirical transfer-exponent estimation and
//! rate-exponent fitting.
//!
//! The transfer exponent is read off the lower envelope of empirical
//! log ball-mass ratios: for each radius the minimum of
//! `log(P_hat(B(x,r)) / Q_hat(B(x,r)))` over probes estimates the binding
//! direction of the mass inequality, and its slope against `log r` recovers
//! the exponent. Probe-averaging instead of the envelope would mix in the
//! non-singular bulk, where the ratio is flat in r, and shrink the estimate
//! toward zero, so the envelope is the instrument of record; the averaged
//! table is still reported for inspection.

use crate::harness::RateRecord;
use crate::space::{NnIndex, Point};
use crate::{Error, Result};

/// Result of a transfer-exponent estimation.
#[derive(Clone, Debug)]
pub struct GammaEstimate {
    /// Estimated transfer exponent (finite families only).
    pub gamma_hat: f64,
    /// Intercept of the log-log envelope fit (a log-constant proxy).
    pub intercept: f64,
    /// Radii that contributed at least one feasible probe.
    pub radii: Vec<f64>,
    /// Number of (probe, radius) pairs that met the count threshold.
    pub n_points_used: usize,
    /// RMS residual of the envelope around the fitted line.
    pub fit_residual: f64,
    /// Per-radius table: radius, probe-averaged mass ratio Q_hat/P_hat,
    /// envelope of log(Q_hat/P_hat), and the number of feasible probes.
    pub per_radius: Vec<RadiusStat>,
}

#[derive(Clone, Copy, Debug)]
pub struct RadiusStat {
    pub radius: f64,
    pub mean_ratio: f64,
    pub envelope_log_ratio: f64,
    pub probes_used: usize,
}

/// Estimation outcome: a finite estimate, or a disjoint-support flag when
/// most probes see no source mass at all.
#[derive(Clone, Debug)]
pub enum GammaOutcome {
    Estimate(GammaEstimate),
    /// At the smallest radius, at least half the probes had zero source
    /// count: the transfer exponent is effectively infinite.
    LikelyInfinite { zero_source_fraction: f64 },
}

/// Default radius grid: 12 log-spaced values spanning [0.02, 0.5] of the
/// unit diameter.
pub fn default_radii() -> Vec<f64> {
    let (lo, hi, n) = (0.02f64, 0.5f64, 12);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Estimate the transfer exponent from raw samples.
///
/// For each probe and radius with at least `min_count` points of both
/// samples in the ball, the log mass ratio is recorded; per radius the
/// envelope (max of `log(Q_hat/P_hat)`, equivalently min of the inverse) is
/// fitted against `log r` by least squares, and `gamma_hat` is the negated
/// slope.
pub fn estimate_gamma(
    source_pts: &[Point],
    target_pts: &[Point],
    probes: &[Point],
    radii: &[f64],
    min_count: usize,
) -> Result<GammaOutcome> {
    if source_pts.is_empty() || target_pts.is_empty() || probes.is_empty() {
        return Err(Error::EmptySample);
    }
    if min_count == 0 {
        return Err(Error::InvalidParam {
            name: "min_count",
            reason: "must be at least 1".into(),
        });
    }
    let mut radii: Vec<f64> = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    if radii.is_empty() || radii[0] <= 0.0 || *radii.last().unwrap() > 1.0 {
        return Err(Error::InvalidParam {
            name: "radii",
            reason: "need a nonempty grid within (0, 1]".into(),
        });
    }

    let src = NnIndex::build(source_pts)?;
    let tgt = NnIndex::build(target_pts)?;
    let (n_s, n_t) = (source_pts.len() as f64, target_pts.len() as f64);

    // disjoint-support flag: zero source mass near most probes
    let r_min = radii[0];
    let zero_src = probes
        .iter()
        .map(|x| src.ball_count(x, r_min))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .filter(|&&c| c == 0)
        .count();
    let zero_frac = zero_src as f64 / probes.len() as f64;
    if zero_frac >= 0.5 {
        return Ok(GammaOutcome::LikelyInfinite { zero_source_fraction: zero_frac });
    }

    let mut per_radius = Vec::new();
    let mut used_radii = Vec::new();
    let mut n_points_used = 0usize;
    for &r in &radii {
        let mut envelope = f64::NEG_INFINITY;
        let mut ratio_sum = 0.0;
        let mut feasible = 0usize;
        for x in probes {
            let cp = src.ball_count(x, r)?;
            let cq = tgt.ball_count(x, r)?;
            if cp >= min_count && cq >= min_count {
                feasible += 1;
                let log_qp = (cq as f64 / n_t).ln() - (cp as f64 / n_s).ln();
                ratio_sum += (cq as f64 / n_t) / (cp as f64 / n_s);
                if log_qp > envelope {
                    envelope = log_qp;
                }
            }
        }
        if feasible > 0 {
            n_points_used += feasible;
            used_radii.push(r);
            per_radius.push(RadiusStat {
                radius: r,
                mean_ratio: ratio_sum / feasible as f64,
                envelope_log_ratio: envelope,
                probes_used: feasible,
            });
        }
    }
    if per_radius.len() < 2 {
        return Err(Error::TooFewPoints {
            need: 2,
            have: per_radius.len(),
        });
    }

    let xs: Vec<f64> = per_radius.iter().map(|s| s.radius.ln()).collect();
    let ys: Vec<f64> = per_radius.iter().map(|s| s.envelope_log_ratio).collect();
    let fit = ols(&xs, &ys);
    Ok(GammaOutcome::Estimate(GammaEstimate {
        gamma_hat: -fit.slope,
        intercept: fit.intercept,
        radii: used_radii,
        n_points_used,
        fit_residual: fit.rms_residual,
        per_radius,
    }))
}

/// An ordinary least-squares fit of decay rate: slope of `log(excess)`
/// against `log n`, sign-flipped so that positive means decay.
#[derive(Clone, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    /// The fitted `(log n, log excess)` pairs.
    pub points: Vec<(f64, f64)>,
}

/// Fit a rate exponent from sweep records passing `filter`. Records with an
/// exactly zero error estimate are replaced by their confidence half-width
/// when it is positive (censoring), and dropped otherwise; both cases are
/// counted and reported on stderr.
pub fn fit_rate<F>(records: &[RateRecord], filter: F) -> Result<RateFit>
where
    F: Fn(&RateRecord) -> bool,
{
    let mut points = Vec::new();
    let mut censored = 0usize;
    let mut dropped = 0usize;
    for rec in records.iter().filter(|r| filter(r)) {
        let n = (rec.n_p + rec.n_q) as f64;
        let y = if rec.excess_error > 0.0 {
            rec.excess_error
        } else if rec.ci_half_width > 0.0 {
            censored += 1;
            rec.ci_half_width
        } else {
            dropped += 1;
            continue;
        };
        points.push((n.ln(), y.ln()));
    }
    if censored + dropped > 0 {
        eprintln!("fit_rate: {censored} zero-error records censored to their CI half-width, {dropped} dropped");
    }
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            need: 4,
            have: points.len(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = ols(&xs, &ys);
    Ok(RateFit {
        slope: -fit.slope,
        stderr: fit.stderr_slope,
        points,
    })
}

pub(crate) struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub rms_residual: f64,
}

pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> Ols {
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let dof = (n - 2.0).max(1.0);
    Ols {
        slope,
        intercept,
        stderr_slope: (ssr / dof / sxx).sqrt(),
        rms_residual: (ssr / n).sqrt(),
    }
}
