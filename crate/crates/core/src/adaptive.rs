//! Adaptive local choice of k by intersecting confidence intervals, and the
//! cover-based classifier that requests target labels only where needed.
//!
//! At a query point, k-NN regression estimates are computed for a doubling
//! sequence of k. Each estimate carries an interval `eta_k ± sqrt(V_B/k)·ln n`;
//! the running intersection of these intervals shrinks as k grows, and the
//! walk stops as soon as the intersection clears 1/2 (the label is then
//! certain), the intersection becomes empty (variance no longer dominates
//! bias), or k exhausts the sample. No distributional parameters are used.

use crate::cover::{base_level, build_cover, CoverIndex};
use crate::space::{Label, NnIndex, Point, TransferSample};
use crate::{Error, Result};

/// Knobs shared by the cover builder and the adaptive classifier.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveConfig {
    /// Known upper bound on the VC dimension of metric balls.
    pub v_b: usize,
    /// Confidence parameter in (0,1).
    pub delta: f64,
    /// Optional override of the base level n0.
    pub k0_override: Option<usize>,
}

impl AdaptiveConfig {
    pub fn new(v_b: usize, delta: f64) -> Result<Self> {
        if v_b == 0 {
            return Err(Error::InvalidParam {
                name: "v_b",
                reason: "VC bound must be at least 1".into(),
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParam {
                name: "delta",
                reason: format!("must lie in (0,1), got {delta}"),
            });
        }
        Ok(Self { v_b, delta, k0_override: None })
    }

    pub fn with_k0(mut self, k0: usize) -> Self {
        self.k0_override = Some(k0);
        self
    }
}

/// Why the interval walk stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The running intersection became empty.
    IntervalSplit,
    /// The upper bound fell below 1/2.
    CrossedHalfLow,
    /// The lower bound rose above 1/2.
    CrossedHalfHigh,
    /// k reached the sample-size cap with the intersection still straddling 1/2.
    KExhausted,
}

/// One iteration of the walk: the raw estimate at this k and the running
/// intersection bounds after folding it in.
#[derive(Clone, Copy, Debug)]
pub struct LepskiStep {
    pub k: usize,
    pub eta_k: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Full record of an adaptive classification at one query point.
#[derive(Clone, Debug)]
pub struct LepskiTrace {
    pub steps: Vec<LepskiStep>,
    pub stop_reason: StopReason,
    pub final_eta: f64,
    pub final_label: Label,
    pub final_k: usize,
}

/// Adaptive k-NN classifier over a fixed labeled sample.
#[derive(Clone, Debug)]
pub struct LepskiClassifier {
    index: NnIndex,
    labels: Vec<Label>,
    n: usize,
    n0: usize,
    v_b: usize,
}

impl LepskiClassifier {
    /// Fit over a labeled sample with stable ids `0..n`.
    pub fn fit(labeled: &[(Point, Label)], cfg: &AdaptiveConfig) -> Result<Self> {
        let ids: Vec<usize> = (0..labeled.len()).collect();
        Self::fit_with_ids(labeled, &ids, cfg)
    }

    /// Fit with caller-supplied stable ids (retained subsets keep their
    /// original pooled indices for tie-breaking).
    pub fn fit_with_ids(labeled: &[(Point, Label)], ids: &[usize], cfg: &AdaptiveConfig) -> Result<Self> {
        let n = labeled.len();
        let n0 = cfg.k0_override.unwrap_or_else(|| base_level(n, cfg.v_b, cfg.delta)).max(1);
        if n < n0 {
            return Err(Error::TooFewLabeled { have: n, need: n0 });
        }
        let points: Vec<Point> = labeled.iter().map(|(p, _)| p.clone()).collect();
        let index = NnIndex::build_with_ids(&points, ids)?;
        // labels addressed by stable id
        let max_id = ids.iter().copied().max().unwrap_or(0);
        let mut labels = vec![0u8; max_id + 1];
        for ((_, y), &id) in labeled.iter().zip(ids) {
            labels[id] = *y;
        }
        Ok(Self { index, labels, n, n0, v_b: cfg.v_b })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Run the interval walk at `x` and return the full trace.
    pub fn classify(&self, x: &Point) -> Result<LepskiTrace> {
        let n = self.n;
        let nf = n as f64;
        // the walk doubles k from n0 while k <= n/2, so the largest k it can
        // request is the last doubling that stays within n
        let mut k_cap = self.n0;
        while 2 * k_cap <= n {
            k_cap *= 2;
        }
        let nbrs = self.index.knn(x, k_cap.min(n))?;
        let mut prefix_ones = vec![0u32; nbrs.len() + 1];
        for (i, &(_, id)) in nbrs.iter().enumerate() {
            prefix_ones[i + 1] = prefix_ones[i] + u32::from(self.labels[id]);
        }
        let eta_at = |k: usize| f64::from(prefix_ones[k]) / k as f64;
        let width = |k: usize| (self.v_b as f64 / k as f64).sqrt() * nf.ln();

        let mut k = self.n0;
        let mut eta_k = eta_at(k);
        let mut lower = eta_k - width(k);
        let mut upper = eta_k + width(k);
        let mut final_eta = eta_k;
        let mut steps = vec![LepskiStep { k, eta_k, lower, upper }];

        let stop_reason = loop {
            if lower > 0.5 {
                break StopReason::CrossedHalfHigh;
            }
            if upper < 0.5 {
                break StopReason::CrossedHalfLow;
            }
            if 2 * k > n {
                break StopReason::KExhausted;
            }
            k *= 2;
            eta_k = eta_at(k);
            lower = (eta_k - width(k)).max(lower);
            upper = (eta_k + width(k)).min(upper);
            steps.push(LepskiStep { k, eta_k, lower, upper });
            if upper < lower {
                // keep the midpoint from before the split
                break StopReason::IntervalSplit;
            }
            final_eta = (upper + lower) / 2.0;
        };

        Ok(LepskiTrace {
            steps,
            stop_reason,
            final_eta,
            final_label: u8::from(final_eta >= 0.5),
            final_k: k,
        })
    }

    pub fn predict(&self, x: &Point) -> Result<Label> {
        Ok(self.classify(x)?.final_label)
    }
}

/// One-off adaptive classification of `x` over `labeled`.
pub fn lepski_classify(labeled: &[(Point, Label)], x: &Point, cfg: &AdaptiveConfig) -> Result<LepskiTrace> {
    LepskiClassifier::fit(labeled, cfg)?.classify(x)
}

/// A label oracle for target indices; errors are reported as strings and get
/// wrapped with the failing index.
pub type Labeler<'a> = dyn FnMut(usize) -> std::result::Result<Label, String> + 'a;

/// Cover-based semi-supervised classifier: builds the simultaneous cover,
/// requests labels once for every retained target index, and classifies with
/// the adaptive walk over the retained labeled set.
pub struct CoverClassifier {
    lepski: LepskiClassifier,
    cover: CoverIndex,
}

impl CoverClassifier {
    pub fn cover(&self) -> &CoverIndex {
        &self.cover
    }

    pub fn classifier(&self) -> &LepskiClassifier {
        &self.lepski
    }

    pub fn trace(&self, x: &Point) -> Result<LepskiTrace> {
        self.lepski.classify(x)
    }

    pub fn predict(&self, x: &Point) -> Result<Label> {
        self.lepski.predict(x)
    }
}

pub fn cover_based_classifier(
    sample: &TransferSample,
    labeler: &mut Labeler<'_>,
    cfg: &AdaptiveConfig,
) -> Result<CoverClassifier> {
    let cover = build_cover(sample, cfg.delta, cfg.v_b)?;
    let points = sample.pooled_points();
    let n_p = sample.n_p();
    let mut labeled = Vec::with_capacity(cover.retained().len());
    for &i in cover.retained() {
        let y = if i < n_p {
            sample.source()[i].1
        } else {
            labeler(i).map_err(|reason| Error::Labeler { index: i, reason })?
        };
        labeled.push((points[i].clone(), y));
    }
    let ids = cover.retained().to_vec();
    let cfg_shared = AdaptiveConfig {
        k0_override: Some(cfg.k0_override.unwrap_or(cover.k0())),
        ..*cfg
    };
    let lepski = LepskiClassifier::fit_with_ids(&labeled, &ids, &cfg_shared)?;
    Ok(CoverClassifier { lepski, cover })
}

/// Test-side oracle for the regression envelope: checks that the k-NN
/// estimate at `x` deviates from the true regression value by at most
/// `sqrt((V_B ln(2n/delta) + 8)/k)` plus the Hölder bias of the neighbor
/// distances. This is a high-probability bound; callers assert on the
/// failure frequency over seeds, not on single instances.
#[allow(clippy::too_many_arguments)]
pub fn check_envelope(
    labeled: &[(Point, Label)],
    x: &Point,
    k: usize,
    true_eta_x: f64,
    alpha: f64,
    c_alpha: f64,
    cfg: &AdaptiveConfig,
) -> Result<bool> {
    let n = labeled.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    let points: Vec<Point> = labeled.iter().map(|(p, _)| p.clone()).collect();
    let index = NnIndex::build(&points)?;
    let nbrs = index.knn(x, k)?;
    let eta_hat = nbrs
        .iter()
        .map(|&(_, id)| f64::from(labeled[id].1))
        .sum::<f64>()
        / k as f64;
    let variance = ((cfg.v_b as f64 * (2.0 * n as f64 / cfg.delta).ln() + 8.0) / k as f64).sqrt();
    let bias = c_alpha / k as f64 * nbrs.iter().map(|&(d, _)| d.powf(alpha)).sum::<f64>();
    Ok((eta_hat - true_eta_x).abs() <= variance + bias)
}
