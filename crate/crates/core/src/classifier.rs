//! Pooled-sample k-NN classification, theoretical rate formulas, and the
//! batched implicit-1-NN diagnostic.
//!
//! The classifier treats source and labeled target points as one sample and
//! averages labels over the k nearest pooled neighbors. The rate formulas
//! turn certified family parameters into the oracle choice of k and the
//! predicted error-decay exponents, which the harness measures empirically.

use rand::seq::SliceRandom;

use crate::rng::rng_from;
use crate::space::{Label, NnIndex, Point, TransferSample};
use crate::synth::{FamilyParams, Gamma, Regime};
use crate::{Error, Result};

/// k-NN model over the pooled source + labeled-target sample.
#[derive(Clone, Debug)]
pub struct PooledModel {
    index: NnIndex,
    labels: Vec<Label>,
    n_p: usize,
    n_q: usize,
}

/// Fit the pooled model. The sample must carry no unlabeled target points;
/// the semi-supervised path goes through the cover instead.
pub fn fit_pooled(sample: &TransferSample) -> Result<PooledModel> {
    if !sample.target_unlabeled().is_empty() {
        return Err(Error::UnlabeledTarget);
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut points = Vec::with_capacity(sample.len());
    let mut labels = Vec::with_capacity(sample.len());
    for (p, y) in sample.source().iter().chain(sample.target_labeled()) {
        points.push(p.clone());
        labels.push(*y);
    }
    Ok(PooledModel {
        index: NnIndex::build(&points)?,
        labels,
        n_p: sample.n_p(),
        n_q: sample.n_q(),
    })
}

impl PooledModel {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn index(&self) -> &NnIndex {
        &self.index
    }

    pub fn label(&self, id: usize) -> Label {
        self.labels[id]
    }

    /// Mean label over the k nearest pooled neighbors of `x`.
    pub fn eta_hat(&self, x: &Point, k: usize) -> Result<f64> {
        let nbrs = self.index.knn(x, k)?;
        let ones: u32 = nbrs.iter().map(|&(_, id)| u32::from(self.labels[id])).sum();
        Ok(f64::from(ones) / k as f64)
    }

    /// Plug-in classification: 1 iff the regression estimate is >= 1/2.
    pub fn predict(&self, x: &Point, k: usize) -> Result<Label> {
        Ok(u8::from(self.eta_hat(x, k)? >= 0.5))
    }
}

/// Rate bookkeeping: family parameters plus the derived exponent
/// `d0 = 2 + d/alpha` (doubling-measure regime) or `2 + beta + d/alpha`
/// (bounded-covering-number regime).
#[derive(Clone, Debug)]
pub struct RateSpec {
    params: FamilyParams,
    d0: f64,
}

impl RateSpec {
    pub fn new(params: FamilyParams) -> Result<Self> {
        params.validate()?;
        let d_over_alpha = params.dim as f64 / params.alpha;
        let d0 = match params.regime {
            Regime::Dm => 2.0 + d_over_alpha,
            Regime::Bcn => 2.0 + params.beta + d_over_alpha,
        };
        Ok(Self { params, d0 })
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }
}

/// Which term of the rate dominates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateSide {
    SourceDominated,
    TargetDominated,
}

fn ceil_stable(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// The rate-optimal number of neighbors,
/// `ceil((n_P^(d0/(d0+gamma/alpha)) + n_Q)^(2/d0))` clamped to the sample
/// size. An infinite transfer exponent replaces the source term by 1.
pub fn optimal_k(n_p: usize, n_q: usize, spec: &RateSpec) -> Result<usize> {
    if n_p == 0 && n_q == 0 {
        return Err(Error::EmptySample);
    }
    let d0 = self::RateSpec::d0(spec);
    let source_term = match spec.params.gamma {
        Gamma::Infinite => 1.0,
        Gamma::Finite(g) => (n_p as f64).powf(d0 / (d0 + g / spec.params.alpha)),
    };
    let k = ceil_stable((source_term + n_q as f64).powf(2.0 / d0));
    Ok(k.clamp(1, n_p + n_q))
}

/// Predicted excess-error decay exponent (positive = decay): the source term
/// decays like `n_P^-(beta+1)/(d0+gamma/alpha)`, the target term like
/// `n_Q^-(beta+1)/d0`. With an infinite transfer exponent source data buys
/// nothing, so the source-side exponent is 0.
pub fn rate_exponent(spec: &RateSpec, side: RateSide) -> f64 {
    let bp1 = spec.params.beta + 1.0;
    match side {
        RateSide::TargetDominated => bp1 / spec.d0,
        RateSide::SourceDominated => match spec.params.gamma {
            Gamma::Infinite => 0.0,
            Gamma::Finite(g) => bp1 / (spec.d0 + g / spec.params.alpha),
        },
    }
}

/// Disjoint batches, each holding `floor(n_P/k)` source indices and
/// `floor(n_Q/k)` target indices drawn without replacement.
#[derive(Clone, Debug)]
pub struct BatchPartition {
    k: usize,
    batches: Vec<Vec<usize>>,
}

impl BatchPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }
}

pub fn make_batch_partition(n_p: usize, n_q: usize, k: usize, seed: u64) -> Result<BatchPartition> {
    let max = n_p.max(n_q);
    if k == 0 || k > max {
        return Err(Error::KOutOfRange { k, max });
    }
    let mut rng = rng_from(seed, &[]);
    let mut src: Vec<usize> = (0..n_p).collect();
    let mut tgt: Vec<usize> = (n_p..n_p + n_q).collect();
    src.shuffle(&mut rng);
    tgt.shuffle(&mut rng);
    let (per_s, per_t) = (n_p / k, n_q / k);
    let batches = (0..k)
        .map(|i| {
            let mut b: Vec<usize> = src[i * per_s..(i + 1) * per_s].to_vec();
            b.extend_from_slice(&tgt[i * per_t..(i + 1) * per_t]);
            b
        })
        .collect();
    Ok(BatchPartition { k, batches })
}

/// Verify that the true k-NN distances dominate the per-batch 1-NN distances:
/// `sum_i rho(X_(i), x)^alpha <= sum_i rho(Xtilde_i, x)^alpha`. This holds for
/// every configuration; the diagnostic exists so the claim stays testable.
pub fn check_bias_lemma(
    model: &PooledModel,
    partition: &BatchPartition,
    x: &Point,
    alpha: f64,
) -> Result<bool> {
    let k = partition.k;
    if k > model.len() {
        return Err(Error::KOutOfRange { k, max: model.len() });
    }
    let knn_sum: f64 = model
        .index
        .knn(x, k)?
        .iter()
        .map(|&(d, _)| d.powf(alpha))
        .sum();
    let mut batch_sum = 0.0;
    for batch in &partition.batches {
        let mut best = f64::INFINITY;
        for &id in batch {
            // stable ids coincide with build order for the pooled model
            let d = crate::space::linf(model.index.input_coords(id), x.coords());
            if d < best {
                best = d;
            }
        }
        batch_sum += best.powf(alpha);
    }
    Ok(knn_sum <= batch_sum * (1.0 + 1e-12) + 1e-12)
}
