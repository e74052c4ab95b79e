//! Simultaneous k-2k covers and label-request accounting.
//!
//! A subset `X_R` of the pooled sample is a k-2k cover when every sample
//! point either belongs to `X_R` or has at least k members of `X_R` among
//! some valid choice of its 2k nearest neighbors (itself included). The
//! builder starts from all source points and sweeps a doubling grid of k
//! values, pulling in exactly the target points whose neighborhoods are not
//! yet covered; only those pulled-in target points ever need labels.

use crate::space::{NnIndex, Point, TransferSample};
use crate::{Error, Result};

/// A simultaneous k-2k cover with its level grid and label-request ledger.
#[derive(Clone, Debug)]
pub struct CoverIndex {
    retained: Vec<usize>,
    k0: usize,
    levels: Vec<usize>,
    queries: Vec<usize>,
    delta: f64,
    v_b: usize,
    level_additions: Vec<(usize, usize)>,
    n_p: usize,
    n_q: usize,
}

impl CoverIndex {
    /// Retained stable indices, ascending. All source indices are present.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Base level `n0 = ceil(V_B ln(2(n_P+n_Q)) + ln(6/delta))`.
    pub fn k0(&self) -> usize {
        self.k0
    }

    /// The doubling level grid `{2^i * n0}` capped at `(n_P v n_Q)/2`.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Target indices whose labels must be requested, ascending; each is
    /// requested exactly once.
    pub fn queries(&self) -> &[usize] {
        &self.queries
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn v_b(&self) -> usize {
        self.v_b
    }

    /// How many target indices each level pulled in, as `(k, count)` pairs.
    pub fn level_additions(&self) -> &[(usize, usize)] {
        &self.level_additions
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }
}

/// Query count and the stable-ordered list of requested target indices.
pub fn requested_labels(cover: &CoverIndex) -> (usize, &[usize]) {
    (cover.queries.len(), &cover.queries)
}

/// Count retained members among the 2k nearest neighbors of `x`, under the
/// most favorable valid tie-break: points strictly inside the 2k-th distance
/// all count, and ties at that distance are filled preferring retained points.
fn retained_among_2k(index: &NnIndex, x: &Point, k2: usize, in_r: &[bool]) -> Result<usize> {
    let nbrs = index.knn(x, k2)?;
    let boundary = nbrs.last().expect("k2 >= 1").0;
    let mut strict = 0usize;
    let mut strict_retained = 0usize;
    for &(d, id) in &nbrs {
        if d < boundary {
            strict += 1;
            if in_r[id] {
                strict_retained += 1;
            }
        }
    }
    let slots = k2 - strict;
    let tied_retained = index
        .ball_members(x, boundary)?
        .into_iter()
        .filter(|&(d, id)| d == boundary && in_r[id])
        .count();
    Ok(strict_retained + tied_retained.min(slots))
}

/// Whether `X_R` (given by indices into `points`) is a k-2k cover of the
/// pooled points.
pub fn is_k2k_cover(points: &[Point], retained: &[usize], k: usize) -> Result<bool> {
    let index = NnIndex::build(points)?;
    let mut in_r = vec![false; points.len()];
    for &i in retained {
        in_r[i] = true;
    }
    is_k2k_cover_indexed(&index, points, &in_r, k)
}

/// Same check against a prebuilt index (the ids of `index` must be `0..n`).
pub fn is_k2k_cover_indexed(index: &NnIndex, points: &[Point], in_r: &[bool], k: usize) -> Result<bool> {
    let n = points.len();
    if k == 0 || 2 * k > n {
        return Err(Error::KOutOfRange { k, max: n / 2 });
    }
    for (i, x) in points.iter().enumerate() {
        if in_r[i] {
            continue;
        }
        if retained_among_2k(index, x, 2 * k, in_r)? < k {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Base level for the given sample size, VC bound, and confidence.
pub fn base_level(n: usize, v_b: usize, delta: f64) -> usize {
    let n0 = (v_b as f64 * (2.0 * n as f64).ln() + (6.0 / delta).ln()).ceil();
    (n0 as usize).max(1)
}

/// Build a cover that is simultaneously a k-2k cover for every k in the
/// doubling grid. Starts from the source block; each level adds every target
/// point with fewer than k retained members among its 2k pooled nearest
/// neighbors, evaluated against the retained set frozen at the start of the
/// level. If the sample is too small for even one level, the cover degrades
/// to the source block with an empty grid.
pub fn build_cover(sample: &TransferSample, delta: f64, v_b: usize) -> Result<CoverIndex> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParam {
            name: "delta",
            reason: format!("must lie in (0,1), got {delta}"),
        });
    }
    if v_b == 0 {
        return Err(Error::InvalidParam {
            name: "v_b",
            reason: "VC bound must be at least 1".into(),
        });
    }
    let (n_p, n_q, n) = (sample.n_p(), sample.n_q(), sample.len());
    let points = sample.pooled_points();
    let k0 = base_level(n, v_b, delta);

    let mut levels = Vec::new();
    let mut k = k0;
    while 2 * k <= n_p.max(n_q) {
        levels.push(k);
        k *= 2;
    }

    let mut in_r = vec![false; n];
    for flag in in_r.iter_mut().take(n_p) {
        *flag = true;
    }
    let mut level_additions = Vec::with_capacity(levels.len());
    if !levels.is_empty() {
        let index = NnIndex::build(&points)?;
        for &k in &levels {
            let snapshot = in_r.clone();
            let mut added = 0usize;
            for i in n_p..n {
                if in_r[i] {
                    continue;
                }
                if retained_among_2k(&index, &points[i], 2 * k, &snapshot)? < k {
                    in_r[i] = true;
                    added += 1;
                }
            }
            level_additions.push((k, added));
        }
    }

    let retained: Vec<usize> = (0..n).filter(|&i| in_r[i]).collect();
    let queries: Vec<usize> = retained.iter().copied().filter(|&i| i >= n_p).collect();
    Ok(CoverIndex {
        retained,
        k0,
        levels,
        queries,
        delta,
        v_b,
        level_additions,
        n_p,
        n_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{mix_seed, rng_from};
    use crate::synth::{make_disjoint_support_family, make_margin_singularity_family, Gamma};
    use rand::Rng;

    fn pts_1d(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::new(vec![x])).collect()
    }

    fn sample_from(
        fam: &crate::synth::TransferFamily,
        n_p: usize,
        n_q: usize,
        seed: u64,
    ) -> TransferSample {
        TransferSample::new(
            fam.space(),
            fam.sample_source(n_p, mix_seed(seed, &[1])),
            vec![],
            fam.sample_target_points(n_q, mix_seed(seed, &[2])),
        )
        .unwrap()
    }

    #[test]
    fn full_set_is_a_cover_for_every_k() {
        let points = pts_1d(&[0.1, 0.2, 0.5, 0.6, 0.8, 0.9]);
        let all: Vec<usize> = (0..points.len()).collect();
        for k in 1..=3 {
            assert!(is_k2k_cover(&points, &all, k).unwrap());
        }
    }

    #[test]
    fn empty_set_is_not_a_cover() {
        let points = pts_1d(&[0.1, 0.9]);
        assert!(!is_k2k_cover(&points, &[], 1).unwrap());
    }

    #[test]
    fn hand_enumerated_cover() {
        // 2-NN sets: 0.0 -> {0.0, 0.1}, 0.1 -> {0.1, 0.0}, 0.2 -> {0.2, 0.1 or 0.3},
        // 0.3 -> {0.3, 0.2}; with R = {0, 2} every non-member sees one R point,
        // which meets k = 1
        let points = pts_1d(&[0.0, 0.1, 0.2, 0.3]);
        assert!(is_k2k_cover(&points, &[0, 2], 1).unwrap());
        assert!(!is_k2k_cover(&points, &[3], 1).unwrap());
    }

    #[test]
    fn tie_break_uses_the_favorable_choice() {
        // 0.125-spaced points tie exactly in binary floating point: each
        // interior point sees both neighbors at the 2k-th distance, and the
        // favorable choice picks the retained one
        let points = pts_1d(&[0.25, 0.375, 0.5, 0.625]);
        assert!(is_k2k_cover(&points, &[0, 3], 1).unwrap());
        assert!(is_k2k_cover(&points, &[1, 2], 1).unwrap());
        assert!(!is_k2k_cover(&points, &[0], 1).unwrap());

        // fully collocated points: the 2-NN choice under ties may swap in the
        // retained member even when the index order would exclude it
        let dup = pts_1d(&[0.5, 0.5, 0.5, 0.5]);
        assert!(is_k2k_cover(&dup, &[3], 1).unwrap());
    }

    #[test]
    fn k_range_is_enforced() {
        let points = pts_1d(&[0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(is_k2k_cover(&points, &[0], 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(is_k2k_cover(&points, &[0], 3), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn no_target_means_no_queries() {
        let fam = make_margin_singularity_family(Gamma::Finite(0.0), 1.0, 1.0).unwrap();
        let sample = sample_from(&fam, 400, 0, 5);
        let cover = build_cover(&sample, 0.05, 3).unwrap();
        assert_eq!(cover.retained().len(), 400);
        assert_eq!(requested_labels(&cover).0, 0);
    }

    #[test]
    fn source_free_sample_forces_queries() {
        let fam = make_margin_singularity_family(Gamma::Finite(0.0), 1.0, 1.0).unwrap();
        let sample = sample_from(&fam, 0, 600, 6);
        let cover = build_cover(&sample, 0.05, 3).unwrap();
        assert!(!cover.levels().is_empty());
        assert!(requested_labels(&cover).0 > 0);
    }

    #[test]
    fn undersized_sample_degrades_to_source_block() {
        let fam = make_margin_singularity_family(Gamma::Finite(0.0), 1.0, 1.0).unwrap();
        let sample = sample_from(&fam, 10, 5, 7);
        let cover = build_cover(&sample, 0.05, 3).unwrap();
        assert!(cover.levels().is_empty());
        assert_eq!(cover.retained(), (0..10).collect::<Vec<_>>());
        assert_eq!(requested_labels(&cover).0, 0);
    }

    #[test]
    fn cover_is_valid_at_every_level_smoke() {
        let fam = make_margin_singularity_family(Gamma::Finite(1.0), 1.0, 1.0).unwrap();
        for seed in 0..5u64 {
            let sample = sample_from(&fam, 300, 200, seed);
            let cover = build_cover(&sample, 0.05, 3).unwrap();
            let points = sample.pooled_points();
            let index = NnIndex::build(&points).unwrap();
            let mut in_r = vec![false; points.len()];
            for &i in cover.retained() {
                in_r[i] = true;
            }
            for &k in cover.levels() {
                assert!(
                    is_k2k_cover_indexed(&index, &points, &in_r, k).unwrap(),
                    "seed {seed} level {k}"
                );
            }
        }
    }

    #[test]
    fn retained_neighbors_stay_within_triple_distance_smoke() {
        // i-th retained neighbor within 3x the (i+k)-th pooled neighbor
        let fam = make_margin_singularity_family(Gamma::Finite(1.0), 1.0, 1.0).unwrap();
        let sample = sample_from(&fam, 250, 250, 11);
        let cover = build_cover(&sample, 0.05, 3).unwrap();
        let points = sample.pooled_points();
        let pooled = NnIndex::build(&points).unwrap();
        let retained_pts: Vec<Point> = cover.retained().iter().map(|&i| points[i].clone()).collect();
        let retained_idx = NnIndex::build_with_ids(&retained_pts, cover.retained()).unwrap();
        let mut rng = rng_from(12, &[]);
        for _ in 0..10 {
            let x = Point::new(vec![rng.random::<f64>()]);
            for &k in cover.levels() {
                let in_r = retained_idx.knn(&x, k).unwrap();
                let in_all = pooled.knn(&x, 2 * k).unwrap();
                for i in 1..=k {
                    assert!(in_r[i - 1].0 <= 3.0 * in_all[i + k - 1].0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn disjoint_supports_query_most_targets() {
        let fam = make_disjoint_support_family(1).unwrap();
        let sample = sample_from(&fam, 4000, 64, 3);
        let cover = build_cover(&sample, 0.05, 3).unwrap();
        let (count, list) = requested_labels(&cover);
        assert!(count >= 32, "queries {count}");
        assert!(list.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn query_count_shrinks_with_more_source_data() {
        // median query count over seeds is nonincreasing in n_P
        let fam = make_margin_singularity_family(Gamma::Finite(2.0), 1.0, 1.0).unwrap();
        let mut medians = Vec::new();
        for &n_p in &[100usize, 800, 3200] {
            let mut counts: Vec<usize> = (0..50u64)
                .map(|s| {
                    let sample = sample_from(&fam, n_p, 48, mix_seed(s, &[n_p as u64]));
                    requested_labels(&build_cover(&sample, 0.05, 3).unwrap()).0
                })
                .collect();
            counts.sort_unstable();
            medians.push(counts[25]);
        }
        assert!(
            medians[0] >= medians[1] && medians[1] >= medians[2],
            "medians {medians:?}"
        );
    }

    #[test]
    fn build_is_deterministic() {
        let fam = make_margin_singularity_family(Gamma::Finite(1.0), 1.0, 1.0).unwrap();
        let sample = sample_from(&fam, 200, 100, 9);
        let a = build_cover(&sample, 0.05, 3).unwrap();
        let b = build_cover(&sample, 0.05, 3).unwrap();
        assert_eq!(a.retained(), b.retained());
        assert_eq!(a.levels(), b.levels());
        assert_eq!(a.queries(), b.queries());
    }
}
