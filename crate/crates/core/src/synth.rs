//! Synthetic source/target distribution pairs with certified transfer
//! parameters and analytic oracles.
//!
//! Every family exposes the shared regression function `eta`, its Bayes
//! classifier, seeded samplers for both marginals, and closed-form ball
//! masses. The certified constants (transfer exponent and its constant,
//! Hölder smoothness, Tsybakov noise, dimension, regime) are recorded on the
//! family so tests can check measured behavior against known ground truth.

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rng::rng_from;
use crate::space::{Label, MetricSpace, Point};
use crate::{Error, Result};

/// Transfer exponent: a nonnegative real, or infinite when the source gives
/// no usable coverage of the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Gamma::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Gamma::Finite(g) => Some(*g),
            Gamma::Infinite => None,
        }
    }

    /// `r^gamma`, with the `r < 1` limit `0` for the infinite exponent.
    pub fn pow(&self, r: f64) -> f64 {
        match self {
            Gamma::Finite(g) => r.powf(*g),
            Gamma::Infinite => {
                if r >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Finite(g) => s.serialize_f64(*g),
            Gamma::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) if g.is_finite() && g >= 0.0 => Ok(Gamma::Finite(g)),
            Raw::Num(g) if g.is_infinite() && g > 0.0 => Ok(Gamma::Infinite),
            Raw::Num(g) => Err(D::Error::custom(format!("invalid gamma {g}"))),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(Gamma::Infinite),
            Raw::Str(s) => Err(D::Error::custom(format!("invalid gamma `{s}`"))),
        }
    }
}

/// Classification regime for the target marginal: doubling measure (DM) or
/// bounded covering number (BCN).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Dm,
    Bcn,
}

/// Certified parameters of a transfer pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub gamma: Gamma,
    /// Transfer-exponent constant, in (0, 1].
    pub c_gamma: f64,
    /// Hölder exponent of the regression function, in (0, 1].
    pub alpha: f64,
    /// Hölder constant.
    pub c_alpha: f64,
    /// Tsybakov noise exponent.
    pub beta: f64,
    /// Tsybakov noise constant.
    pub c_beta: f64,
    /// Dimension parameter of the target marginal.
    pub dim: usize,
    pub regime: Regime,
}

impl FamilyParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        if let Gamma::Finite(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return bad("gamma", format!("must be finite and nonnegative, got {g}"));
            }
        }
        if !(self.c_gamma > 0.0 && self.c_gamma <= 1.0) {
            return bad("c_gamma", format!("must lie in (0,1], got {}", self.c_gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("must lie in (0,1], got {}", self.alpha));
        }
        if !(self.c_alpha > 0.0 && self.c_alpha.is_finite()) {
            return bad("c_alpha", format!("must be positive, got {}", self.c_alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", format!("must be nonnegative, got {}", self.beta));
        }
        if !(self.c_beta > 0.0 && self.c_beta.is_finite()) {
            return bad("c_beta", format!("must be positive, got {}", self.c_beta));
        }
        if self.dim == 0 {
            return bad("dim", "must be positive".into());
        }
        if self.regime == Regime::Dm && self.alpha * self.beta > self.dim as f64 + 1e-12 {
            return bad(
                "beta",
                format!(
                    "DM regime needs alpha*beta <= d, got {} * {} > {}",
                    self.alpha, self.beta, self.dim
                ),
            );
        }
        Ok(())
    }
}

/// Grid-cell layout for the hard-instance family: the unit cube is split into
/// cells of side `r`; `m` active cells carry a small plateau of target mass
/// with the regression function offset above or below 1/2 by sign `sigma`,
/// and the remaining mass sits on uniform cells where `eta = 1/2` exactly.
#[derive(Clone, Debug)]
pub struct LowerBoundSpec {
    /// Cell side length, in (0, 1].
    pub r: f64,
    /// Number of active cells.
    pub m: usize,
    /// Target mass of each active-cell plateau.
    pub w: f64,
    /// Sign of the regression-function offset per active cell, each ±1.
    pub sigma: Vec<i8>,
    pub params: FamilyParams,
}

impl LowerBoundSpec {
    fn validate(&self) -> Result<()> {
        let fail = |constraint: &'static str| Err(Error::LowerBoundConstraint { constraint });
        if !(self.r > 0.0 && self.r <= 1.0) {
            return fail("r in (0, 1]");
        }
        if self.m == 0 {
            return fail("m >= 1");
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return fail("w > 0");
        }
        if self.m as f64 * self.w >= 1.0 {
            return fail("m * w < 1");
        }
        let grid = (1.0 / self.r).floor() as usize;
        let cells = grid.saturating_pow(self.params.dim as u32);
        if self.m >= cells {
            return fail("m < floor(1/r)^d (a null region must remain)");
        }
        if self.sigma.len() != self.m {
            return fail("sigma length == m");
        }
        if self.sigma.iter().any(|s| *s != 1 && *s != -1) {
            return fail("sigma entries in {-1, +1}");
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LowerBoundLayout {
    r: f64,
    grid: usize,
    dim: usize,
    active_cells: Vec<usize>,
    active_centers: Vec<Vec<f64>>,
    sigma: Vec<i8>,
    null_centers: Vec<Vec<f64>>,
    /// plateau / null densities of the target, plateau / band densities of the source
    q1: f64,
    q0: f64,
    p1: f64,
    band_density: f64,
    /// plateau offset: eta = (1 ± tau)/2 on plateaus, where
    /// tau = min(C_alpha * 6^-alpha, 1/2) * r^alpha
    tau: f64,
    mass_plateau_p: f64,
    mass_band_p: f64,
    w: f64,
    m: usize,
}

#[derive(Clone, Debug)]
enum FamilyKind {
    /// 1-d pair on [-1,1] mapped affinely onto [0,1]: uniform target, source
    /// density proportional to |x|^gamma, Bayes boundary at the singularity.
    MarginSingularity { gamma: f64, alpha: f64, c_eff: f64 },
    LowerBound(Box<LowerBoundLayout>),
    /// Uniform source on the d_P-cube, target uniform on a d_Q-dimensional
    /// axis-aligned slice through the middle of the cube.
    DimensionGap { d_p: usize, d_q: usize, alpha: f64, c_eff: f64 },
    /// Source on [0, 1/2]^d, target on [3/4, 1] x [0,1]^(d-1).
    DisjointSupport { dim: usize, c_eff: f64 },
}

/// A synthetic transfer pair with samplers and analytic oracles.
#[derive(Clone, Debug)]
pub struct TransferFamily {
    params: FamilyParams,
    space: MetricSpace,
    kind: FamilyKind,
    doubling: Option<(f64, f64)>,
}

fn overlap(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}

fn cube_overlap_vol(x: &[f64], rho: f64, z: &[f64], half_side: f64) -> f64 {
    let mut v = 1.0;
    for (xi, zi) in x.iter().zip(z.iter()) {
        v *= overlap(xi - rho, xi + rho, zi - half_side, zi + half_side);
        if v == 0.0 {
            return 0.0;
        }
    }
    v
}

/// Piecewise-linear bump: 1 on [0, 1/6], linear down to 0 on [1/6, 1/3].
fn bump(t: f64) -> f64 {
    if t <= 1.0 / 6.0 {
        1.0
    } else if t <= 1.0 / 3.0 {
        1.0 - 6.0 * (t - 1.0 / 6.0)
    } else {
        0.0
    }
}

/// CDF on [-1,1] of the density proportional to |x|^gamma.
fn singular_cdf(t: f64, gamma: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    0.5 * (1.0 + t.signum() * t.abs().powf(gamma + 1.0))
}

impl TransferFamily {
    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn space(&self) -> MetricSpace {
        self.space
    }

    /// Doubling constant and upper-mass constant of the target marginal,
    /// when certified for the family (metadata only).
    pub fn doubling_constants(&self) -> Option<(f64, f64)> {
        self.doubling
    }

    /// The shared regression function P(Y=1 | X=x).
    pub fn eta(&self, x: &Point) -> f64 {
        let c = x.coords();
        match &self.kind {
            FamilyKind::MarginSingularity { alpha, c_eff, .. } => {
                let t = 2.0 * c[0] - 1.0;
                0.5 * (1.0 + c_eff * t.signum() * t.abs().powf(*alpha))
            }
            FamilyKind::LowerBound(lb) => {
                let mut cell = 0usize;
                for &cj in c.iter().take(lb.dim) {
                    let i = (cj / lb.r).floor();
                    if i < 0.0 || i >= lb.grid as f64 {
                        return 0.5;
                    }
                    cell = cell * lb.grid + i as usize;
                }
                match lb.active_cells.binary_search(&cell) {
                    Ok(pos) => {
                        let z = &lb.active_centers[pos];
                        let t = crate::space::linf(c, z) / lb.r;
                        let u = bump(t).powf(self.params.alpha);
                        0.5 * (1.0 + lb.sigma[pos] as f64 * lb.tau * u)
                    }
                    Err(_) => 0.5,
                }
            }
            FamilyKind::DimensionGap { alpha, c_eff, .. } => {
                let t = 2.0 * c[0] - 1.0;
                0.5 * (1.0 + c_eff * t.signum() * t.abs().powf(*alpha))
            }
            FamilyKind::DisjointSupport { c_eff, .. } => {
                let t = 2.0 * c[0] - 1.0;
                0.5 * (1.0 + c_eff * t.signum() * t.abs())
            }
        }
    }

    /// Bayes classifier: 1 iff `eta(x) >= 1/2`.
    pub fn bayes(&self, x: &Point) -> Label {
        u8::from(self.eta(x) >= 0.5)
    }

    fn draw_source_point<R: Rng>(&self, rng: &mut R) -> Point {
        match &self.kind {
            FamilyKind::MarginSingularity { gamma, .. } => {
                // inverse CDF of the |x|^gamma density, mapped onto [0,1]
                let v = 2.0 * rng.random::<f64>() - 1.0;
                let t = v.signum() * v.abs().powf(1.0 / (gamma + 1.0));
                Point::new(vec![(t + 1.0) / 2.0])
            }
            FamilyKind::LowerBound(lb) => {
                let total_plateau = lb.mass_plateau_p * lb.m as f64;
                let total_band = lb.mass_band_p * lb.m as f64;
                let u = rng.random::<f64>();
                if u < total_plateau {
                    let cell = rng.random_range(0..lb.m);
                    Self::uniform_cube(rng, &lb.active_centers[cell], lb.r / 6.0)
                } else if u < total_plateau + total_band {
                    let cell = rng.random_range(0..lb.m);
                    // rejection from the full cell onto the outer shell
                    loop {
                        let p = Self::uniform_cube(rng, &lb.active_centers[cell], lb.r / 2.0);
                        let d = crate::space::linf(p.coords(), &lb.active_centers[cell]);
                        if d > lb.r / 3.0 {
                            return p;
                        }
                    }
                } else {
                    let cell = rng.random_range(0..lb.null_centers.len());
                    Self::uniform_cube(rng, &lb.null_centers[cell], lb.r / 2.0)
                }
            }
            FamilyKind::DimensionGap { d_p, .. } => {
                Point::new((0..*d_p).map(|_| rng.random::<f64>()).collect())
            }
            FamilyKind::DisjointSupport { dim, .. } => {
                Point::new((0..*dim).map(|_| rng.random::<f64>() * 0.5).collect())
            }
        }
    }

    fn draw_target_point<R: Rng>(&self, rng: &mut R) -> Point {
        match &self.kind {
            FamilyKind::MarginSingularity { .. } => Point::new(vec![rng.random::<f64>()]),
            FamilyKind::LowerBound(lb) => {
                if rng.random::<f64>() < lb.w * lb.m as f64 {
                    let cell = rng.random_range(0..lb.m);
                    Self::uniform_cube(rng, &lb.active_centers[cell], lb.r / 6.0)
                } else {
                    let cell = rng.random_range(0..lb.null_centers.len());
                    Self::uniform_cube(rng, &lb.null_centers[cell], lb.r / 2.0)
                }
            }
            FamilyKind::DimensionGap { d_p, d_q, .. } => {
                let mut coords = vec![0.5; *d_p];
                for c in coords.iter_mut().take(*d_q) {
                    *c = rng.random::<f64>();
                }
                Point::new(coords)
            }
            FamilyKind::DisjointSupport { dim, .. } => {
                let mut coords: Vec<f64> = (0..*dim).map(|_| rng.random::<f64>()).collect();
                coords[0] = 0.75 + coords[0] * 0.25;
                Point::new(coords)
            }
        }
    }

    fn uniform_cube<R: Rng>(rng: &mut R, center: &[f64], half_side: f64) -> Point {
        Point::new(
            center
                .iter()
                .map(|z| z + (2.0 * rng.random::<f64>() - 1.0) * half_side)
                .collect(),
        )
    }

    fn draw_labeled<R: Rng>(&self, rng: &mut R, draw: impl Fn(&Self, &mut R) -> Point) -> (Point, Label) {
        let x = draw(self, rng);
        let y = u8::from(rng.random::<f64>() < self.eta(&x));
        (x, y)
    }

    /// Draw `n` labeled source points. Deterministic given the seed.
    pub fn sample_source(&self, n: usize, seed: u64) -> Vec<(Point, Label)> {
        let mut rng = rng_from(seed, &[]);
        (0..n).map(|_| self.draw_labeled(&mut rng, Self::draw_source_point)).collect()
    }

    /// Draw `n` labeled target points. Deterministic given the seed.
    pub fn sample_target(&self, n: usize, seed: u64) -> Vec<(Point, Label)> {
        let mut rng = rng_from(seed, &[]);
        (0..n).map(|_| self.draw_labeled(&mut rng, Self::draw_target_point)).collect()
    }

    /// Draw `n` target feature vectors without labels.
    pub fn sample_target_points(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng_from(seed, &[]);
        (0..n).map(|_| self.draw_target_point(&mut rng)).collect()
    }

    /// Closed-form source mass of the closed sup-norm ball `B(x, rho)`.
    pub fn source_ball_mass(&self, x: &Point, rho: f64) -> f64 {
        let c = x.coords();
        match &self.kind {
            FamilyKind::MarginSingularity { gamma, .. } => {
                let (lo, hi) = (2.0 * (c[0] - rho) - 1.0, 2.0 * (c[0] + rho) - 1.0);
                singular_cdf(hi, *gamma) - singular_cdf(lo, *gamma)
            }
            FamilyKind::LowerBound(lb) => {
                let mut mass = 0.0;
                for z in &lb.active_centers {
                    mass += lb.p1 * cube_overlap_vol(c, rho, z, lb.r / 6.0);
                    let outer = cube_overlap_vol(c, rho, z, lb.r / 2.0);
                    let inner = cube_overlap_vol(c, rho, z, lb.r / 3.0);
                    mass += lb.band_density * (outer - inner);
                }
                for z in &lb.null_centers {
                    mass += lb.q0 * cube_overlap_vol(c, rho, z, lb.r / 2.0);
                }
                mass
            }
            FamilyKind::DimensionGap { d_p, .. } => c
                .iter()
                .take(*d_p)
                .map(|&cj| overlap(cj - rho, cj + rho, 0.0, 1.0))
                .product(),
            FamilyKind::DisjointSupport { dim, .. } => c
                .iter()
                .take(*dim)
                .map(|&cj| overlap(cj - rho, cj + rho, 0.0, 0.5) * 2.0)
                .product(),
        }
    }

    /// Closed-form target mass of the closed sup-norm ball `B(x, rho)`.
    pub fn target_ball_mass(&self, x: &Point, rho: f64) -> f64 {
        let c = x.coords();
        match &self.kind {
            FamilyKind::MarginSingularity { .. } => overlap(c[0] - rho, c[0] + rho, 0.0, 1.0),
            FamilyKind::LowerBound(lb) => {
                let mut mass = 0.0;
                for z in &lb.active_centers {
                    mass += lb.q1 * cube_overlap_vol(c, rho, z, lb.r / 6.0);
                }
                for z in &lb.null_centers {
                    mass += lb.q0 * cube_overlap_vol(c, rho, z, lb.r / 2.0);
                }
                mass
            }
            FamilyKind::DimensionGap { d_q, d_p, .. } => {
                if c[*d_q..*d_p].iter().any(|&cj| (cj - 0.5).abs() > rho) {
                    return 0.0;
                }
                c.iter()
                    .take(*d_q)
                    .map(|&cj| overlap(cj - rho, cj + rho, 0.0, 1.0))
                    .product()
            }
            FamilyKind::DisjointSupport { .. } => {
                let head = overlap(c[0] - rho, c[0] + rho, 0.75, 1.0) * 4.0;
                head * c[1..]
                    .iter()
                    .map(|&cj| overlap(cj - rho, cj + rho, 0.0, 1.0))
                    .product::<f64>()
            }
        }
    }

    /// Numerically certify the transfer-exponent constant over a grid of
    /// target-support probes and radii, using the analytic ball masses.
    fn certify_c_gamma(&self, probes: &[Point]) -> f64 {
        let gamma = match self.params.gamma {
            Gamma::Finite(g) => g,
            Gamma::Infinite => return 1.0,
        };
        let mut c = 1.0f64;
        let radii: Vec<f64> = (0..24).map(|i| 1e-3f64 * (1000.0f64).powf(i as f64 / 23.0)).collect();
        for x in probes {
            for &r in &radii {
                // skip probes whose ball leaves the cube; boundary effects make
                // the constant non-uniform there without affecting the exponent
                if x.coords().iter().any(|&v| v - r < -1e-12 || v + r > 1.0 + 1e-12) {
                    continue;
                }
                let q = self.target_ball_mass(x, r);
                if q <= 0.0 {
                    continue;
                }
                let p = self.source_ball_mass(x, r);
                c = c.min(p / (q * r.powf(gamma)));
            }
        }
        c.clamp(1e-9, 1.0)
    }

    fn certify_doubling(&self, probes: &[Point]) -> Option<(f64, f64)> {
        if self.params.regime != Regime::Dm {
            return None;
        }
        let d = self.params.dim as f64;
        let (mut c_lo, mut c_hi) = (f64::INFINITY, 0.0f64);
        let radii: Vec<f64> = (0..16).map(|i| 1e-3f64 * (1000.0f64).powf(i as f64 / 15.0)).collect();
        for x in probes {
            for &r in &radii {
                let q = self.target_ball_mass(x, r);
                if q <= 0.0 {
                    return None;
                }
                c_lo = c_lo.min(q / r.powf(d));
                c_hi = c_hi.max(q / r.powf(d));
            }
        }
        Some((c_lo.min(1.0), c_hi.max(1.0)))
    }

    fn probe_grid(&self, seed: u64) -> Vec<Point> {
        self.sample_target_points(48, seed)
    }
}

/// 1-d family on [-1,1] (mapped to [0,1]): uniform target, source density
/// proportional to `|x|^gamma`, regression function crossing 1/2 exactly at
/// the source-density singularity.
pub fn make_margin_singularity_family(gamma: Gamma, alpha: f64, c_alpha: f64) -> Result<TransferFamily> {
    let g = gamma.finite().ok_or_else(|| Error::InvalidParam {
        name: "gamma",
        reason: "infinite transfer exponent has disjoint-support semantics; use the disjoint-support family".into(),
    })?;
    let c_eff = c_alpha.min(0.5);
    let params = FamilyParams {
        gamma,
        c_gamma: 1.0, // provisional; certified below
        alpha,
        c_alpha,
        beta: 1.0 / alpha,
        c_beta: (2.0 / c_eff).powf(1.0 / alpha),
        dim: 1,
        regime: Regime::Dm,
    };
    params.validate()?;
    let mut fam = TransferFamily {
        params,
        space: MetricSpace::new(1)?,
        kind: FamilyKind::MarginSingularity { gamma: g, alpha, c_eff },
        doubling: None,
    };
    let mut probes = fam.probe_grid(0xc0ffee);
    probes.push(Point::new(vec![0.5])); // the singular point is the binding probe
    fam.params.c_gamma = fam.certify_c_gamma(&probes);
    fam.doubling = fam.certify_doubling(&probes);
    Ok(fam)
}

/// Grid family with `m` active cells of plateau mass `w`, realizing transfer
/// exponent `gamma` through a source plateau density damped by `r^gamma`.
pub fn make_lowerbound_family(spec: LowerBoundSpec) -> Result<TransferFamily> {
    spec.validate()?;
    let d = spec.params.dim;
    let grid = (1.0 / spec.r).floor() as usize;
    let cells = grid.pow(d as u32);
    // active cells evenly spread over the linear cell order, so plateaus of
    // opposite sign stay well separated
    let active_cells: Vec<usize> = (0..spec.m)
        .map(|j| ((j as f64 + 0.5) * cells as f64 / spec.m as f64).floor() as usize)
        .collect();
    let cell_center = |cell: usize| -> Vec<f64> {
        let mut c = cell;
        let mut z = vec![0.0; d];
        for j in (0..d).rev() {
            z[j] = (c % grid) as f64 * spec.r + spec.r / 2.0;
            c /= grid;
        }
        z
    };
    let active_centers: Vec<Vec<f64>> = active_cells.iter().map(|&c| cell_center(c)).collect();
    let null_centers: Vec<Vec<f64>> = (0..cells)
        .filter(|c| active_cells.binary_search(c).is_err())
        .map(cell_center)
        .collect();

    let m = spec.m as f64;
    let plateau_vol = (spec.r / 3.0).powi(d as i32);
    let cell_vol = spec.r.powi(d as i32);
    let q1 = spec.w / plateau_vol;
    let q0 = (1.0 - m * spec.w) / (null_centers.len() as f64 * cell_vol);
    let r_gamma = spec.params.gamma.pow(spec.r);
    let p1 = q1 * r_gamma;
    let mass_plateau_p = spec.w * r_gamma;
    let mass_band_p = spec.w * (1.0 - r_gamma);
    let band_vol = cell_vol - (2.0 * spec.r / 3.0).powi(d as i32);
    let band_density = mass_band_p / band_vol;
    for (name, v) in [("q0", q0), ("q1", q1), ("p0", q0), ("p1", p1), ("band", band_density)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParam {
                name: "density",
                reason: format!("derived density {name} = {v} is not finite and nonnegative"),
            });
        }
    }
    let c_alpha_eff = (spec.params.c_alpha * 6.0f64.powf(-spec.params.alpha)).min(0.5);
    let tau = c_alpha_eff * spec.r.powf(spec.params.alpha);

    let layout = LowerBoundLayout {
        r: spec.r,
        grid,
        dim: d,
        active_cells,
        active_centers,
        sigma: spec.sigma.clone(),
        null_centers,
        q1,
        q0,
        p1,
        band_density,
        tau,
        mass_plateau_p,
        mass_band_p,
        w: spec.w,
        m: spec.m,
    };
    let mut params = spec.params.clone();
    // certified noise constant: all plateau mass sits at margin tau/2
    params.c_beta = (m * spec.w) / (tau / 2.0).powf(params.beta);
    let mut fam = TransferFamily {
        params,
        space: MetricSpace::new(d)?,
        kind: FamilyKind::LowerBound(Box::new(layout)),
        doubling: None,
    };
    let probes = fam.probe_grid(0xbeef);
    fam.params.c_gamma = fam.certify_c_gamma(&probes);
    fam.doubling = fam.certify_doubling(&probes);
    Ok(fam)
}

/// Uniform source on the d_P-cube; target uniform on a d_Q-dimensional slice,
/// so the transfer exponent is the dimension gap d_P - d_Q.
pub fn make_dimension_gap_family(d_p: usize, d_q: usize, alpha: f64, c_alpha: f64) -> Result<TransferFamily> {
    if d_q == 0 || d_q > d_p {
        return Err(Error::InvalidParam {
            name: "d_q",
            reason: format!("need 1 <= d_Q <= d_P, got d_Q = {d_q}, d_P = {d_p}"),
        });
    }
    let c_eff = c_alpha.min(0.5);
    let params = FamilyParams {
        gamma: Gamma::Finite((d_p - d_q) as f64),
        c_gamma: 1.0,
        alpha,
        c_alpha,
        beta: 1.0 / alpha,
        c_beta: (2.0 / c_eff).powf(1.0 / alpha),
        dim: d_q,
        regime: Regime::Dm,
    };
    params.validate()?;
    let mut fam = TransferFamily {
        params,
        space: MetricSpace::new(d_p)?,
        kind: FamilyKind::DimensionGap { d_p, d_q, alpha, c_eff },
        doubling: None,
    };
    let probes = fam.probe_grid(0xd1ce);
    fam.params.c_gamma = fam.certify_c_gamma(&probes);
    fam.doubling = fam.certify_doubling(&probes);
    Ok(fam)
}

/// Source uniform on [0, 1/2]^d, target uniform on [3/4, 1] x [0,1]^(d-1):
/// separated supports, hence an infinite transfer exponent.
pub fn make_disjoint_support_family(dim: usize) -> Result<TransferFamily> {
    if dim == 0 {
        return Err(Error::InvalidParam {
            name: "dim",
            reason: "must be positive".into(),
        });
    }
    let c_eff = 0.5;
    // on the target support the margin is bounded below by c_eff/2 * (1/2)
    let t_min = c_eff / 2.0 * 0.5;
    let params = FamilyParams {
        gamma: Gamma::Infinite,
        c_gamma: 1.0,
        alpha: 1.0,
        c_alpha: 1.0,
        beta: 1.0,
        c_beta: 1.0 / t_min,
        dim,
        regime: Regime::Dm,
    };
    params.validate()?;
    let mut fam = TransferFamily {
        params,
        space: MetricSpace::new(dim)?,
        kind: FamilyKind::DisjointSupport { dim, c_eff },
        doubling: None,
    };
    let probes = fam.probe_grid(0xdead);
    fam.doubling = fam.certify_doubling(&probes);
    Ok(fam)
}

/// Monte Carlo estimate of the excess target error of classifier `h` relative
/// to the family's Bayes rule, with a 95% normal-approximation confidence
/// half-width. The half-width is 0 only when no disagreement was observed,
/// and otherwise floored at `1/m_eval`.
pub fn excess_error_mc<H>(h: H, family: &TransferFamily, m_eval: usize, seed: u64) -> Result<(f64, f64)>
where
    H: Fn(&Point) -> Label,
{
    if m_eval < 100 {
        return Err(Error::InvalidParam {
            name: "m_eval",
            reason: format!("need at least 100 evaluation draws, got {m_eval}"),
        });
    }
    let mut rng = rng_from(seed, &[]);
    let m = m_eval as f64;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..m_eval {
        let x = family.draw_target_point(&mut rng);
        let v = if h(&x) != family.bayes(&x) {
            2.0 * (family.eta(&x) - 0.5).abs()
        } else {
            0.0
        };
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / m;
    if mean == 0.0 {
        return Ok((0.0, 0.0));
    }
    let var = (sum_sq / m - mean * mean).max(0.0);
    let half = (1.96 * (var / m).sqrt()).max(1.0 / m);
    Ok((mean.clamp(0.0, 1.0), half))
}
