//! Lattice discretization of the two dynamic-programming principles and the
//! fixed-point value iteration. Interior nodes update by a Jacobi sweep
//! (parallel over nodes); off-lattice evaluation points use multilinear
//! interpolation through precomputed stencils, which keeps every update a
//! convex combination of the previous field (hence monotone and
//! nonexpansive).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{coeffs, CoefficientPair, ExponentField, Variant};
use crate::error::{Error, Result};
use crate::geom::{self, QuadratureRule, UnitVector};
use crate::linalg;

/// Shape of the playing field Ω.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainKind {
    Box { size: Vec<f64> },
    Ball { radius: f64 },
}

/// Bounded domain plus the game's step radius ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain {
    #[serde(flatten)]
    pub kind: DomainKind,
    pub center: Vec<f64>,
    pub epsilon: f64,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Per-axis halfwidth of the bounding box of Ω.
    pub fn halfwidths(&self) -> Vec<f64> {
        match &self.kind {
            DomainKind::Box { size } => size.iter().map(|s| s / 2.0).collect(),
            DomainKind::Ball { radius } => vec![*radius; self.dim()],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Box { size } => x
                .iter()
                .zip(&self.center)
                .zip(size)
                .all(|((xi, ci), si)| (xi - ci).abs() < si / 2.0),
            DomainKind::Ball { radius } => linalg::dist(x, &self.center) < *radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        let min_hw = self
            .halfwidths()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if let DomainKind::Box { size } = &self.kind {
            if size.len() != self.center.len() {
                return Err(Error::DimensionMismatch(size.len(), self.center.len()));
            }
        }
        if self.epsilon >= min_hw / 2.0 {
            return Err(Error::Config(format!(
                "epsilon = {} leaves no meaningful interior (halfwidth {})",
                self.epsilon, min_hw
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Strip,
}

/// Node-centered values on a regular lattice covering Ω plus an ε-strip.
/// Strip nodes carry the boundary datum and are never overwritten.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub h: f64,
    pub origin: Vec<f64>,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub region: Vec<Region>,
}

impl GridField {
    /// Lattice hull: bounding box of Ω expanded by ε + 2h on every side, so
    /// every ε-reachable evaluation point of an interior node interpolates
    /// from nodes inside the hull.
    pub fn for_domain(domain: &Domain, h: f64) -> Result<GridField> {
        domain.validate()?;
        if h <= 0.0 {
            return Err(Error::Config("grid spacing h must be positive".into()));
        }
        let n = domain.dim();
        let margin = domain.epsilon + 2.0 * h;
        let mut origin = Vec::with_capacity(n);
        let mut dims = Vec::with_capacity(n);
        for (d, hw) in domain.halfwidths().into_iter().enumerate() {
            let k = ((hw + margin) / h).ceil() as usize;
            origin.push(domain.center[d] - k as f64 * h);
            dims.push(2 * k + 1);
        }
        let total: usize = dims.iter().product();
        let mut field = GridField {
            h,
            origin,
            dims,
            values: vec![0.0; total],
            region: vec![Region::Strip; total],
        };
        for i in 0..total {
            let x = field.node_coord(i);
            if domain.contains(&x) {
                field.region[i] = Region::Interior;
            }
        }
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        let n = self.dims.len();
        let mut s = vec![1usize; n];
        for d in (0..n - 1).rev() {
            s[d] = s[d + 1] * self.dims[d + 1];
        }
        s
    }

    pub fn node_coord(&self, flat: usize) -> Vec<f64> {
        let n = self.dims.len();
        let strides = self.strides();
        let mut x = Vec::with_capacity(n);
        let mut rem = flat;
        for d in 0..n {
            let idx = rem / strides[d];
            rem %= strides[d];
            x.push(self.origin[d] + idx as f64 * self.h);
        }
        x
    }

    /// Multilinear interpolation. Errors when the surrounding cell is not
    /// fully inside the lattice.
    pub fn interp(&self, y: &[f64]) -> Result<f64> {
        let n = self.dims.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch(y.len(), n));
        }
        let strides = self.strides();
        let mut base = 0usize;
        let mut frac = [0.0f64; 8];
        for d in 0..n {
            let t = (y[d] - self.origin[d]) / self.h;
            let i = t.floor();
            if i < 0.0 || (i as usize) + 1 >= self.dims[d] {
                return Err(Error::OutsideLattice(y.to_vec()));
            }
            base += (i as usize) * strides[d];
            frac[d] = t - i;
        }
        let mut val = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..n {
                if (corner >> d) & 1 == 1 {
                    w *= frac[d];
                    idx += strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            val += w * self.values[idx];
        }
        Ok(val)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Sup over interior nodes of |self − other|.
    pub fn interior_sup_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.region)
            .filter(|(_, r)| **r == Region::Interior)
            .fold(0.0_f64, |a, ((u, v), _)| a.max((u - v).abs()))
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.region
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Region::Interior)
            .map(|(i, _)| i)
    }
}

/// Closed-form boundary data g, imposed on the whole strip.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "datum", rename_all = "snake_case")]
pub enum BoundaryDatum {
    Constant { value: f64 },
    Affine { base: f64, slope: Vec<f64> },
    /// g(x) = x₁² − x₂², harmonic in the first two coordinates.
    QuadraticHarmonic,
}

impl BoundaryDatum {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BoundaryDatum::Constant { value } => *value,
            BoundaryDatum::Affine { base, slope } => base + linalg::dot(slope, x),
            BoundaryDatum::QuadraticHarmonic => x[0] * x[0] - x[1] * x[1],
        }
    }
}

/// Antipodally closed set of unit directions discretizing sup/inf over the
/// sphere. Stored pairwise (ν, −ν) with exact floating-point negation.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    pub dirs: Vec<UnitVector>,
    pub max_gap: f64,
}

pub fn direction_set(n: usize, m: usize, seed: u64) -> Result<DirectionSet> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    if m < 2 || m % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "direction count must be even and >= 2, got {m}"
        )));
    }
    let mut dirs = Vec::with_capacity(m);
    if n == 2 {
        for k in 0..m / 2 {
            let th = std::f64::consts::PI * k as f64 / (m / 2) as f64;
            let v = UnitVector::new(vec![th.cos(), th.sin()])
                .unwrap_or_else(|_| UnitVector::normalize(&[th.cos(), th.sin()]).unwrap());
            dirs.push(v.flipped());
            dirs.push(v);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while dirs.len() < m {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let r = linalg::norm(&v);
            if r > 1e-4 && r <= 1.0 {
                let u = UnitVector::normalize(&v)?;
                dirs.push(u.flipped());
                dirs.push(u);
            }
        }
    }
    // quasi-uniformity diagnostic: largest nearest-neighbor angle
    let mut max_gap = 0.0_f64;
    for (i, a) in dirs.iter().enumerate() {
        let mut nearest = f64::INFINITY;
        for (j, b) in dirs.iter().enumerate() {
            if i != j {
                let c = linalg::dot(a.coords(), b.coords()).clamp(-1.0, 1.0);
                nearest = nearest.min(c.acos());
            }
        }
        max_gap = max_gap.max(nearest);
    }
    Ok(DirectionSet { dirs, max_gap })
}

/// midr S = ½ sup S + ½ inf S.
pub fn midrange(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(0.5 * (hi + lo))
}

/// One-direction averaging step A_ε u(x,ν) evaluated through a caller-supplied
/// point functional: α·u(x+εν) + β·avg over the noise ball. The orthogonal
/// variant maps the rule by a frame with first column ν; the fullball variant
/// averages over ε times the full-ball rule, ignoring ν in the noise branch.
pub fn avg_operator_with<F>(
    mut eval: F,
    x: &[f64],
    nu: &UnitVector,
    pair: CoefficientPair,
    epsilon: f64,
    variant: Variant,
    quad: &QuadratureRule,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let det = eval(&linalg::axpy(x, epsilon, nu.coords()))?;
    if pair.beta == 0.0 {
        return Ok(pair.alpha * det);
    }
    let noise = match variant {
        Variant::Orthogonal => {
            let frame = geom::frame_for(nu, 1)?;
            quad.try_average(|z| eval(&linalg::axpy(x, epsilon, &frame.apply(z))))?
        }
        Variant::Fullball => quad.try_average(|z| eval(&linalg::axpy(x, epsilon, z)))?,
    };
    Ok(pair.alpha * det + pair.beta * noise)
}

/// A_ε u(x,ν) on a grid field, with off-lattice values interpolated.
pub fn avg_operator(
    u: &GridField,
    field: &ExponentField,
    x: &[f64],
    nu: &UnitVector,
    variant: Variant,
    epsilon: f64,
    quad: &QuadratureRule,
) -> Result<f64> {
    let pair = coeffs(field, x, x.len(), variant)?;
    avg_operator_with(|y| u.interp(y), x, nu, pair, epsilon, variant, quad)
}

/// Fixed interpolation footprint of one evaluation offset relative to a
/// lattice node: because every node sits on the lattice, the fractional part
/// of (node + offset) is the same for all nodes, so corner weights and
/// relative indices are computed once.
#[derive(Debug, Clone)]
struct Stencil {
    rel: Vec<isize>,
    weights: Vec<f64>,
}

impl Stencil {
    fn build(grid: &GridField, offset: &[f64]) -> Stencil {
        let n = grid.dims.len();
        let strides = grid.strides();
        let mut base: isize = 0;
        let mut frac = vec![0.0; n];
        for d in 0..n {
            let t = offset[d] / grid.h;
            let i = t.floor();
            base += i as isize * strides[d] as isize;
            frac[d] = t - i;
        }
        let corners = 1usize << n;
        let mut rel = Vec::with_capacity(corners);
        let mut weights = Vec::with_capacity(corners);
        for corner in 0..corners {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..n {
                if (corner >> d) & 1 == 1 {
                    w *= frac[d];
                    idx += strides[d] as isize;
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            rel.push(idx);
            weights.push(w);
        }
        Stencil { rel, weights }
    }

    #[inline]
    fn eval(&self, values: &[f64], at: usize) -> f64 {
        let mut v = 0.0;
        for (r, w) in self.rel.iter().zip(&self.weights) {
            v += w * values[(at as isize + r) as usize];
        }
        v
    }
}

/// Discretized DPP operator with everything precomputed per grid geometry:
/// per-node coefficients and the interpolation stencils of every evaluation
/// offset.
pub struct Operator {
    pub variant: Variant,
    pub epsilon: f64,
    alpha: Vec<f64>,
    /// per direction: deterministic offset εν
    det: Vec<Stencil>,
    /// orthogonal variant, per direction: noise offsets εP_νζⱼ
    noise: Vec<Vec<Stencil>>,
    /// fullball variant: offsets εζⱼ of the ball-average rule
    ball_avg: Vec<Stencil>,
    /// fullball variant: relative flat indices of lattice nodes in B_ε(x)
    ball_nodes: Vec<isize>,
}

impl Operator {
    pub fn build(
        grid: &GridField,
        field: &ExponentField,
        variant: Variant,
        epsilon: f64,
        dirs: &DirectionSet,
        quad: &QuadratureRule,
    ) -> Result<Operator> {
        let n = grid.dims.len();
        let mut alpha = vec![0.0; grid.len()];
        for i in grid.interior_indices() {
            alpha[i] = coeffs(field, &grid.node_coord(i), n, variant)?.alpha;
        }
        let mut det = Vec::with_capacity(dirs.dirs.len());
        let mut noise = Vec::new();
        for nu in &dirs.dirs {
            det.push(Stencil::build(grid, &linalg::scale(nu.coords(), epsilon)));
            if variant == Variant::Orthogonal {
                let frame = geom::frame_for(nu, 1)?;
                noise.push(
                    quad.nodes
                        .iter()
                        .map(|z| {
                            Stencil::build(grid, &linalg::scale(&frame.apply(z), epsilon))
                        })
                        .collect(),
                );
            }
        }
        let mut ball_avg = Vec::new();
        let mut ball_nodes = Vec::new();
        if variant == Variant::Fullball {
            ball_avg = quad
                .nodes
                .iter()
                .map(|z| Stencil::build(grid, &linalg::scale(z, epsilon)))
                .collect();
            // lattice nodes within the closed ε-ball of a node
            let strides = grid.strides();
            let k = (epsilon / grid.h).floor() as i64;
            let mut idx = vec![-k; n];
            loop {
                let d2: f64 = idx.iter().map(|&i| (i as f64 * grid.h).powi(2)).sum();
                if d2 <= epsilon * epsilon {
                    let rel: isize = idx
                        .iter()
                        .zip(&strides)
                        .map(|(&i, &s)| i as isize * s as isize)
                        .sum();
                    ball_nodes.push(rel);
                }
                // odometer increment over [-k, k]^n
                let mut d = n;
                loop {
                    if d == 0 {
                        break;
                    }
                    d -= 1;
                    if idx[d] < k {
                        idx[d] += 1;
                        break;
                    }
                    idx[d] = -k;
                    if d == 0 {
                        break;
                    }
                }
                if idx.iter().all(|&i| i == -k) {
                    break;
                }
            }
        }
        Ok(Operator {
            variant,
            epsilon,
            alpha,
            det,
            noise,
            ball_avg,
            ball_nodes,
        })
    }

    #[inline]
    fn node_update(&self, values: &[f64], i: usize) -> f64 {
        let a = self.alpha[i];
        let b = 1.0 - a;
        match self.variant {
            Variant::Orthogonal => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (k, det) in self.det.iter().enumerate() {
                    let mut v = a * det.eval(values, i);
                    if b != 0.0 {
                        let rules = &self.noise[k];
                        let mut s = 0.0;
                        for st in rules {
                            s += st.eval(values, i);
                        }
                        v += b * (s / rules.len() as f64);
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                0.5 * (hi + lo)
            }
            Variant::Fullball => {
                let mut s = 0.0;
                for st in &self.ball_avg {
                    s += st.eval(values, i);
                }
                let avg = s / self.ball_avg.len() as f64;
                if a == 0.0 {
                    return avg;
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &r in &self.ball_nodes {
                    let v = values[(i as isize + r) as usize];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                for det in &self.det {
                    let v = det.eval(values, i);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                a * 0.5 * (hi + lo) + b * avg
            }
        }
    }

    /// One Jacobi sweep: interior nodes recomputed from the previous field,
    /// strip nodes copied through.
    pub fn apply(&self, u: &GridField) -> GridField {
        let mut out = u.clone();
        let values = &u.values;
        out.values
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| {
                if u.region[i] == Region::Interior {
                    *v = self.node_update(values, i);
                }
            });
        out
    }
}

/// Everything needed to pose one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSpec {
    pub domain: Domain,
    pub field: ExponentField,
    pub variant: Variant,
    pub h: f64,
    #[serde(default = "default_dirs")]
    pub dir_count: usize,
    #[serde(default = "default_quad")]
    pub quad_count: usize,
    /// absolute stopping tolerance; default 1e-9·sup|g|
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dirs() -> usize {
    64
}

fn default_quad() -> usize {
    32
}

fn default_max_iter() -> usize {
    200_000
}

impl SolveSpec {
    pub fn dir_default_for(n: usize) -> usize {
        if n <= 2 {
            64
        } else {
            256
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub field: GridField,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub tol: f64,
    pub max_gap: f64,
}

pub fn solve_fixed_point(g: &BoundaryDatum, spec: &SolveSpec) -> Result<SolveResult> {
    solve_fixed_point_from(g, spec, None)
}

/// Value iteration with an optional warm start (interpolated from a coarser
/// solve, say). Any bounded start converges: the sweep is nonexpansive.
pub fn solve_fixed_point_from(
    g: &BoundaryDatum,
    spec: &SolveSpec,
    warm: Option<&GridField>,
) -> Result<SolveResult> {
    spec.field.validate()?;
    let n = spec.domain.dim();
    let mut u = GridField::for_domain(&spec.domain, spec.h)?;
    let mut strip_vals = Vec::new();
    for i in 0..u.len() {
        if u.region[i] == Region::Strip {
            let v = g.eval(&u.node_coord(i));
            u.values[i] = v;
            strip_vals.push(v);
        }
    }
    let start = midrange(&strip_vals)?;
    for i in 0..u.len() {
        if u.region[i] == Region::Interior {
            u.values[i] = match warm {
                Some(w) => w.interp(&u.node_coord(i)).unwrap_or(start),
                None => start,
            };
        }
    }
    let sup_g = strip_vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = spec.tol.unwrap_or(1e-9 * sup_g).max(1e-15);

    let dirs = direction_set(n, spec.dir_count, spec.seed)?;
    let quad = match spec.variant {
        Variant::Orthogonal => geom::ball_quadrature(n, spec.quad_count)?,
        Variant::Fullball => geom::full_ball_quadrature(n, spec.quad_count)?,
    };
    let op = Operator::build(&u, &spec.field, spec.variant, spec.domain.epsilon, &dirs, &quad)?;

    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < spec.max_iter {
        let next = op.apply(&u);
        let res = next.interior_sup_diff(&u);
        residuals.push(res);
        u = next;
        iterations += 1;
        if res <= tol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        field: u,
        iterations,
        residuals,
        converged,
        tol,
        max_gap: dirs.max_gap,
    })
}
