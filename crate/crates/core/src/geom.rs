//! Vector geometry: orthogonal frames, the coupled rotation pair, projections
//! onto span{v}, planar rotations, and symmetric quadrature on the orthogonal
//! and full unit balls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

const UNIT_TOL: f64 = 1e-12;

/// A direction vector with Euclidean norm 1 (within 1e-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = linalg::norm(&coords);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "unit vector has norm {n}, expected 1"
            )));
        }
        Ok(UnitVector(coords))
    }

    /// Normalizes a nonzero vector into a direction.
    pub fn normalize(coords: &[f64]) -> Result<Self> {
        let n = linalg::norm(coords);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidInput("cannot normalize zero vector".into()));
        }
        Ok(UnitVector(linalg::scale(coords, 1.0 / n)))
    }

    pub fn axis(n: usize, i: usize) -> Self {
        UnitVector(linalg::basis_vector(n, i))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        UnitVector(linalg::neg(&self.0))
    }
}

/// Signed component of h along a direction v plus the magnitude of the
/// orthogonal remainder; h_V² + h_Vperp² = |h|².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub h_v: f64,
    pub h_vperp: f64,
}

/// h_V = ⟨v,h⟩, h_Vperp = sqrt(|h|² − h_V²). Round-off radicands down to
/// −1e-14 clamp to zero; anything more negative is an internal
/// inconsistency and errors out.
pub fn project(h: &[f64], v: &UnitVector) -> Result<Projection> {
    if h.len() != v.dim() {
        return Err(Error::DimensionMismatch(h.len(), v.dim()));
    }
    let h_v = linalg::dot(v.coords(), h);
    let rad = linalg::dot(h, h) - h_v * h_v;
    let h_vperp = if rad >= 0.0 {
        rad.sqrt()
    } else if rad >= -1e-14 {
        0.0
    } else {
        return Err(Error::NegativeRadicand(rad));
    };
    Ok(Projection { h_v, h_vperp })
}

/// An orthogonal matrix together with the sign of its determinant.
#[derive(Debug, Clone)]
pub struct OrthogonalFrame {
    matrix: Mat,
    det_sign: i8,
}

impl OrthogonalFrame {
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn det_sign(&self) -> i8 {
        self.det_sign
    }

    pub fn first_column(&self) -> &[f64] {
        self.matrix.col(0)
    }

    pub fn second_column(&self) -> &[f64] {
        self.matrix.col(1)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.apply(x)
    }
}

/// Orthonormal extension of `fixed` to a full basis of R^n, by Gram–Schmidt
/// over the standard basis picking the largest residual at each step
/// (ties broken by lowest index). Deterministic.
fn orthonormal_completion(fixed: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = fixed.to_vec();
    let mut extra = Vec::new();
    while basis.len() < n {
        let mut best_vec: Option<Vec<f64>> = None;
        let mut best_norm = -1.0;
        for i in 0..n {
            let mut e = linalg::basis_vector(n, i);
            for b in &basis {
                let c = linalg::dot(b, &e);
                e = linalg::axpy(&e, -c, b);
            }
            let r = linalg::norm(&e);
            if r > best_norm + 1e-12 {
                best_norm = r;
                best_vec = Some(e);
            }
        }
        let mut v = best_vec.expect("basis incomplete but no residual found");
        // second orthogonalization pass for numerical hygiene
        for b in &basis {
            let c = linalg::dot(b, &v);
            v = linalg::axpy(&v, -c, b);
        }
        let v = linalg::scale(&v, 1.0 / linalg::norm(&v));
        basis.push(v.clone());
        extra.push(v);
    }
    extra
}

/// Builds an orthogonal matrix whose first column is `nu` and whose
/// determinant has the requested sign. Deterministic: identical inputs give
/// bit-identical matrices.
pub fn frame_for(nu: &UnitVector, det_sign: i8) -> Result<OrthogonalFrame> {
    if det_sign != 1 && det_sign != -1 {
        return Err(Error::InvalidInput("det_sign must be ±1".into()));
    }
    let n = nu.dim();
    let mut cols = vec![nu.coords().to_vec()];
    cols.extend(orthonormal_completion(&cols, n));
    let mut matrix = Mat::from_columns(&cols);
    if n > 1 && matrix.det().signum() as i8 != det_sign {
        for v in matrix.col_mut(n - 1) {
            *v = -*v;
        }
    }
    Ok(OrthogonalFrame {
        matrix,
        det_sign,
    })
}

/// The coupled pair (P_{ν_x}, P_{ν_z}) sharing their last n−2 columns, with
/// det P_x = +1, det P_z = −1, so that |P_xζ − P_zζ| ≤ |ν_x + ν_z| for all ζ
/// with ζ₁ = 0, |ζ| ≤ 1, and ⟨ρ_x, ρ_z⟩ = −⟨ν_x, ν_z⟩.
#[derive(Debug, Clone)]
pub struct CoupledRotation {
    pub p_x: OrthogonalFrame,
    pub p_z: OrthogonalFrame,
    pub nu_x: UnitVector,
    pub nu_z: UnitVector,
}

impl CoupledRotation {
    /// |ν_x + ν_z|, the uniform bound on the noise-displacement difference.
    pub fn contraction_bound(&self) -> f64 {
        linalg::norm(&linalg::add(self.nu_x.coords(), self.nu_z.coords()))
    }
}

pub fn coupled_rotation(nu_x: &UnitVector, nu_z: &UnitVector) -> Result<CoupledRotation> {
    let n = nu_x.dim();
    if nu_z.dim() != n {
        return Err(Error::DimensionMismatch(n, nu_z.dim()));
    }
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    let c = linalg::dot(nu_x.coords(), nu_z.coords());
    let w = linalg::axpy(nu_z.coords(), -c, nu_x.coords());
    let s = linalg::norm(&w);
    // Second basis vector of the plane spanned by {ν_x, ν_z}. If the two
    // directions are parallel the plane degenerates and any deterministic
    // complement of ν_x will do.
    let plane_b = if s > 1e-9 {
        // re-orthogonalize: the single subtraction above leaves an error of
        // order eps/s against ν_x, visible already for s ~ 1e-5
        let b = linalg::scale(&w, 1.0 / s);
        let b = linalg::axpy(&b, -linalg::dot(&b, nu_x.coords()), nu_x.coords());
        linalg::scale(&b, 1.0 / linalg::norm(&b))
    } else {
        orthonormal_completion(&[nu_x.coords().to_vec()], n)
            .into_iter()
            .next()
            .expect("n >= 2 guarantees a complement")
    };
    let shared = orthonormal_completion(&[nu_x.coords().to_vec(), plane_b.clone()], n);

    let assemble = |first: &[f64], second: &[f64]| -> Mat {
        let mut cols = vec![first.to_vec(), second.to_vec()];
        cols.extend(shared.iter().cloned());
        Mat::from_columns(&cols)
    };

    let mx = assemble(nu_x.coords(), &plane_b);
    let rho_x = if mx.det() > 0.0 {
        plane_b.clone()
    } else {
        linalg::neg(&plane_b)
    };
    // ρ_z candidate: unit vector of the plane orthogonal to ν_z.
    // ν_z = c·ν_x + s·plane_b, so −s·ν_x + c·plane_b works (reduces to
    // ±plane_b in the parallel case).
    let rho_z0 = if s > 1e-9 {
        linalg::axpy(&linalg::scale(&plane_b, c), -s, nu_x.coords())
    } else {
        linalg::scale(&plane_b, if c >= 0.0 { 1.0 } else { -1.0 })
    };
    let mz = assemble(nu_z.coords(), &rho_z0);
    let rho_z = if mz.det() < 0.0 {
        rho_z0
    } else {
        linalg::neg(&rho_z0)
    };

    let p_x = OrthogonalFrame {
        matrix: assemble(nu_x.coords(), &rho_x),
        det_sign: 1,
    };
    let p_z = OrthogonalFrame {
        matrix: assemble(nu_z.coords(), &rho_z),
        det_sign: -1,
    };
    Ok(CoupledRotation {
        p_x,
        p_z,
        nu_x: nu_x.clone(),
        nu_z: nu_z.clone(),
    })
}

/// Rotates v by `theta` toward w within span{v, w}, fixing the orthogonal
/// complement. Errors when v and w do not span a plane.
pub fn rotate_in_plane(v: &UnitVector, w: &UnitVector, theta: f64) -> Result<UnitVector> {
    if v.dim() != w.dim() {
        return Err(Error::DimensionMismatch(v.dim(), w.dim()));
    }
    let c = linalg::dot(v.coords(), w.coords());
    let wp = linalg::axpy(w.coords(), -c, v.coords());
    let s = linalg::norm(&wp);
    if s < 1e-9 {
        return Err(Error::ParallelVectors);
    }
    let u = linalg::scale(&wp, 1.0 / s);
    let out = linalg::axpy(&linalg::scale(v.coords(), theta.cos()), theta.sin(), &u);
    UnitVector::normalize(&out)
}

/// Antipodally symmetric quadrature rule with equal weights. Nodes are stored
/// pairwise (ζ, −ζ) so linear functionals cancel exactly in floating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted average of f over the nodes. Weights are uniform in every
    /// rule we build, so this is an exact mean: constants come back exactly.
    pub fn average<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let sum: f64 = self.nodes.iter().map(|z| f(z)).sum();
        sum / self.nodes.len() as f64
    }

    pub fn try_average<F: FnMut(&[f64]) -> Result<f64>>(&self, mut f: F) -> Result<f64> {
        let mut sum = 0.0;
        for z in &self.nodes {
            sum += f(z)?;
        }
        Ok(sum / self.nodes.len() as f64)
    }
}

/// Deterministic stream of gaussians for quadrature construction.
fn gaussian(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random orthonormal d-frame (columns) by Gram–Schmidt on gaussian vectors.
fn random_frame(d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    'retry: loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
            for c in &cols {
                let t = linalg::dot(c, &v);
                v = linalg::axpy(&v, -t, c);
            }
            let r = linalg::norm(&v);
            if r < 1e-6 {
                continue 'retry;
            }
            cols.push(linalg::scale(&v, 1.0 / r));
        }
        return cols;
    }
}

/// Antipodal point set in the unit d-ball with second moments exactly those
/// of the uniform measure: unions of rotated orthonormal frames at the single
/// radius ρ = √(d/(d+2)), each frame contributing ρ²/d·I exactly, so the
/// total covariance is I/(d+2) independent of the rotations. Node count is
/// rounded up to a whole number of frames (2d nodes each).
fn symmetric_ball_points(d: usize, m: usize, seed_tag: u64) -> Vec<Vec<f64>> {
    use rand::SeedableRng;
    let frames = m.div_ceil(2 * d);
    let rho = (d as f64 / (d + 2) as f64).sqrt();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xb411_0000 ^ seed_tag ^ (d as u64) << 8);
    let mut out = Vec::with_capacity(frames * 2 * d);
    for _ in 0..frames {
        for col in random_frame(d, &mut rng) {
            let v = linalg::scale(&col, rho);
            out.push(linalg::neg(&v));
            out.push(v);
        }
    }
    out
}

/// Quadrature on 𝔹^{e₁} = {ζ : ζ₁ = 0, |ζ| ≤ 1} ⊂ R^n with m nodes (m even).
/// n = 2 is the composite midpoint rule on the segment; n ≥ 3 uses rotated
/// orthonormal frames with exactly matched second moments (count rounded up
/// to whole frames). Both integrate odd functions of ζ to exactly zero.
pub fn ball_quadrature(n: usize, m: usize) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    if m < 2 || m % 2 != 0 {
        return Err(Error::InvalidQuadrature(format!(
            "node count must be even and >= 2, got {m}"
        )));
    }
    if n == 2 {
        // midpoints of m subintervals of [-1, 1], paired antipodally
        let weights = vec![1.0 / m as f64; m];
        let mut nodes = Vec::with_capacity(m);
        for k in 1..=(m / 2) {
            let t = (2 * k - 1) as f64 / m as f64;
            nodes.push(vec![0.0, -t]);
            nodes.push(vec![0.0, t]);
        }
        return Ok(QuadratureRule { nodes, weights });
    }
    let pts = symmetric_ball_points(n - 1, m, 0x5e01);
    let weights = vec![1.0 / pts.len() as f64; pts.len()];
    let nodes = pts
        .into_iter()
        .map(|p| {
            let mut z = Vec::with_capacity(n);
            z.push(0.0);
            z.extend(p);
            z
        })
        .collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Quadrature on the full unit n-ball, same frame construction and exact
/// second moments.
pub fn full_ball_quadrature(n: usize, m: usize) -> Result<QuadratureRule> {
    if n < 1 {
        return Err(Error::DimensionTooSmall { min: 1, got: n });
    }
    if m < 2 || m % 2 != 0 {
        return Err(Error::InvalidQuadrature(format!(
            "node count must be even and >= 2, got {m}"
        )));
    }
    let nodes = symmetric_ball_points(n, m, 0xfb02);
    let weights = vec![1.0 / nodes.len() as f64; nodes.len()];
    Ok(QuadratureRule { nodes, weights })
}
