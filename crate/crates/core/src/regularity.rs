//! Empirical regularity measurement on solved lattice fields: the
//! quotient modulus sup |u(x)−u(z)|/(|x−z|+ε), Hölder fits, the gap
//! between a field and the comparison function, and sweeps across step
//! radii.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeff::{ExponentField, Variant};
use crate::comparison::{annulus_index, ComparisonLab};
use crate::dpp::{
    solve_fixed_point_from, BoundaryDatum, Domain, GridField, SolveSpec,
};
use crate::error::{Error, Result};
use crate::linalg;

/// One measurement of a field at one step radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusReport {
    pub epsilon: f64,
    pub pair_count: usize,
    /// sup |u(x)−u(z)| / (|x−z|+ε) over sampled pairs
    pub l_eps: f64,
    pub argmax: (Vec<f64>, Vec<f64>),
    /// log-log fit of |u(x)−u(z)| against |x−z|
    pub delta_fit: f64,
    /// max |u(x)−u(z)| / |x−z|^{delta_fit}
    pub c_fit: f64,
    /// capped (|x−z|, |u(x)−u(z)|) sample for external plotting
    pub scatter: Vec<(f64, f64)>,
}

const SCATTER_CAP: usize = 2000;

fn ball_point(rng: &mut ChaCha8Rng, center: &[f64], r: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let p: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        if linalg::dot(&p, &p) <= 1.0 {
            return center
                .iter()
                .zip(&p)
                .map(|(c, q)| c + r * q)
                .collect();
        }
    }
}

/// Lattice node indices whose coordinates lie within B_r(center).
fn nodes_in_ball(u: &GridField, center: &[f64], r: f64) -> Vec<usize> {
    (0..u.len())
        .filter(|&i| linalg::dist(&u.node_coord(i), center) <= r)
        .collect()
}

/// Quotient modulus over random pairs in B_r(center) plus every
/// nearest-neighbor lattice pair there (the latter catch ε-scale jumps
/// that random pairs at macroscopic distance miss).
pub fn lipschitz_modulus(
    u: &GridField,
    center: &[f64],
    r: f64,
    epsilon: f64,
    pairs: usize,
    seed: u64,
) -> Result<ModulusReport> {
    if pairs < 1000 {
        return Err(Error::Precondition(format!(
            "need at least 1000 sampled pairs, got {pairs}"
        )));
    }
    // every sampled point lies in B_r(center); on a box lattice it suffices
    // to probe the axis extremes of the enclosing cube
    for d in 0..center.len() {
        for sgn in [-1.0, 1.0] {
            let mut probe = center.to_vec();
            probe[d] += sgn * r;
            u.interp(&probe)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l_eps = 0.0_f64;
    let mut argmax = (center.to_vec(), center.to_vec());
    let mut scatter = Vec::new();
    let mut fit_pts: Vec<(f64, f64)> = Vec::new();
    let mut count = 0usize;

    let mut record = |x: &[f64], z: &[f64], ux: f64, uz: f64| {
        let d = linalg::dist(x, z);
        if d < 1e-12 {
            return;
        }
        let mut du = (ux - uz).abs();
        // interpolation rounding floor: differences at relative machine
        // scale are measurement noise, not field variation
        if du <= 1e-13 * ux.abs().max(uz.abs()) {
            du = 0.0;
        }
        let q = du / (d + epsilon);
        if q > l_eps {
            l_eps = q;
            argmax = (x.to_vec(), z.to_vec());
        }
        if scatter.len() < SCATTER_CAP {
            scatter.push((d, du));
        }
        if du > 0.0 {
            fit_pts.push((d.ln(), du.ln()));
        }
        count += 1;
    };

    for _ in 0..pairs {
        let x = ball_point(&mut rng, center, r);
        let z = ball_point(&mut rng, center, r);
        record(&x, &z, u.interp(&x)?, u.interp(&z)?);
    }
    let strides = u.strides();
    for &i in &nodes_in_ball(u, center, r) {
        let x = u.node_coord(i);
        for (d, &s) in strides.iter().enumerate() {
            let j = i + s;
            // neighbor along axis d exists iff the index does not wrap
            let idx_d = (i / s) % u.dims[d];
            if idx_d + 1 >= u.dims[d] || j >= u.len() {
                continue;
            }
            let z = u.node_coord(j);
            if linalg::dist(&z, center) <= r {
                record(&x, &z, u.values[i], u.values[j]);
            }
        }
    }

    // Hölder fit: least-squares slope in log-log, then the tight constant
    let (delta_fit, c_fit) = if fit_pts.len() < 2 {
        (0.0, 0.0)
    } else {
        let m = fit_pts.len() as f64;
        let sx: f64 = fit_pts.iter().map(|p| p.0).sum::<f64>() / m;
        let sy: f64 = fit_pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = fit_pts.iter().map(|p| (p.0 - sx) * (p.0 - sx)).sum();
        let sxy: f64 = fit_pts.iter().map(|p| (p.0 - sx) * (p.1 - sy)).sum();
        if sxx < 1e-12 {
            (0.0, 0.0)
        } else {
            let slope = sxy / sxx;
            let c = scatter
                .iter()
                .filter(|(d, du)| *d > 1e-12 && *du > 0.0)
                .map(|(d, du)| du / d.powf(slope))
                .fold(0.0_f64, f64::max);
            (slope, c)
        }
    };

    Ok(ModulusReport {
        epsilon,
        pair_count: count,
        l_eps,
        argmax,
        delta_fit,
        c_fit,
        scatter,
    })
}

/// Hölder inputs for the constants recipe, read off a coarse measurement
/// (recorded in the report they came from).
pub fn holder_inputs(report: &ModulusReport) -> (f64, f64) {
    (report.c_fit.max(1e-6), report.delta_fit.clamp(0.05, 1.0))
}

/// Gap between a field and the comparison function over a region:
/// K = sup (u(x) − u(z) − f(x,z)), with the pass threshold C^{2N}ε.
/// C^{2N}ε routinely overflows f64, so the per-pair pass checks and the
/// reported magnitudes are carried in logarithms where needed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub k: f64,
    /// log10 of K when K > 0 (exact when K is finite)
    pub k_log10: f64,
    pub witness: (Vec<f64>, Vec<f64>),
    pub threshold: f64,
    pub threshold_log10: f64,
    pub pass: bool,
    pub pair_count: usize,
}

pub fn gap_k(
    u: &GridField,
    lab: &ComparisonLab,
    center: &[f64],
    r: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<GapReport> {
    let p = &lab.params;
    let eps = lab.epsilon;
    let c = p.big_c;
    let n_big = p.big_n;
    let thr_log10 = 2.0 * n_big as f64 * c.log10() + eps.log10();
    let threshold = c.powi(2 * n_big as i32) * eps; // may be +inf

    let nodes = nodes_in_ball(u, center, r);
    if nodes.is_empty() {
        return Err(Error::Precondition(
            "no lattice nodes inside the measurement ball".into(),
        ));
    }

    // per-pair value u(x)−u(z)−f = a + C^{2(N−i)}ε with a = Δu − f₁ finite
    // and i the annulus of |x−z| (no annulus ⇒ value = a)
    struct Best {
        a: f64,
        annulus: Option<u32>,
        x: Vec<f64>,
        z: Vec<f64>,
    }
    let mut best: Option<Best> = None;
    let mut pass = true;
    let mut count = 0usize;

    let value_of = |a: f64, i: Option<u32>| -> f64 {
        match i {
            Some(i) => a + c.powi(2 * (n_big - i) as i32) * eps,
            None => a,
        }
    };
    // ordering that stays meaningful when both values overflow
    let better = |cand_a: f64, cand_i: Option<u32>, cur: &Best| -> bool {
        let v1 = value_of(cand_a, cand_i);
        let v2 = value_of(cur.a, cur.annulus);
        if v1.is_finite() || v2.is_finite() {
            return v1 > v2;
        }
        match (cand_i, cur.annulus) {
            (Some(i1), Some(i2)) => i1 < i2 || (i1 == i2 && cand_a > cur.a),
            (Some(_), None) => true,
            _ => false,
        }
    };

    let mut visit = |i: usize, j: usize, best: &mut Option<Best>, pass: &mut bool| {
        let x = u.node_coord(i);
        let z = u.node_coord(j);
        let d = linalg::dist(&x, &z);
        let a = u.values[i] - u.values[j] - lab.f1(&x, &z);
        let ann = annulus_index(d, eps, n_big);
        count += 1;
        // pass: a + C^{2(N−i)}ε ≤ C^{2N}ε, i.e. a ≤ (C^{2N} − C^{2(N−i)})ε
        let ok = if a <= 0.0 {
            true
        } else {
            match ann {
                Some(0) => false,
                Some(i) => {
                    // ln rhs = ln ε + 2N ln C + ln(1 − C^{−2i}), valid C > 1
                    if c > 1.0 {
                        a.ln()
                            <= eps.ln()
                                + 2.0 * n_big as f64 * c.ln()
                                + (-c.powi(-2 * i as i32)).ln_1p()
                    } else {
                        a <= (c.powi(2 * n_big as i32) - c.powi(2 * (n_big - i) as i32)) * eps
                    }
                }
                None => a.ln() <= eps.ln() + 2.0 * n_big as f64 * c.ln(),
            }
        };
        if !ok {
            *pass = false;
        }
        match best {
            Some(b) if !better(a, ann, b) => {}
            _ => {
                *best = Some(Best {
                    a,
                    annulus: ann,
                    x,
                    z,
                })
            }
        }
    };

    let all_pairs = nodes.len() * nodes.len();
    if all_pairs <= max_pairs {
        for &i in &nodes {
            for &j in &nodes {
                visit(i, j, &mut best, &mut pass);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // always include self pairs and nearest neighbors inside the ball
        for &i in &nodes {
            visit(i, i, &mut best, &mut pass);
        }
        let strides = u.strides();
        for &i in &nodes {
            for (d, &s) in strides.iter().enumerate() {
                let idx_d = (i / s) % u.dims[d];
                if idx_d + 1 < u.dims[d] && i + s < u.len() {
                    visit(i, i + s, &mut best, &mut pass);
                }
            }
        }
        for _ in 0..max_pairs {
            let i = nodes[rng.gen_range(0..nodes.len())];
            let j = nodes[rng.gen_range(0..nodes.len())];
            visit(i, j, &mut best, &mut pass);
        }
    }

    let best = best.expect("at least one pair was visited");
    let k = value_of(best.a, best.annulus);
    let k_log10 = if k.is_finite() {
        if k > 0.0 {
            k.log10()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        match best.annulus {
            Some(i) => eps.log10() + 2.0 * (n_big - i) as f64 * c.log10(),
            None => f64::INFINITY,
        }
    };
    Ok(GapReport {
        k,
        k_log10,
        witness: (best.x, best.z),
        threshold,
        threshold_log10: thr_log10,
        pass,
        pair_count: count,
    })
}

/// One problem swept across step radii: solved fresh per ε at grid
/// spacing h = ε/2 (warm-started from the previous radius) and measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepProblem {
    pub domain: Domain,
    pub field: ExponentField,
    pub variant: Variant,
    pub datum: BoundaryDatum,
    pub dir_count: usize,
    pub quad_count: usize,
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub center: Vec<f64>,
    pub r: f64,
    pub pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
    pub report: ModulusReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// L(ε_{k+1}) / L(ε_k)
    pub ratios: Vec<f64>,
}

pub fn scale_sweep(problem: &SweepProblem, eps_list: &[f64]) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(Error::Precondition("empty radius list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(
            "radius list must be strictly decreasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut warm: Option<GridField> = None;
    for &eps in eps_list {
        let mut domain = problem.domain.clone();
        domain.epsilon = eps;
        let spec = SolveSpec {
            domain,
            field: problem.field.clone(),
            variant: problem.variant,
            h: eps / 2.0,
            dir_count: problem.dir_count,
            quad_count: problem.quad_count,
            tol: problem.tol,
            max_iter: problem.max_iter,
            seed: problem.seed,
        };
        let solved = solve_fixed_point_from(&problem.datum, &spec, warm.as_ref())?;
        let report = lipschitz_modulus(
            &solved.field,
            &problem.center,
            problem.r,
            eps,
            problem.pairs,
            problem.seed,
        )?;
        rows.push(SweepRow {
            epsilon: eps,
            converged: solved.converged,
            iterations: solved.iterations,
            report,
        });
        warm = Some(solved.field);
    }
    let ratios = rows
        .windows(2)
        .map(|w| w[1].report.l_eps / w[0].report.l_eps)
        .collect();
    Ok(SweepReport { rows, ratios })
}
