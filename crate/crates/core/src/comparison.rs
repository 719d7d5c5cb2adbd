//! The two-point comparison machinery: the concave modulus ω, the comparison
//! function f = f₁ − f₂ with its annular step part, the coupled averaging
//! functional F, and numerical verifiers for the Taylor bound, the two
//! strategy cases, and the annular chain. Also the constants recipe that
//! turns problem data into an admissible parameter set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coeff::{coeffs, ExponentField, Variant};
use crate::error::{Error, Result};
use crate::geom::{self, QuadratureRule, UnitVector};
use crate::linalg;

/// Parameter set of the comparison function. Fields are plain data;
/// admissibility is checked by `admissibility`, not enforced at
/// construction, so verifiers can also probe inadmissible corners.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonParams {
    /// modulus exponent: gamma = 1 + s
    pub s: f64,
    pub omega0: f64,
    pub big_c: f64,
    pub big_m: f64,
    pub big_n: u32,
    pub r: f64,
    pub c_alpha: f64,
    pub alpha_min: f64,
    pub sup_u: f64,
    /// prior modulus data for the second strategy case
    pub c_u: f64,
    pub delta: f64,
}

impl ComparisonParams {
    pub fn gamma(&self) -> f64 {
        1.0 + self.s
    }

    pub fn omega1(&self) -> f64 {
        (1.0 / (2.0 * self.gamma() * self.omega0)).powf(1.0 / self.s)
    }

    pub fn omega(&self) -> OmegaFn {
        OmegaFn::new(self)
    }

    /// All arithmetic admissibility constraints, each named and reported
    /// with both sides.
    pub fn admissibility(&self) -> Vec<Constraint> {
        let s = self.s;
        let g = self.gamma();
        let m = self.big_m;
        let c = self.big_c;
        let quad_root =
            (7.0 + (49.0 + 8.0 * self.alpha_min).sqrt()) / (2.0 * self.alpha_min);
        vec![
            Constraint::ge("omega0_floor", self.omega0, 0.5),
            Constraint::gt("omega0_radius", self.omega0, 1.0 / (2.0 * self.r.powf(s))),
            Constraint::ge(
                "omega0_concavity_vs_holder",
                self.omega0,
                (self.c_alpha + 2.0) / (3.0 * self.alpha_min * s * g),
            ),
            Constraint::gt("c_dominates_supu", c, (16.0 * self.omega0).powf(1.0 / s) * self.sup_u),
            Constraint::gt("c_case1", c, 2.0 * (4.0 * m + 1.0)),
            Constraint::gt(
                "c_case2",
                c,
                8.0 * ((4.0 * m + 1.0) / (3.0 * self.c_alpha + 1.0)
                    + 12.0 * (m * self.c_u).sqrt() / self.alpha_min),
            ),
            Constraint::gt("c_annular_slope", c, 8.0 * m * self.r + 1.0),
            Constraint::gt("c_annular_quadratic", c, quad_root),
            Constraint::ge("n_floor", self.big_n as f64, 40.0),
            Constraint::gt(
                "n_vs_c",
                self.big_n as f64,
                2f64.powf(5.5) * 10.0 * c * self.omega0,
            ),
            Constraint::gt(
                "n_vs_holder",
                self.big_n as f64,
                40.0 * (3.0 * self.c_alpha + 1.0) / self.alpha_min,
            ),
            Constraint::eq_tol(
                "m_from_supu",
                m,
                2.0 / (3.0 * self.r * self.r) * self.sup_u,
                1e-12,
            ),
        ]
    }

    pub fn is_admissible(&self) -> bool {
        self.admissibility().iter().all(|c| c.ok)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl Constraint {
    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Constraint {
            name: name.into(),
            lhs,
            rhs,
            ok: lhs >= rhs,
        }
    }

    fn gt(name: &str, lhs: f64, rhs: f64) -> Self {
        Constraint {
            name: name.into(),
            lhs,
            rhs,
            ok: lhs > rhs,
        }
    }

    fn eq_tol(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Constraint {
            name: name.into(),
            lhs,
            rhs,
            ok: (lhs - rhs).abs() <= tol * rhs.abs().max(1.0),
        }
    }
}

/// ω(t) = t − ω₀ t^γ on [0, ω₁], extended linearly with slope ½ beyond ω₁
/// (plus a recorded constant offset when needed to dominate the solution
/// bound). Increasing and concave with ω′ ∈ [½, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaFn {
    pub omega0: f64,
    pub gamma: f64,
    pub omega1: f64,
    /// constant added on the linear continuation so that C·ω(r) clears
    /// 2·sup|u|; zero whenever the parameter constraints already give it
    pub ext_offset: f64,
}

impl OmegaFn {
    pub fn new(p: &ComparisonParams) -> OmegaFn {
        let mut w = OmegaFn {
            omega0: p.omega0,
            gamma: p.gamma(),
            omega1: p.omega1(),
            ext_offset: 0.0,
        };
        let needed = 2.0 * p.sup_u / p.big_c;
        let at_r = w.eval_unchecked(p.r).0;
        if at_r <= needed {
            w.ext_offset = needed - at_r + 1e-9 * needed.max(1.0);
        }
        w
    }

    fn eval_unchecked(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.omega1 {
            let v = t - self.omega0 * t.powf(self.gamma);
            let d1 = 1.0 - self.gamma * self.omega0 * t.powf(self.gamma - 1.0);
            let d2 = if t == 0.0 {
                0.0
            } else {
                -self.gamma * (self.gamma - 1.0) * self.omega0 * t.powf(self.gamma - 2.0)
            };
            (v, d1, d2)
        } else {
            let w1 = self.omega1 - self.omega0 * self.omega1.powf(self.gamma);
            (w1 + 0.5 * (t - self.omega1) + self.ext_offset, 0.5, 0.0)
        }
    }

    /// (ω, ω′, ω″) at t ≥ 0.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        if t < 0.0 {
            return Err(Error::Precondition(format!("omega argument {t} < 0")));
        }
        Ok(self.eval_unchecked(t))
    }
}

/// Index of the annulus A_i = {(i−1)ε/10 < |x−z| ≤ iε/10}; the diagonal is
/// A₀. Distances beyond Nε/10 return None (the step function vanishes).
pub fn annulus_index(d: f64, epsilon: f64, big_n: u32) -> Option<u32> {
    if d == 0.0 {
        return Some(0);
    }
    let i = (10.0 * d / epsilon).ceil() as u64;
    if i <= big_n as u64 {
        Some(i as u32)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FValues {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
}

/// Full verification context: parameters, the probability field, the step
/// radius and the quadrature rule driving the averaged terms of F.
#[derive(Debug, Clone)]
pub struct ComparisonLab {
    pub params: ComparisonParams,
    pub field: ExponentField,
    pub variant: Variant,
    pub epsilon: f64,
    pub quad: QuadratureRule,
    pub omega: OmegaFn,
}

impl ComparisonLab {
    pub fn new(
        params: ComparisonParams,
        field: ExponentField,
        variant: Variant,
        epsilon: f64,
        quad: QuadratureRule,
    ) -> ComparisonLab {
        let omega = params.omega();
        ComparisonLab {
            params,
            field,
            variant,
            epsilon,
            quad,
            omega,
        }
    }

    pub fn alpha(&self, x: &[f64]) -> Result<f64> {
        Ok(coeffs(&self.field, x, x.len(), self.variant)?.alpha)
    }

    /// f₁ = C·ω(|x−z|) + M|x+z|².
    pub fn f1(&self, x: &[f64], z: &[f64]) -> f64 {
        let d = linalg::dist(x, z);
        let sum = linalg::add(x, z);
        let (w, _, _) = self.omega.eval_unchecked(d);
        self.params.big_c * w + self.params.big_m * linalg::dot(&sum, &sum)
    }

    /// Annular step f₂ = C^{2(N−i)}·ε on A_i, 0 beyond A_N. Overflows to
    /// +inf honestly for large N; use `f2_scaled` for annular arithmetic.
    pub fn f2(&self, x: &[f64], z: &[f64]) -> f64 {
        let d = linalg::dist(x, z);
        match annulus_index(d, self.epsilon, self.params.big_n) {
            Some(i) => {
                self.params.big_c.powi(2 * (self.params.big_n - i) as i32) * self.epsilon
            }
            None => 0.0,
        }
    }

    /// f₂ in units of C^{2(N−base)}·ε: C^{2(base−i)} on A_i, 0 beyond A_N.
    /// Stays representable whenever the evaluated pair sits within a few
    /// annuli of the base.
    pub fn f2_scaled(&self, x: &[f64], z: &[f64], base: u32) -> f64 {
        let d = linalg::dist(x, z);
        match annulus_index(d, self.epsilon, self.params.big_n) {
            Some(i) => self
                .params
                .big_c
                .powi(2 * (base as i32 - i as i32)),
            None => 0.0,
        }
    }

    /// (f, f₁, f₂) with f = f₁ − f₂.
    pub fn f_eval(&self, x: &[f64], z: &[f64]) -> FValues {
        let f1 = self.f1(x, z);
        let f2 = self.f2(x, z);
        FValues { f: f1 - f2, f1, f2 }
    }

    /// The coupled averaging functional applied to an arbitrary two-point
    /// function: with a = α(x) ∨ α(z), b = α(x) ∧ α(z) (after the internal
    /// label swap that makes the first argument the higher-α token),
    ///
    ///   F = b·t_det + (1−a)·t_common + (a−b)·t_mixed
    ///
    /// where t_det pairs both deterministic moves, t_common averages the
    /// shared noise through the coupled rotations, and t_mixed pairs the
    /// higher-α token's deterministic move with the other token's noise.
    /// Evaluated in the rearranged form t_common + b(t_det−t_common) +
    /// (a−b)(t_mixed−t_common) so constants pass through exactly.
    pub fn f_functional<G>(
        &self,
        f: G,
        x: &[f64],
        z: &[f64],
        nu_x: &UnitVector,
        nu_z: &UnitVector,
    ) -> Result<f64>
    where
        G: Fn(&[f64], &[f64]) -> f64,
    {
        let a_x = self.alpha(x)?;
        let a_z = self.alpha(z)?;
        let eps = self.epsilon;
        // label swap: present the higher-α token first
        let (x, z, nu_x, nu_z, a_hi, a_lo, swapped) = if a_x >= a_z {
            (x, z, nu_x, nu_z, a_x, a_z, false)
        } else {
            (z, x, nu_z, nu_x, a_z, a_x, true)
        };
        let fv = |p: &[f64], q: &[f64]| if swapped { f(q, p) } else { f(p, q) };

        let xd = linalg::axpy(x, eps, nu_x.coords());
        let zd = linalg::axpy(z, eps, nu_z.coords());
        let t_det = fv(&xd, &zd);
        let (t_common, t_mixed) = match self.variant {
            Variant::Orthogonal => {
                let cr = geom::coupled_rotation(nu_x, nu_z)?;
                let t_common = self.quad.average(|zeta| {
                    fv(
                        &linalg::axpy(x, eps, &cr.p_x.apply(zeta)),
                        &linalg::axpy(z, eps, &cr.p_z.apply(zeta)),
                    )
                });
                let t_mixed = self.quad.average(|zeta| {
                    fv(&xd, &linalg::axpy(z, eps, &cr.p_z.apply(zeta)))
                });
                (t_common, t_mixed)
            }
            Variant::Fullball => {
                let t_common = self.quad.average(|zeta| {
                    fv(
                        &linalg::axpy(x, eps, zeta),
                        &linalg::axpy(z, eps, zeta),
                    )
                });
                let t_mixed =
                    self.quad.average(|zeta| fv(&xd, &linalg::axpy(z, eps, zeta)));
                (t_common, t_mixed)
            }
        };
        Ok(t_common + a_lo * (t_det - t_common) + (a_hi - a_lo) * (t_mixed - t_common))
    }

    /// F applied to the comparison function f itself.
    pub fn f_big(
        &self,
        x: &[f64],
        z: &[f64],
        nu_x: &UnitVector,
        nu_z: &UnitVector,
    ) -> Result<f64> {
        self.f_functional(|p, q| self.f_eval(p, q).f, x, z, nu_x, nu_z)
    }

    fn check_window(&self, d: f64) -> Result<()> {
        let floor = self.params.big_n as f64 * self.epsilon / 10.0;
        let cap = self.omega.omega1;
        if d <= floor || d > cap {
            return Err(Error::Precondition(format!(
                "separation {d} outside the smooth window ({floor}, {cap}]"
            )));
        }
        Ok(())
    }

    /// Second-order bound on the f₁ increment: checks
    /// f₁(x+h_x, z+h_z) − f₁ ≤ first- and second-order terms plus the
    /// (4M+1)|x−z|^{γ−2}ε² remainder. Valid in the smooth window.
    pub fn taylor_bound_check(
        &self,
        x: &[f64],
        z: &[f64],
        h_x: &[f64],
        h_z: &[f64],
    ) -> Result<TaylorCheck> {
        let eps = self.epsilon;
        if linalg::norm(h_x) > eps * (1.0 + 1e-12) || linalg::norm(h_z) > eps * (1.0 + 1e-12) {
            return Err(Error::Precondition("displacements must have norm <= epsilon".into()));
        }
        let d = linalg::dist(x, z);
        self.check_window(d)?;
        let v = UnitVector::normalize(&linalg::sub(x, z))?;
        let (_, d1, d2) = self.omega.eval(d)?;
        let c = self.params.big_c;
        let m = self.params.big_m;
        let diff = linalg::sub(h_x, h_z);
        let proj = geom::project(&diff, &v)?;
        let sum_xz = linalg::add(x, z);
        let sum_h = linalg::add(h_x, h_z);
        let lhs = self.f1(&linalg::add(x, h_x), &linalg::add(z, h_z)) - self.f1(x, z);
        let rhs = c * d1 * proj.h_v
            + 2.0 * m * linalg::dot(&sum_xz, &sum_h)
            + 0.5 * c * d2 * proj.h_v * proj.h_v
            + 0.5 * c * (d1 / d) * proj.h_vperp * proj.h_vperp
            + (4.0 * m + 1.0) * d.powf(self.params.gamma() - 2.0) * eps * eps;
        Ok(TaylorCheck {
            lhs,
            rhs,
            ok: lhs <= rhs + 1e-10,
        })
    }

    /// Near-optimal-opponent case: against (ν_x, ν_z) with
    /// (ν_x−ν_z)_V² ≥ 4 − Θ, the reversal response keeps
    /// F(ν) + F(−ν) − 2f strictly negative.
    pub fn case1_verify(
        &self,
        x: &[f64],
        z: &[f64],
        nu_x: &UnitVector,
        nu_z: &UnitVector,
    ) -> Result<CaseCheck> {
        let d = linalg::dist(x, z);
        self.check_window(d)?;
        let v = UnitVector::normalize(&linalg::sub(x, z))?;
        let diff = linalg::sub(nu_x.coords(), nu_z.coords());
        let proj = geom::project(&diff, &v)?;
        let theta = d.powf(self.params.s);
        if proj.h_v * proj.h_v < 4.0 - theta {
            return Err(Error::Precondition(
                "configuration is not in the near-optimal case".into(),
            ));
        }
        let lhs = self.f_big(x, z, nu_x, nu_z)?
            + self.f_big(x, z, &nu_x.flipped(), &nu_z.flipped())?
            - 2.0 * self.f_eval(x, z).f;
        Ok(CaseCheck { lhs, ok: lhs < 0.0 })
    }

    /// Off-optimal-opponent case: pull-together response (−v, v). Reports
    /// the direct evaluation against the analytic margin
    /// [6√(M·C_u) + (α_min/2)((4M+1)/(3c_α+1) − C/8)]·|x−z|^s·ε,
    /// whose negativity is only claimed in the regime
    /// |x+z| ≤ (3/2)√(C_u/M)·|x−z|^{δ/2}.
    pub fn case2_verify(
        &self,
        x: &[f64],
        z: &[f64],
        nu_x: &UnitVector,
        nu_z: &UnitVector,
    ) -> Result<Case2Check> {
        let d = linalg::dist(x, z);
        self.check_window(d)?;
        let v = UnitVector::normalize(&linalg::sub(x, z))?;
        let diff = linalg::sub(nu_x.coords(), nu_z.coords());
        let proj = geom::project(&diff, &v)?;
        let theta = d.powf(self.params.s);
        if proj.h_v * proj.h_v > 4.0 - theta {
            return Err(Error::Precondition(
                "configuration is not in the off-optimal case".into(),
            ));
        }
        let p = &self.params;
        let direct = self.f_big(x, z, nu_x, nu_z)?
            + self.f_big(x, z, &v.flipped(), &v)?
            - 2.0 * self.f_eval(x, z).f;
        let margin = 6.0 * (p.big_m * p.c_u).sqrt()
            + 0.5 * p.alpha_min
                * ((4.0 * p.big_m + 1.0) / (3.0 * p.c_alpha + 1.0) - p.big_c / 8.0);
        let analytic_bound = margin * d.powf(p.s) * self.epsilon;
        let sum = linalg::add(x, z);
        let in_regime = linalg::norm(&sum)
            <= 1.5 * (p.c_u / p.big_m).sqrt() * d.powf(p.delta / 2.0);
        // nothing is claimed outside the regime; such configurations are
        // reported, not failed
        let ok = !in_regime || (direct < analytic_bound + 1e-10 && analytic_bound < 0.0);
        Ok(Case2Check {
            direct,
            analytic_bound,
            in_regime,
            ok,
        })
    }

    /// Short-distance case (|x−z| ≤ Nε/10): builds the move that drops the
    /// pair one annulus inward and checks the chain of inequalities — the
    /// rough f₁ growth bound, the step-function gain of the constructed
    /// move, and the combined strict decrease F(ν) + F(ν̃) − 2f < −Cε for
    /// each sampled opponent move. The step-function part is evaluated in
    /// C^{2(N−i)}ε units; when the final comparison would overflow it is
    /// settled in logarithms.
    pub fn annular_verify(
        &self,
        x: &[f64],
        z: &[f64],
        opponent_moves: &[(UnitVector, UnitVector)],
    ) -> Result<AnnularReport> {
        let p = &self.params;
        let eps = self.epsilon;
        let d = linalg::dist(x, z);
        let i = annulus_index(d, eps, p.big_n).ok_or_else(|| {
            Error::Precondition(format!(
                "separation {d} beyond the annular zone N·eps/10"
            ))
        })?;

        // construct the inward move: land at distance d' in A_{i−1}
        let (nu_tx, nu_tz) = if i == 0 {
            // already on (numerically near) the diagonal: any antipodal pair
            let n = x.len();
            let w = UnitVector::axis(n, 0);
            (w.clone(), w)
        } else {
            let v = UnitVector::normalize(&linalg::sub(x, z))?;
            let target = if i >= 2 {
                (i as f64 - 1.5) * eps / 10.0
            } else {
                0.0
            };
            let c = (d - target) / eps;
            if !(0.0..=2.0).contains(&c) {
                return Err(Error::Precondition(format!(
                    "no unit move reaches the inner annulus (required pull {c}ε)"
                )));
            }
            let t = (1.0 - c * c / 4.0).sqrt();
            let w = geom::frame_for(&v, 1)?.second_column().to_vec();
            let base = linalg::scale(&w, t);
            let nu_tx = linalg::axpy(&base, -c / 2.0, v.coords());
            let nu_tz = linalg::axpy(&base, c / 2.0, v.coords());
            (UnitVector::normalize(&nu_tx)?, UnitVector::normalize(&nu_tz)?)
        };

        let f1_here = self.f1(x, z);
        let c_big = p.big_c;

        // rough growth bound on the smooth part for every evaluated branch
        let mut g1_ok = true;
        let mut g1_worst: f64 = f64::NEG_INFINITY;
        let mut f1_part = |nu_a: &UnitVector, nu_b: &UnitVector| -> Result<f64> {
            let val = self.f_functional(|a, b| self.f1(a, b), x, z, nu_a, nu_b)?;
            let excess = val - f1_here;
            g1_worst = g1_worst.max(excess);
            if excess > 3.0 * c_big * eps {
                g1_ok = false;
            }
            Ok(val)
        };
        let f1_tilde = f1_part(&nu_tx, &nu_tz)?;
        let f1_opp: Vec<f64> = opponent_moves
            .iter()
            .map(|(a, b)| f1_part(a, b))
            .collect::<Result<_>>()?;
        drop(f1_part);

        // step-function part in C^{2(N−i)}ε units
        let f2s = |a: &UnitVector, b: &UnitVector| -> Result<f64> {
            self.f_functional(|px, pz| self.f2_scaled(px, pz, i), x, z, a, b)
        };
        let f2_here_scaled = 1.0; // (x,z) sits in A_i by construction
        let f2_tilde = f2s(&nu_tx, &nu_tz)?;
        let alpha_z = self.alpha(z)?.min(self.alpha(x)?);
        // the constructed deterministic branch lands one annulus in, so the
        // step part of F(ν̃) gains at least α·C² over the local level
        let g2_lower = alpha_z * c_big * c_big;
        let g2_threshold = 7.0 * c_big * c_big.powi(-2 * (p.big_n - i) as i32)
            + 2.0 * f2_here_scaled;
        let g2_ok = f2_tilde >= g2_lower - 1e-9 * g2_lower && f2_tilde > g2_threshold;

        // final inequality per opponent move:
        //   [F₁(ν)+F₁(ν̃)−2f₁] − [F₂(ν)+F₂(ν̃)−2f₂] < −Cε
        // with the bracketed step part S in scaled units; the product
        // S·C^{2(N−i)} is compared in logs when it would overflow.
        let mut final_ok = true;
        let mut margins = Vec::with_capacity(opponent_moves.len());
        for ((nu_a, nu_b), f1_o) in opponent_moves.iter().zip(&f1_opp) {
            let smooth = (f1_o - f1_here) + (f1_tilde - f1_here); // per ε later
            let s_scaled = f2s(nu_a, nu_b)? + f2_tilde - 2.0 * f2_here_scaled;
            let need = smooth / eps + c_big; // require S·C^{2(N−i)} > need
            let ok = if s_scaled <= 0.0 {
                false
            } else if need <= 0.0 {
                true
            } else {
                let log_lhs =
                    s_scaled.ln() + 2.0 * (p.big_n - i) as f64 * c_big.ln();
                log_lhs > need.ln()
            };
            margins.push(s_scaled);
            if !ok {
                final_ok = false;
            }
        }

        Ok(AnnularReport {
            annulus: i,
            move_pair: (nu_tx, nu_tz),
            g1_ok,
            g1_worst_excess: g1_worst,
            g2_ok,
            g2_value: f2_tilde,
            g2_threshold,
            final_ok,
            step_margins: margins,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaylorCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseCheck {
    pub lhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Case2Check {
    pub direct: f64,
    pub analytic_bound: f64,
    pub in_regime: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnularReport {
    pub annulus: u32,
    pub move_pair: (UnitVector, UnitVector),
    pub g1_ok: bool,
    pub g1_worst_excess: f64,
    pub g2_ok: bool,
    pub g2_value: f64,
    pub g2_threshold: f64,
    pub final_ok: bool,
    /// scaled step-part margins per opponent move
    pub step_margins: Vec<f64>,
}

impl AnnularReport {
    pub fn ok(&self) -> bool {
        self.g1_ok && self.g2_ok && self.final_ok
    }
}

/// Inputs the recipe turns into an admissible parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecipeInputs {
    pub s: f64,
    pub c_alpha: f64,
    pub alpha_min: f64,
    pub r: f64,
    pub sup_u: f64,
    pub c_u: f64,
    pub delta: f64,
}

/// Minimal-slack parameters: each of ω₀, C is 1% above the largest of its
/// lower bounds (the quadratic constraint solved for its larger root), N is
/// the smallest integer clearing its two bounds and the floor of 40, and M
/// is pinned by sup_u and r.
pub fn constants_recipe(inp: &RecipeInputs) -> Result<ComparisonParams> {
    if !(inp.s > 0.0 && inp.s < 1.0) {
        return Err(Error::Precondition(format!("s = {} not in (0,1)", inp.s)));
    }
    for (name, v) in [
        ("c_alpha", inp.c_alpha),
        ("alpha_min", inp.alpha_min),
        ("r", inp.r),
        ("sup_u", inp.sup_u),
        ("c_u", inp.c_u),
        ("delta", inp.delta),
    ] {
        if v < 0.0 || !v.is_finite() || (v == 0.0 && name != "c_alpha") {
            return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
        }
    }
    let s = inp.s;
    let gamma = 1.0 + s;
    let m = 2.0 / (3.0 * inp.r * inp.r) * inp.sup_u;
    let omega0 = 1.01
        * [
            0.5,
            1.0 / (2.0 * inp.r.powf(s)),
            (inp.c_alpha + 2.0) / (3.0 * inp.alpha_min * s * gamma),
        ]
        .into_iter()
        .fold(0.0_f64, f64::max);
    let quad_root = (7.0 + (49.0 + 8.0 * inp.alpha_min).sqrt()) / (2.0 * inp.alpha_min);
    let c = 1.01
        * [
            (16.0 * omega0).powf(1.0 / s) * inp.sup_u,
            2.0 * (4.0 * m + 1.0),
            8.0 * ((4.0 * m + 1.0) / (3.0 * inp.c_alpha + 1.0)
                + 12.0 * (m * inp.c_u).sqrt() / inp.alpha_min),
            8.0 * m * inp.r + 1.0,
            quad_root,
        ]
        .into_iter()
        .fold(0.0_f64, f64::max);
    let n1 = 2f64.powf(5.5) * 10.0 * c * omega0;
    let n2 = 40.0 * (3.0 * inp.c_alpha + 1.0) / inp.alpha_min;
    let n_float = n1.max(n2).floor() + 1.0;
    if !(n_float.is_finite() && n_float <= u32::MAX as f64) {
        return Err(Error::Precondition(format!(
            "recipe needs {n_float:e} annuli, beyond the supported range"
        )));
    }
    let big_n = (n_float as u32).max(40);
    let params = ComparisonParams {
        s,
        omega0,
        big_c: c,
        big_m: m,
        big_n,
        r: inp.r,
        c_alpha: inp.c_alpha,
        alpha_min: inp.alpha_min,
        sup_u: inp.sup_u,
        c_u: inp.c_u,
        delta: inp.delta,
    };
    debug_assert!(params.is_admissible());
    Ok(params)
}

/// Summary of a randomized verification sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub checked: usize,
    pub failures: usize,
    /// configurations outside the regime where the bound is claimed
    pub outside_regime: usize,
    /// worst signed margin seen (positive = closest to violation)
    pub worst_margin: f64,
}

impl SweepSummary {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }
}

fn random_unit(rng: &mut impl rand::Rng, n: usize) -> UnitVector {
    loop {
        // Box–Muller pairs give an isotropic direction after normalizing
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        if let Ok(u) = UnitVector::normalize(&v) {
            return u;
        }
    }
}

fn random_in_ball(rng: &mut impl rand::Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        if linalg::dot(&v, &v) <= 1.0 {
            return linalg::scale(&v, r);
        }
    }
}

/// Random separation inside the smooth window (Nε/10, ω₁], kept 2ε clear
/// of both edges so displaced pairs stay strictly inside the smooth branch
/// of ω (its second derivative jumps at ω₁).
fn window_distance(lab: &ComparisonLab, rng: &mut impl rand::Rng) -> Result<f64> {
    let floor = lab.params.big_n as f64 * lab.epsilon / 10.0 + 2.0 * lab.epsilon;
    let cap = lab.omega.omega1 - 2.0 * lab.epsilon;
    if floor >= cap {
        return Err(Error::Precondition(format!(
            "smooth window empty: floor {floor} >= cap {cap}; shrink epsilon"
        )));
    }
    Ok(floor + rng.gen::<f64>() * (cap - floor))
}

fn window_pair(
    lab: &ComparisonLab,
    n: usize,
    rng: &mut impl rand::Rng,
) -> Result<(Vec<f64>, Vec<f64>, UnitVector, f64)> {
    let d = window_distance(lab, rng)?;
    let v = random_unit(rng, n);
    let mid = random_in_ball(rng, n, lab.params.r / 4.0);
    let x = linalg::axpy(&mid, d / 2.0, v.coords());
    let z = linalg::axpy(&mid, -d / 2.0, v.coords());
    Ok((x, z, v, d))
}

/// Randomized check of the second-order increment bound.
pub fn taylor_sweep(
    lab: &ComparisonLab,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SweepSummary> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let (x, z, _, _) = window_pair(lab, n, &mut rng)?;
        let hx = random_in_ball(&mut rng, n, lab.epsilon);
        let hz = random_in_ball(&mut rng, n, lab.epsilon);
        let c = lab.taylor_bound_check(&x, &z, &hx, &hz)?;
        worst = worst.max(c.lhs - c.rhs);
        if !c.ok {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        checked: samples,
        failures,
        outside_regime: 0,
        worst_margin: worst,
    })
}

/// Randomized check of the near-optimal-opponent case: moves near perfect
/// opposition, reversal response.
pub fn case1_sweep(
    lab: &ComparisonLab,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SweepSummary> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let (x, z, v, d) = window_pair(lab, n, &mut rng)?;
        let theta = d.powf(lab.params.s);
        let need = (4.0 - theta).sqrt();
        let a_max = (need / 2.0).acos();
        // tilt each move independently, keeping the projected opposition
        let (nu_x, nu_z) = loop {
            let a1 = rng.gen::<f64>() * a_max;
            let a2 = rng.gen::<f64>() * a_max;
            if a1.cos() + a2.cos() < need {
                continue;
            }
            let w1 = perp_component(&random_unit(&mut rng, n), &v);
            let w2 = perp_component(&random_unit(&mut rng, n), &v);
            let nx = linalg::axpy(&linalg::scale(v.coords(), a1.cos()), a1.sin(), &w1);
            let nz = linalg::axpy(&linalg::scale(v.coords(), -a2.cos()), a2.sin(), &w2);
            break (UnitVector::normalize(&nx)?, UnitVector::normalize(&nz)?);
        };
        let c = lab.case1_verify(&x, &z, &nu_x, &nu_z)?;
        worst = worst.max(c.lhs);
        if !c.ok {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        checked: samples,
        failures,
        outside_regime: 0,
        worst_margin: worst,
    })
}

fn perp_component(u: &UnitVector, v: &UnitVector) -> Vec<f64> {
    let proj = linalg::dot(u.coords(), v.coords());
    let w = linalg::axpy(u.coords(), -proj, v.coords());
    match UnitVector::normalize(&w) {
        Ok(unit) => unit.coords().to_vec(),
        // u parallel to v: any perpendicular works
        Err(_) => geom::frame_for(v, 1)
            .map(|f| f.second_column().to_vec())
            .unwrap_or_else(|_| v.coords().to_vec()),
    }
}

/// Randomized check of the off-optimal case with the pull-together
/// response. Configurations outside the claimed regime are tallied
/// separately.
pub fn case2_sweep(
    lab: &ComparisonLab,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SweepSummary> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut outside = 0;
    let mut worst = f64::NEG_INFINITY;
    let p = &lab.params;
    for _ in 0..samples {
        let d = window_distance(lab, &mut rng)?;
        let v = random_unit(&mut rng, n);
        // midpoints inside the claimed regime |x+z| ≤ (3/2)√(C_u/M)·d^{δ/2}
        let reach = 0.75 * (p.c_u / p.big_m).sqrt() * d.powf(p.delta / 2.0) * 0.9;
        let mid = random_in_ball(&mut rng, n, reach.min(p.r / 4.0));
        let x = linalg::axpy(&mid, d / 2.0, v.coords());
        let z = linalg::axpy(&mid, -d / 2.0, v.coords());
        let theta = d.powf(p.s);
        // opponent moves rejected into the off-optimal cone
        let (nu_x, nu_z) = loop {
            let a = random_unit(&mut rng, n);
            let b = random_unit(&mut rng, n);
            let diff = linalg::sub(a.coords(), b.coords());
            let pr = geom::project(&diff, &v)?;
            if pr.h_v * pr.h_v <= 4.0 - theta {
                break (a, b);
            }
        };
        let c = lab.case2_verify(&x, &z, &nu_x, &nu_z)?;
        if !c.in_regime {
            outside += 1;
        } else {
            worst = worst.max(c.direct - c.analytic_bound);
        }
        if !c.ok {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        checked: samples,
        failures,
        outside_regime: outside,
        worst_margin: worst,
    })
}

/// Annular chain over a list of annulus indices: for each index a
/// configuration family (random center offsets and orientations) is checked
/// against seeded opponent moves.
pub fn annular_sweep(
    lab: &ComparisonLab,
    n: usize,
    annuli: &[u32],
    opponents: usize,
    seed: u64,
) -> Result<SweepSummary> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let opp: Vec<(UnitVector, UnitVector)> = (0..opponents)
        .map(|_| (random_unit(&mut rng, n), random_unit(&mut rng, n)))
        .collect();
    let mut failures = 0;
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for &i in annuli {
        if i == 0 || i > lab.params.big_n {
            return Err(Error::Precondition(format!(
                "annulus index {i} outside 1..N"
            )));
        }
        let d = (i as f64 - 0.5) * lab.epsilon / 10.0;
        let v = random_unit(&mut rng, n);
        let mid = random_in_ball(&mut rng, n, lab.params.r / 4.0);
        let x = linalg::axpy(&mid, d / 2.0, v.coords());
        let z = linalg::axpy(&mid, -d / 2.0, v.coords());
        let rep = lab.annular_verify(&x, &z, &opp)?;
        checked += 1;
        worst = worst.max(rep.g1_worst_excess - 3.0 * lab.params.big_c * lab.epsilon);
        if !rep.ok() {
            failures += 1;
        }
    }
    Ok(SweepSummary {
        checked,
        failures,
        outside_regime: 0,
        worst_margin: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{FieldKind, PVal};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn bench_inputs() -> RecipeInputs {
        RecipeInputs {
            s: 0.5,
            c_alpha: 0.1,
            alpha_min: 0.9,
            r: 1.0,
            sup_u: 0.01,
            c_u: 0.05,
            delta: 1.0,
        }
    }

    fn bench_lab(epsilon: f64) -> ComparisonLab {
        let params = constants_recipe(&bench_inputs()).unwrap();
        ComparisonLab::new(
            params,
            ExponentField::constant(PVal::Finite(14.0)), // α = 12/16 = 0.75... high α
            Variant::Orthogonal,
            epsilon,
            geom::ball_quadrature(2, 32).unwrap(),
        )
    }

    #[test]
    fn omega_closed_form_example() {
        let p = ComparisonParams {
            s: 0.5,
            omega0: 0.5,
            big_c: 1.0,
            big_m: 0.0,
            big_n: 40,
            r: 0.1,
            c_alpha: 0.0,
            alpha_min: 1.0,
            sup_u: 0.0,
            c_u: 1.0,
            delta: 1.0,
        };
        let w = p.omega();
        assert!((w.omega1 - 4.0 / 9.0).abs() < 1e-15);
        let (v, d1, _) = w.eval(4.0 / 9.0).unwrap();
        assert!((v - 8.0 / 27.0).abs() < 1e-15);
        assert!((d1 - 0.5).abs() < 1e-15);
        let (v0, d10, _) = w.eval(0.0).unwrap();
        assert_eq!(v0, 0.0);
        assert_eq!(d10, 1.0);
        assert!(w.eval(-1.0).is_err());
    }

    #[test]
    fn omega_grid_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = rng.gen::<f64>() * 0.8 + 0.1;
            let omega0 = 0.5 + rng.gen::<f64>() * 5.0;
            let p = ComparisonParams {
                s,
                omega0,
                big_c: 1.0,
                big_m: 0.0,
                big_n: 40,
                r: 1.0,
                c_alpha: 0.0,
                alpha_min: 1.0,
                sup_u: 0.0,
                c_u: 1.0,
                delta: 1.0,
            };
            let w = p.omega();
            for k in 1..10_000 {
                let t = w.omega1 * k as f64 / 10_000.0;
                let (_, d1, d2) = w.eval(t).unwrap();
                assert!(d1 >= 0.5 - 1e-12 && d1 <= 1.0 + 1e-12, "d1 = {d1}");
                assert!(d2 < 0.0);
            }
            let (_, d1, _) = w.eval(w.omega1).unwrap();
            assert!((d1 - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn introcite_arithmetic_on_grid() {
        // 3·α_min·ω″(t) + (1 + c_α)·t^{s−1} ≤ −t^{s−1} whenever ω₀ clears
        // its concavity-vs-Hölder bound
        let inp = bench_inputs();
        let p = constants_recipe(&inp).unwrap();
        let w = p.omega();
        for k in 1..=1000 {
            let t = w.omega1 * k as f64 / 1000.0;
            let (_, _, d2) = w.eval(t).unwrap();
            let lhs = 3.0 * p.alpha_min * d2 + (1.0 + p.c_alpha) * t.powf(p.s - 1.0);
            assert!(lhs <= -t.powf(p.s - 1.0) + 1e-12, "t = {t}: {lhs}");
        }
    }

    #[test]
    fn annulus_indexing() {
        assert_eq!(annulus_index(0.0, 0.1, 40), Some(0));
        assert_eq!(annulus_index(0.005, 0.1, 40), Some(1));
        assert_eq!(annulus_index(0.01, 0.1, 40), Some(1)); // boundary: closed above
        assert_eq!(annulus_index(0.0101, 0.1, 40), Some(2));
        assert_eq!(annulus_index(0.4, 0.1, 40), Some(40));
        assert_eq!(annulus_index(0.41, 0.1, 40), None);
    }

    #[test]
    fn f2_ratio_between_annuli() {
        let lab = bench_lab(1e-3);
        let e = lab.epsilon;
        let c = lab.params.big_c;
        // centers of A_i and A_{i+1}
        let d1 = 4.5 * e / 10.0;
        let d2 = 5.5 * e / 10.0;
        let a = lab.f2(&[d1, 0.0], &[0.0, 0.0]);
        let b = lab.f2(&[d2, 0.0], &[0.0, 0.0]);
        if a.is_finite() && b.is_finite() && b > 0.0 {
            assert!((a / b - c * c).abs() < 1e-6 * c * c);
        }
        // diagonal carries the peak C^{2N}ε
        let peak = lab.f2(&[0.3, 0.3], &[0.3, 0.3]);
        let expected = c.powi(2 * lab.params.big_n as i32) * e;
        assert_eq!(peak, expected);
    }

    #[test]
    fn f_eval_diagonal_and_far() {
        let lab = bench_lab(1e-3);
        let x = [0.2, 0.1];
        let fv = lab.f_eval(&x, &x);
        let sum = [0.4, 0.2];
        assert!((fv.f1 - lab.params.big_m * linalg::dot(&sum, &sum)).abs() < 1e-12);
        assert_eq!(fv.f2, lab.f2(&x, &x));
        // beyond the annular zone the step part vanishes
        let z = [-0.2, 0.1];
        let fv = lab.f_eval(&x, &z);
        assert_eq!(fv.f2, 0.0);
        assert_eq!(fv.f, fv.f1);
    }

    #[test]
    fn f1_dominates_on_outer_shell() {
        // x, z in B_2r ∖ B_r with |x−z| ≤ r: |x+z|² ≥ 3r² so the M-term
        // alone reaches 2·sup_u
        let lab = bench_lab(1e-3);
        let p = &lab.params;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let rad = p.r * (1.0 + rng.gen::<f64>());
            let ang = rng.gen::<f64>() * std::f64::consts::TAU;
            let x = [rad * ang.cos(), rad * ang.sin()];
            // nearby second point, also in the shell
            let z = loop {
                let rad2 = p.r * (1.0 + rng.gen::<f64>());
                let ang2 = ang + (rng.gen::<f64>() - 0.5) * 0.3;
                let cand = [rad2 * ang2.cos(), rad2 * ang2.sin()];
                if linalg::dist(&x, &cand) <= p.r {
                    break cand;
                }
            };
            let sum = linalg::add(&x, &z);
            assert!(linalg::dot(&sum, &sum) >= 3.0 * p.r * p.r - 1e-9);
            assert!(lab.f1(&x, &z) >= 2.0 * p.sup_u - 1e-9);
        }
    }

    #[test]
    fn f_functional_constant_is_exact() {
        // also with a genuinely varying α so the third branch is active
        let params = constants_recipe(&RecipeInputs {
            c_alpha: 0.3,
            ..bench_inputs()
        })
        .unwrap();
        let field = ExponentField {
            kind: FieldKind::Affine {
                base: 6.0,
                slope: vec![1.0, 0.5],
            },
            s: 0.5,
            c_p: 2.0,
            p_min: 4.0,
        };
        let lab = ComparisonLab::new(
            params,
            field,
            Variant::Orthogonal,
            1e-3,
            geom::ball_quadrature(2, 16).unwrap(),
        );
        let nu_x = UnitVector::axis(2, 0);
        let nu_z = UnitVector::axis(2, 1);
        let v = lab
            .f_functional(|_, _| 1.0, &[0.3, 0.1], &[-0.2, 0.4], &nu_x, &nu_z)
            .unwrap();
        assert_eq!(v, 1.0);
        // swap side: α(x) < α(z)
        let v = lab
            .f_functional(|_, _| 1.0, &[-0.4, -0.1], &[0.3, 0.2], &nu_x, &nu_z)
            .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn f_functional_mirror_translation_invariance() {
        // ν_z = −ν_x: the common-noise displacements coincide, so for a
        // translation-invariant functional the noise term is exactly f(x,z)
        let lab = bench_lab(1e-3);
        let nu = UnitVector::normalize(&[0.6, 0.8]).unwrap();
        let x = [0.3, 0.0];
        let z = [-0.1, 0.2];
        let d = |a: &[f64], b: &[f64]| linalg::dist(a, b);
        let got = lab
            .f_functional(d, &x, &z, &nu, &nu.flipped())
            .unwrap();
        // α constant: F = α·f(x+εν, z−εν) + β·f(x,z)
        let a = lab.alpha(&x).unwrap();
        let eps = lab.epsilon;
        let det = d(
            &linalg::axpy(&x, eps, nu.coords()),
            &linalg::axpy(&z, -eps, nu.coords()),
        );
        let expected = a * det + (1.0 - a) * d(&x, &z);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn f_functional_quadratic_matches_moment_expansion() {
        // f(x,z) = |x−z|²: the common-noise average expands exactly through
        // the rule's second moments, computed here via the coupled matrices
        let lab = bench_lab(0.01);
        let nu_x = UnitVector::normalize(&[1.0, 0.4]).unwrap();
        let nu_z = UnitVector::normalize(&[-0.7, 0.7]).unwrap();
        let x = [0.25, 0.0];
        let z = [-0.25, 0.1];
        let f = |a: &[f64], b: &[f64]| {
            let d = linalg::sub(a, b);
            linalg::dot(&d, &d)
        };
        let got = lab.f_functional(f, &x, &z, &nu_x, &nu_z).unwrap();

        let eps = lab.epsilon;
        let a = lab.alpha(&x).unwrap();
        let cr = geom::coupled_rotation(&nu_x, &nu_z).unwrap();
        let xz = linalg::sub(&x, &z);
        let t_det = f(
            &linalg::axpy(&x, eps, nu_x.coords()),
            &linalg::axpy(&z, eps, nu_z.coords()),
        );
        // E|xz + εQζ|² = |xz|² + ε²·Σ (QᵀQ)_{jj} M2_{jj} with Q = P_x − P_z
        // and M2 the rule's exact second moments diag(0, 1/(n+1) I)
        let n = 2;
        let mut quad_term = 0.0;
        for j in 1..n {
            let mut qq = 0.0;
            for r in 0..n {
                let q = cr.p_x.matrix().entry(r, j) - cr.p_z.matrix().entry(r, j);
                qq += q * q;
            }
            quad_term += qq / (n as f64 + 1.0);
        }
        let t_common = linalg::dot(&xz, &xz) + eps * eps * quad_term;
        let expected = a * t_det + (1.0 - a) * t_common;
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn taylor_trivial_and_pull_together() {
        let lab = bench_lab(1e-5);
        let p = &lab.params;
        let d0 = (p.big_n as f64 * lab.epsilon / 10.0) * 3.0; // inside window
        assert!(d0 <= lab.omega.omega1);
        let x = [d0 / 2.0, 0.0];
        let z = [-d0 / 2.0, 0.0];
        let zero = [0.0, 0.0];
        let c = lab.taylor_bound_check(&x, &z, &zero, &zero).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.ok);
        let e = lab.epsilon;
        let hx = [-e, 0.0];
        let hz = [e, 0.0];
        let c = lab.taylor_bound_check(&x, &z, &hx, &hz).unwrap();
        assert!(c.lhs < 0.0);
        assert!(c.ok);
    }

    #[test]
    fn taylor_random_sampling() {
        let lab = bench_lab(1e-5);
        let p = lab.params.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let floor = p.big_n as f64 * lab.epsilon / 10.0;
        // keep displaced separations inside the smooth branch of ω
        let cap = lab.omega.omega1 - 2.0 * lab.epsilon;
        for _ in 0..2000 {
            let d = floor * 1.001 + rng.gen::<f64>() * (cap - floor * 1.001);
            let ang = rng.gen::<f64>() * std::f64::consts::TAU;
            let v = [ang.cos(), ang.sin()];
            let mid = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let x = linalg::axpy(&mid, d / 2.0, &v);
            let z = linalg::axpy(&mid, -d / 2.0, &v);
            let e = lab.epsilon;
            let h = |rng: &mut ChaCha8Rng| {
                let a = rng.gen::<f64>() * std::f64::consts::TAU;
                let r = rng.gen::<f64>() * e;
                [r * a.cos(), r * a.sin()]
            };
            let hx = h(&mut rng);
            let hz = h(&mut rng);
            let c = lab.taylor_bound_check(&x, &z, &hx, &hz).unwrap();
            assert!(c.ok, "lhs {} rhs {}", c.lhs, c.rhs);
        }
    }

    fn case1_pair(d: f64, theta_slack: f64) -> (UnitVector, UnitVector, [f64; 2], [f64; 2]) {
        let x = [d / 2.0, 0.0];
        let z = [-d / 2.0, 0.0];
        // (ν_x−ν_z)_V² = 4cos²(φ) with ν_x=(cosφ, sinφ), ν_z = −(cosφ,−sinφ)
        let phi = theta_slack;
        let nu_x = UnitVector::normalize(&[phi.cos(), phi.sin()]).unwrap();
        let nu_z = UnitVector::normalize(&[-phi.cos(), phi.sin()]).unwrap();
        (nu_x, nu_z, x, z)
    }

    #[test]
    fn case1_exact_opposition() {
        let lab = bench_lab(1e-5);
        let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
        let d = (floor * 2.0).min(lab.omega.omega1 * 0.9);
        let (nu_x, nu_z, x, z) = case1_pair(d, 0.0);
        let c = lab.case1_verify(&x, &z, &nu_x, &nu_z).unwrap();
        assert!(c.ok, "lhs = {}", c.lhs);
    }

    #[test]
    fn case1_symmetric_slice_sweep() {
        let lab = bench_lab(1e-5);
        let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let d = floor * 1.01 + rng.gen::<f64>() * (lab.omega.omega1 - floor * 1.01);
            let theta = d.powf(lab.params.s);
            // keep (ν_x−ν_z)_V² = 4cos²φ ≥ 4−Θ: φ ≤ asin(√(Θ)/2)
            let phi_max = (theta.sqrt() / 2.0).asin();
            let phi = rng.gen::<f64>() * phi_max;
            let (nu_x, nu_z, x, z) = case1_pair(d, phi);
            let c = lab.case1_verify(&x, &z, &nu_x, &nu_z).unwrap();
            assert!(c.ok, "d {d} phi {phi}: lhs {}", c.lhs);
        }
    }

    #[test]
    fn case1_rejects_off_case_input() {
        let lab = bench_lab(1e-5);
        let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
        let d = floor * 2.0;
        let x = [d / 2.0, 0.0];
        let z = [-d / 2.0, 0.0];
        let w = UnitVector::axis(2, 1);
        assert!(lab.case1_verify(&x, &z, &w, &w).is_err());
    }

    #[test]
    fn case2_perpendicular_moves() {
        let lab = bench_lab(1e-5);
        let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
        let d = (floor * 2.0).min(lab.omega.omega1 * 0.9);
        let x = [d / 2.0, 0.0];
        let z = [-d / 2.0, 0.0];
        let w = UnitVector::axis(2, 1);
        let c = lab.case2_verify(&x, &z, &w, &w).unwrap();
        assert!(c.in_regime, "symmetric slice has x+z = 0");
        assert!(c.analytic_bound < 0.0);
        assert!(c.direct < 0.0);
        assert!(c.ok, "direct {} bound {}", c.direct, c.analytic_bound);
    }

    #[test]
    fn case2_same_direction_pull() {
        let lab = bench_lab(1e-5);
        let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
        let d = (floor * 2.0).min(lab.omega.omega1 * 0.9);
        let x = [d / 2.0, 0.0];
        let z = [-d / 2.0, 0.0];
        let v = UnitVector::axis(2, 0);
        // ν_x = ν_z = v: projection zero, squarely in the off-optimal case
        let c = lab.case2_verify(&x, &z, &v, &v).unwrap();
        assert!(c.ok, "direct {} bound {}", c.direct, c.analytic_bound);
    }

    #[test]
    fn case2_exponent_sweep() {
        for s in [0.25, 0.5, 0.75] {
            let params = constants_recipe(&RecipeInputs {
                s,
                ..bench_inputs()
            })
            .unwrap();
            // pick a step radius small enough that the smooth window
            // (Nε/10, ω₁] is nonempty for this parameter set
            let eps = (params.omega1() * 10.0 / params.big_n as f64 * 0.5).min(1e-5);
            let lab = ComparisonLab::new(
                params,
                ExponentField::constant(PVal::Finite(14.0)),
                Variant::Orthogonal,
                eps,
                geom::ball_quadrature(2, 32).unwrap(),
            );
            let floor = lab.params.big_n as f64 * lab.epsilon / 10.0;
            let d = (floor * 2.0).min(lab.omega.omega1 * 0.9);
            let x = [d / 2.0, 0.0];
            let z = [-d / 2.0, 0.0];
            let w = UnitVector::axis(2, 1);
            let c = lab.case2_verify(&x, &z, &w, &w).unwrap();
            assert!(c.ok, "s = {s}: direct {} bound {}", c.direct, c.analytic_bound);
        }
    }

    fn opponent_samples(n: usize, count: usize, seed: u64) -> Vec<(UnitVector, UnitVector)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mk = |rng: &mut ChaCha8Rng| {
                    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                    UnitVector::normalize(&v).unwrap()
                };
                (mk(&mut rng), mk(&mut rng))
            })
            .collect()
    }

    #[test]
    fn annular_chain_on_sample_annuli() {
        let lab = bench_lab(1e-4);
        let opp = opponent_samples(2, 20, 31);
        let n_ann = lab.params.big_n;
        for i in [1u32, 2, 5, 40, n_ann / 2, n_ann] {
            let d = (i as f64 - 0.5) * lab.epsilon / 10.0;
            let x = [0.1 + d / 2.0, 0.05];
            let z = [0.1 - d / 2.0, 0.05];
            let rep = lab.annular_verify(&x, &z, &opp).unwrap();
            assert_eq!(rep.annulus, i);
            assert!(rep.ok(), "annulus {i}: {rep:?}");
        }
    }

    #[test]
    fn annular_rejects_far_pairs() {
        let lab = bench_lab(1e-4);
        let d = (lab.params.big_n as f64 + 5.0) * lab.epsilon / 10.0;
        let x = [d / 2.0, 0.0];
        let z = [-d / 2.0, 0.0];
        assert!(lab.annular_verify(&x, &z, &[]).is_err());
    }

    #[test]
    fn recipe_examples() {
        let p = constants_recipe(&RecipeInputs {
            s: 0.5,
            c_alpha: 1.0,
            alpha_min: 0.25,
            r: 1.0,
            sup_u: 1.0,
            c_u: 1.0,
            delta: 1.0,
        })
        .unwrap();
        assert!((p.big_m - 2.0 / 3.0).abs() < 1e-15);
        assert!(p.is_admissible(), "{:#?}", p.admissibility());

        // doubling sup_u doubles M and does not lower C
        let base = bench_inputs();
        let p1 = constants_recipe(&base).unwrap();
        let p2 = constants_recipe(&RecipeInputs {
            sup_u: base.sup_u * 2.0,
            ..base
        })
        .unwrap();
        assert!((p2.big_m - 2.0 * p1.big_m).abs() < 1e-15);
        assert!(p2.big_c >= p1.big_c);
    }

    #[test]
    fn sweeps_pass_on_small_samples() {
        let lab = bench_lab(1e-5);
        let t = taylor_sweep(&lab, 2, 300, 17).unwrap();
        assert!(t.ok(), "{t:?}");
        let c1 = case1_sweep(&lab, 2, 200, 18).unwrap();
        assert!(c1.ok(), "{c1:?}");
        assert!(c1.worst_margin < 0.0);
        let c2 = case2_sweep(&lab, 2, 200, 19).unwrap();
        assert!(c2.ok(), "{c2:?}");
        let lab4 = bench_lab(1e-4);
        let a = annular_sweep(&lab4, 2, &[1, 2, 3, 10, 100], 8, 20).unwrap();
        assert!(a.ok(), "{a:?}");
        assert!(annular_sweep(&lab4, 2, &[0], 8, 20).is_err());
    }

    #[test]
    fn recipe_bench_is_admissible() {
        let p = constants_recipe(&bench_inputs()).unwrap();
        for c in p.admissibility() {
            assert!(c.ok, "{}: {} vs {}", c.name, c.lhs, c.rhs);
        }
    }
}
