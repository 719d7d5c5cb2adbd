//! Exponent fields p(x), the probability coefficients they induce in the two
//! game variants, and empirical Hölder-modulus estimation for α.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A p-value in (1, ∞]. Serialized as a plain number or the string "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PVal {
    Finite(f64),
    Infinite,
}

impl PVal {
    pub fn as_f64(self) -> f64 {
        match self {
            PVal::Finite(p) => p,
            PVal::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for PVal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PVal::Finite(p) => s.serialize_f64(*p),
            PVal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PVal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(PVal::Finite(p)),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(PVal::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Which dynamic-programming principle / game the coefficients feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Noise uniform on an (n−1)-ball orthogonal to the pull direction;
    /// α = (p−1)/(n+p), defined for p > 1 (α = 1 at p = ∞).
    Orthogonal,
    /// Noise uniform on the full ε-ball; α = (p−2)/(n+p), needs p ≥ 2
    /// (α = 0 at p = 2 is the pure-averaging limit).
    Fullball,
}

impl Variant {
    /// Largest p at which the variant's α formula degenerates.
    pub fn p_floor(self) -> f64 {
        match self {
            Variant::Orthogonal => 1.0,
            Variant::Fullball => 2.0,
        }
    }
}

/// Closed-form exponent field shapes, registered by name in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Constant { p: PVal },
    Affine { base: f64, slope: Vec<f64> },
    /// base + coeff·t^exponent with t = |x_axis| (or |x| when axis is null).
    RadialHolder {
        base: f64,
        coeff: f64,
        exponent: f64,
        axis: Option<usize>,
    },
}

/// An exponent field together with its declared Hölder data
/// |p(x) − p(z)| ≤ c_p |x − z|^s and infimum p_min.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentField {
    #[serde(flatten)]
    pub kind: FieldKind,
    pub s: f64,
    pub c_p: f64,
    pub p_min: f64,
}

impl ExponentField {
    pub fn constant(p: PVal) -> Self {
        let p_min = p.as_f64();
        ExponentField {
            kind: FieldKind::Constant { p },
            s: 0.5,
            c_p: 0.0,
            p_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("holder exponent s = {} not in (0,1)", self.s)));
        }
        if self.c_p < 0.0 {
            return Err(Error::Config("holder constant c_p must be >= 0".into()));
        }
        if self.p_min <= 1.0 {
            return Err(Error::Config(format!("p_min = {} must exceed 1", self.p_min)));
        }
        match &self.kind {
            FieldKind::RadialHolder { exponent, .. } if *exponent <= 0.0 => {
                Err(Error::Config("radial exponent must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> PVal {
        match &self.kind {
            FieldKind::Constant { p } => *p,
            FieldKind::Affine { base, slope } => PVal::Finite(base + linalg::dot(slope, x)),
            FieldKind::RadialHolder {
                base,
                coeff,
                exponent,
                axis,
            } => {
                let t = match axis {
                    Some(i) => x[*i].abs(),
                    None => linalg::norm(x),
                };
                PVal::Finite(base + coeff * t.powf(*exponent))
            }
        }
    }
}

/// Probabilities of the deterministic move (α) and the noise move (β).
/// β is always computed as 1 − α, so α + β = 1 exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub alpha: f64,
    pub beta: f64,
}

fn pair_from_alpha(alpha: f64) -> CoefficientPair {
    CoefficientPair {
        alpha,
        beta: 1.0 - alpha,
    }
}

fn alpha_from_p(p: PVal, n: usize, variant: Variant) -> Result<f64> {
    let floor = variant.p_floor();
    match p {
        PVal::Infinite => Ok(match variant {
            Variant::Orthogonal => 1.0,
            Variant::Fullball => 1.0,
        }),
        PVal::Finite(p) => {
            let lower_ok = match variant {
                Variant::Orthogonal => p > floor,
                // p = 2 is admitted as the pure-averaging limit α = 0.
                Variant::Fullball => p >= floor,
            };
            if !lower_ok {
                return Err(Error::ExponentOutOfRange { p, min: floor });
            }
            Ok((p - floor) / (n as f64 + p))
        }
    }
}

/// α = (p(x)−1)/(n+p(x)), β = (n+1)/(n+p(x)); α = 1 at p = ∞.
pub fn coeffs_orthogonal_variant(
    field: &ExponentField,
    x: &[f64],
    n: usize,
) -> Result<CoefficientPair> {
    Ok(pair_from_alpha(alpha_from_p(
        field.eval(x),
        n,
        Variant::Orthogonal,
    )?))
}

/// α = (p(x)−2)/(n+p(x)), β = (n+2)/(n+p(x)); errors for p(x) < 2.
pub fn coeffs_fullball_variant(
    field: &ExponentField,
    x: &[f64],
    n: usize,
) -> Result<CoefficientPair> {
    Ok(pair_from_alpha(alpha_from_p(
        field.eval(x),
        n,
        Variant::Fullball,
    )?))
}

pub fn coeffs(
    field: &ExponentField,
    x: &[f64],
    n: usize,
    variant: Variant,
) -> Result<CoefficientPair> {
    match variant {
        Variant::Orthogonal => coeffs_orthogonal_variant(field, x, n),
        Variant::Fullball => coeffs_fullball_variant(field, x, n),
    }
}

/// Lower bound on α over the field's domain, from the declared p_min.
pub fn alpha_min(field: &ExponentField, n: usize, variant: Variant) -> Result<f64> {
    if field.p_min.is_infinite() {
        return Ok(1.0);
    }
    alpha_from_p(PVal::Finite(field.p_min), n, variant)
}

/// Hölder constant of α inherited from the field: α is a smooth function of
/// p with derivative (n+floor′)/(n+p)², maximal at p = p_min, so
/// |α(x)−α(z)| ≤ C_α |x−z|^s with C_α = slope_bound · c_p.
pub fn alpha_holder_constant(field: &ExponentField, n: usize, variant: Variant) -> f64 {
    if field.p_min.is_infinite() {
        return 0.0;
    }
    let nf = n as f64;
    let numer = match variant {
        Variant::Orthogonal => nf + 1.0,
        Variant::Fullball => nf + 2.0,
    };
    numer / (nf + field.p_min) * (1.0 / (nf + field.p_min)) * field.c_p
}

/// Least-squares fit of log|α(x)−α(z)| against log|x−z| over sampled pairs,
/// plus the maximal ratio constant at the fitted exponent. Diagnostic only.
pub fn estimate_holder(
    field: &ExponentField,
    n: usize,
    variant: Variant,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<(f64, f64)> {
    if samples.len() < 10 {
        return Err(Error::Precondition(format!(
            "need at least 10 sample pairs, got {}",
            samples.len()
        )));
    }
    let mut logs = Vec::new();
    for (x, z) in samples {
        let ax = coeffs(field, x, n, variant)?.alpha;
        let az = coeffs(field, z, n, variant)?.alpha;
        let da = (ax - az).abs();
        let d = linalg::dist(x, z);
        if da > 0.0 && d > 0.0 {
            logs.push((d.ln(), da.ln()));
        }
    }
    if logs.is_empty() {
        return Ok((field.s, 0.0));
    }
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::Precondition(
            "all sample pairs share one separation distance; exponent fit is degenerate".into(),
        ));
    }
    let s_fit = sxy / sxx;
    let c_fit = logs
        .iter()
        .map(|&(lx, ly)| (ly - s_fit * lx).exp())
        .fold(0.0_f64, f64::max);
    Ok((s_fit, c_fit))
}
