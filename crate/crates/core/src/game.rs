//! Monte Carlo play of the single-token game and the coupled two-token game,
//! with the strategies used by the regularity argument, seeded reproducible
//! traces, and value estimation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{coeffs, ExponentField, Variant};
use crate::dpp::{BoundaryDatum, Domain};
use crate::error::{Error, Result};
use crate::geom::{self, UnitVector};
use crate::linalg;

/// Standard normal via Box–Muller.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_sphere(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let r = linalg::norm(&v);
        if r > 1e-12 {
            return linalg::scale(&v, 1.0 / r);
        }
    }
}

/// Uniform draw from {ζ ∈ R^n : ζ₁ = 0, |ζ| ≤ 1}: sphere direction times the
/// radius-power inverse transform U^{1/(n−1)}.
pub fn sample_orthogonal_ball(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let d = n - 1;
    let dir = random_sphere(rng, d);
    let r = rng.gen::<f64>().powf(1.0 / d as f64);
    let mut z = Vec::with_capacity(n);
    z.push(0.0);
    z.extend(linalg::scale(&dir, r));
    z
}

/// Uniform draw from the full unit n-ball.
pub fn sample_full_ball(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let dir = random_sphere(rng, n);
    let r = rng.gen::<f64>().powf(1.0 / n as f64);
    linalg::scale(&dir, r)
}

/// Payoff rule: evaluate g at the exit point (single game) or pay a flat
/// amount on exit and zero on the diagonal (doubled game).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "payoff", rename_all = "snake_case")]
pub enum Payoff {
    Single { g: BoundaryDatum },
    Doubled { exit_payoff: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameConfig {
    pub variant: Variant,
    pub domain: Domain,
    pub field: ExponentField,
    #[serde(flatten)]
    pub payoff: Payoff,
    /// diagonal-hit threshold for the doubled game; default ε/10
    #[serde(default)]
    pub stop_distance: Option<f64>,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_turns() -> usize {
    1_000_000
}

impl GameConfig {
    pub fn stop_distance(&self) -> f64 {
        self.stop_distance.unwrap_or(self.domain.epsilon / 10.0)
    }
}

/// Move rules for the coupled game. Each returns a pull-direction pair
/// (ν_x, ν_z); unit length is enforced by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// straight toward each other: ν_x = −v, ν_z = v with v = (x−z)/|x−z|
    PullTogether,
    /// pull-together rotated by a fixed angle toward a random transversal
    SlightTurn { theta: f64 },
    /// responds to the announced opponent pair by the threshold rule
    ThresholdAngle { s: f64 },
    FixedDirection { dir: UnitVector },
}

impl Strategy {
    /// Announced move pair, before seeing the opponent.
    pub fn move_pair(
        &self,
        x: &[f64],
        z: &[f64],
        rng: &mut impl Rng,
    ) -> Result<(UnitVector, UnitVector)> {
        let n = x.len();
        let v = separation_direction(x, z)?;
        match self {
            Strategy::PullTogether => Ok((v.flipped(), v)),
            Strategy::SlightTurn { theta } => {
                let u = random_perpendicular(rng, &v);
                let nx = geom::rotate_in_plane(&v.flipped(), &u, *theta)?;
                let nz = geom::rotate_in_plane(&v, &u, *theta)?;
                Ok((nx, nz))
            }
            Strategy::ThresholdAngle { s } => {
                // without an announcement, respond to the worst case
                threshold_response(x, z, (&v, &v.flipped()), *s)
            }
            Strategy::FixedDirection { dir } => {
                if dir.dim() != n {
                    return Err(Error::DimensionMismatch(dir.dim(), n));
                }
                Ok((dir.clone(), dir.clone()))
            }
        }
    }

    /// Response after the opponent announced its pair.
    pub fn respond(
        &self,
        x: &[f64],
        z: &[f64],
        announced: (&UnitVector, &UnitVector),
        rng: &mut impl Rng,
    ) -> Result<(UnitVector, UnitVector)> {
        match self {
            Strategy::ThresholdAngle { s } => threshold_response(x, z, announced, *s),
            _ => self.move_pair(x, z, rng),
        }
    }
}

fn separation_direction(x: &[f64], z: &[f64]) -> Result<UnitVector> {
    let d = linalg::sub(x, z);
    if linalg::norm(&d) == 0.0 {
        return Err(Error::Precondition("tokens coincide; v undefined".into()));
    }
    UnitVector::normalize(&d)
}

fn random_perpendicular(rng: &mut impl Rng, v: &UnitVector) -> UnitVector {
    loop {
        let w = random_sphere(rng, v.dim());
        let c = linalg::dot(&w, v.coords());
        let perp = linalg::axpy(&w, -c, v.coords());
        if linalg::norm(&perp) > 1e-6 {
            return UnitVector::normalize(&perp).expect("nonzero perpendicular");
        }
    }
}

/// The proof's responder rule: against an announced (ν_x, ν_z), reverse both
/// when (ν_x−ν_z)_V² ≥ 4 − Θ with Θ = |x−z|^s (the opponent pulls nearly
/// optimally), otherwise pull straight together (−v, v). Ties go to the
/// reversal branch.
pub fn threshold_response(
    x: &[f64],
    z: &[f64],
    opp_move: (&UnitVector, &UnitVector),
    s: f64,
) -> Result<(UnitVector, UnitVector)> {
    let v = separation_direction(x, z)?;
    let d = linalg::dist(x, z);
    let theta = d.powf(s);
    let diff = linalg::sub(opp_move.0.coords(), opp_move.1.coords());
    let p = geom::project(&diff, &v)?;
    if p.h_v * p.h_v >= 4.0 - theta {
        Ok((opp_move.0.flipped(), opp_move.1.flipped()))
    } else {
        Ok((v.flipped(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    DetDet,
    CommonNoise,
    DetNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    Diagonal,
    Exit,
    Cap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRecord {
    pub x: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub coin_our: bool,
    pub nu_x: Vec<f64>,
    pub nu_z: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameTrace {
    pub turns: Vec<TurnRecord>,
    pub cause: StopCause,
    pub payoff: f64,
    pub final_x: Vec<f64>,
    pub final_z: Option<Vec<f64>>,
}

impl GameTrace {
    /// JSON-lines export: one turn per line, then a closing summary line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.turns {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        let summary = serde_json::json!({
            "cause": self.cause,
            "payoff": self.payoff,
            "final_x": self.final_x,
            "final_z": self.final_z,
            "turns": self.turns.len(),
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        Ok(out)
    }
}

/// One single-token turn: a fair coin picks the winner, whose pull is taken
/// with probability α(x); otherwise the position is perturbed by noise
/// (orthogonal ball mapped by a frame, or the full ε-ball in the fullball
/// variant).
pub fn step_single(
    config: &GameConfig,
    x: &[f64],
    nu_i: &UnitVector,
    nu_ii: &UnitVector,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, TurnRecord)> {
    let n = x.len();
    let eps = config.domain.epsilon;
    let pair = coeffs(&config.field, x, n, config.variant)?;
    let coin_our = rng.gen_bool(0.5);
    let nu = if coin_our { nu_i } else { nu_ii };
    let det = rng.gen::<f64>() < pair.alpha;
    let (next, zeta) = if det {
        (linalg::axpy(x, eps, nu.coords()), None)
    } else {
        match config.variant {
            Variant::Orthogonal => {
                let z = sample_orthogonal_ball(rng, n);
                let frame = geom::frame_for(nu, 1)?;
                (linalg::axpy(x, eps, &frame.apply(&z)), Some(z))
            }
            Variant::Fullball => {
                let z = sample_full_ball(rng, n);
                (linalg::axpy(x, eps, &z), Some(z))
            }
        }
    };
    let record = TurnRecord {
        x: x.to_vec(),
        z: None,
        coin_our,
        nu_x: nu.coords().to_vec(),
        nu_z: None,
        zeta,
        branch: None,
    };
    Ok((next, record))
}

/// One coupled turn. The mover announces (ν_x, ν_z); then with probability
/// min(α): both move deterministically; with probability max(β): a common ζ
/// drives both tokens through the coupled rotations; with the remaining
/// probability α(x)−α(z): the higher-α token moves deterministically and the
/// other by noise.
pub fn step_coupled(
    config: &GameConfig,
    x: &[f64],
    z: &[f64],
    our: &Strategy,
    opp: &Strategy,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>, TurnRecord)> {
    let n = x.len();
    let eps = config.domain.epsilon;
    let coin_our = rng.gen_bool(0.5);
    let (nu_x, nu_z) = if coin_our {
        let announced = opp.move_pair(x, z, rng)?;
        our.respond(x, z, (&announced.0, &announced.1), rng)?
    } else {
        opp.move_pair(x, z, rng)?
    };
    let a_x = coeffs(&config.field, x, n, config.variant)?.alpha;
    let a_z = coeffs(&config.field, z, n, config.variant)?.alpha;
    // label bookkeeping so the three-branch split always sees α(x) ≥ α(z)
    let x_high = a_x >= a_z;
    let (a_hi, a_lo) = if x_high { (a_x, a_z) } else { (a_z, a_x) };
    let b_hi = 1.0 - a_hi;

    let u: f64 = rng.gen();
    let (xn, zn, zeta, branch) = if u < a_lo {
        (
            linalg::axpy(x, eps, nu_x.coords()),
            linalg::axpy(z, eps, nu_z.coords()),
            None,
            Branch::DetDet,
        )
    } else if u < a_lo + b_hi {
        match config.variant {
            Variant::Orthogonal => {
                let cr = geom::coupled_rotation(&nu_x, &nu_z)?;
                let zeta = sample_orthogonal_ball(rng, n);
                (
                    linalg::axpy(x, eps, &cr.p_x.apply(&zeta)),
                    linalg::axpy(z, eps, &cr.p_z.apply(&zeta)),
                    Some(zeta),
                    Branch::CommonNoise,
                )
            }
            Variant::Fullball => {
                let zeta = sample_full_ball(rng, n);
                (
                    linalg::axpy(x, eps, &zeta),
                    linalg::axpy(z, eps, &zeta),
                    Some(zeta),
                    Branch::CommonNoise,
                )
            }
        }
    } else {
        // det move for the higher-α token, noise for the other
        let (det_pos, det_nu, noise_pos) = if x_high {
            (x, &nu_x, z)
        } else {
            (z, &nu_z, x)
        };
        let det_next = linalg::axpy(det_pos, eps, det_nu.coords());
        let (noise_next, zeta) = match config.variant {
            Variant::Orthogonal => {
                let cr = geom::coupled_rotation(&nu_x, &nu_z)?;
                let frame = if x_high { &cr.p_z } else { &cr.p_x };
                let zeta = sample_orthogonal_ball(rng, n);
                (
                    linalg::axpy(noise_pos, eps, &frame.apply(&zeta)),
                    zeta,
                )
            }
            Variant::Fullball => {
                let zeta = sample_full_ball(rng, n);
                (linalg::axpy(noise_pos, eps, &zeta), zeta)
            }
        };
        if x_high {
            (det_next, noise_next, Some(zeta), Branch::DetNoise)
        } else {
            (noise_next, det_next, Some(zeta), Branch::DetNoise)
        }
    };
    let record = TurnRecord {
        x: x.to_vec(),
        z: Some(z.to_vec()),
        coin_our,
        nu_x: nu_x.coords().to_vec(),
        nu_z: Some(nu_z.coords().to_vec()),
        zeta,
        branch: Some(branch),
    };
    Ok((xn, zn, record))
}

/// Where an episode starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum Start {
    Single { x: Vec<f64> },
    Doubled { x: Vec<f64>, z: Vec<f64> },
}

/// Payoff sentinel for capped episodes; excluded from value averages.
pub const CAP_SENTINEL: f64 = f64::NAN;

pub fn play_episode(
    config: &GameConfig,
    start: &Start,
    our: &Strategy,
    opp: &Strategy,
    rng: &mut impl Rng,
    record_turns: bool,
) -> Result<GameTrace> {
    match start {
        Start::Single { x } => play_single(config, x, our, opp, rng, record_turns),
        Start::Doubled { x, z } => play_doubled(config, x, z, our, opp, rng, record_turns),
    }
}

fn single_g(config: &GameConfig) -> Result<&BoundaryDatum> {
    match &config.payoff {
        Payoff::Single { g } => Ok(g),
        Payoff::Doubled { .. } => Err(Error::Config(
            "single-token game requires a single-game payoff".into(),
        )),
    }
}

fn play_single(
    config: &GameConfig,
    start: &[f64],
    our: &Strategy,
    opp: &Strategy,
    rng: &mut impl Rng,
    record_turns: bool,
) -> Result<GameTrace> {
    let g = single_g(config)?;
    let mut x = start.to_vec();
    let mut turns = Vec::new();
    for _ in 0..config.max_turns {
        if !config.domain.contains(&x) {
            return Ok(GameTrace {
                turns,
                cause: StopCause::Exit,
                payoff: g.eval(&x),
                final_x: x,
                final_z: None,
            });
        }
        // in the single game both strategies just need a pull direction; use
        // their ν_x component against a mirror token at the domain center
        let center = &config.domain.center;
        let (nu_i, nu_ii) = single_pulls(&x, center, our, opp, rng)?;
        let (next, rec) = step_single(config, &x, &nu_i, &nu_ii, rng)?;
        if record_turns {
            turns.push(rec);
        }
        x = next;
    }
    Ok(GameTrace {
        turns,
        cause: StopCause::Cap,
        payoff: CAP_SENTINEL,
        final_x: x,
        final_z: None,
    })
}

fn single_pulls(
    x: &[f64],
    center: &[f64],
    our: &Strategy,
    opp: &Strategy,
    rng: &mut impl Rng,
) -> Result<(UnitVector, UnitVector)> {
    let _ = rng;
    let pick = |s: &Strategy| -> Result<UnitVector> {
        Ok(match s {
            Strategy::FixedDirection { dir } => dir.clone(),
            _ => {
                let d = linalg::sub(center, x);
                if linalg::norm(&d) > 1e-12 {
                    UnitVector::normalize(&d)?
                } else {
                    UnitVector::axis(x.len(), 0)
                }
            }
        })
    };
    let a = pick(our)?;
    let b = pick(opp)?;
    Ok((a, b.flipped()))
}

fn play_doubled(
    config: &GameConfig,
    sx: &[f64],
    sz: &[f64],
    our: &Strategy,
    opp: &Strategy,
    rng: &mut impl Rng,
    record_turns: bool,
) -> Result<GameTrace> {
    let exit_payoff = match &config.payoff {
        Payoff::Doubled { exit_payoff } => *exit_payoff,
        Payoff::Single { .. } => {
            return Err(Error::Config(
                "doubled game requires a doubled payoff".into(),
            ))
        }
    };
    let stop = config.stop_distance();
    let mut x = sx.to_vec();
    let mut z = sz.to_vec();
    let mut turns = Vec::new();
    for _ in 0..config.max_turns {
        if linalg::dist(&x, &z) <= stop {
            return Ok(GameTrace {
                turns,
                cause: StopCause::Diagonal,
                payoff: 0.0,
                final_x: x,
                final_z: Some(z),
            });
        }
        if !config.domain.contains(&x) || !config.domain.contains(&z) {
            return Ok(GameTrace {
                turns,
                cause: StopCause::Exit,
                payoff: exit_payoff,
                final_x: x,
                final_z: Some(z),
            });
        }
        let (xn, zn, rec) = step_coupled(config, &x, &z, our, opp, rng)?;
        if record_turns {
            turns.push(rec);
        }
        x = xn;
        z = zn;
    }
    Ok(GameTrace {
        turns,
        cause: StopCause::Cap,
        payoff: CAP_SENTINEL,
        final_x: x,
        final_z: Some(z),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
    pub cap_fraction: f64,
    /// true when cap_fraction exceeds 10%
    pub unreliable: bool,
}

/// Sample mean and standard error of episode payoffs over independent
/// seeded streams; capped episodes are excluded from the mean but counted.
pub fn estimate_value(
    config: &GameConfig,
    start: &Start,
    our: &Strategy,
    opp: &Strategy,
    episodes: usize,
) -> Result<ValueEstimate> {
    if episodes < 100 {
        return Err(Error::Precondition(format!(
            "need at least 100 episodes, got {episodes}"
        )));
    }
    let payoffs: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(k as u64).wrapping_mul(0x9e3779b97f4a7c15));
            play_episode(config, start, our, opp, &mut rng, false).map(|t| t.payoff)
        })
        .collect::<Result<Vec<f64>>>()?;
    let caps = payoffs.iter().filter(|p| p.is_nan()).count();
    let kept: Vec<f64> = payoffs.into_iter().filter(|p| !p.is_nan()).collect();
    if kept.is_empty() {
        return Err(Error::Precondition(
            "every episode hit the turn cap; no payoff data".into(),
        ));
    }
    let m = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / m;
    let var = kept.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let cap_fraction = caps as f64 / episodes as f64;
    Ok(ValueEstimate {
        mean,
        std_error: (var / m).sqrt(),
        episodes,
        cap_fraction,
        unreliable: cap_fraction > 0.10,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlightTurnReport {
    pub loss_along_v: f64,
    pub gain_perpendicular: f64,
    pub predicted_loss: f64,
    pub predicted_gain: f64,
    pub steps: usize,
}

/// Measures the per-step cost of turning a pull by θ: the component lost
/// along the target direction v versus the transversal displacement gained,
/// averaged over random targets.
pub fn measure_slight_turn(
    epsilon: f64,
    theta: f64,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<SlightTurnReport> {
    if n < 2 {
        return Err(Error::DimensionTooSmall { min: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss_sum = 0.0;
    let mut gain_sum = 0.0;
    for _ in 0..steps {
        let v = UnitVector::normalize(&random_sphere(&mut rng, n))?;
        let u = random_perpendicular(&mut rng, &v);
        let w = geom::rotate_in_plane(&v, &u, theta)?;
        let disp = linalg::scale(w.coords(), epsilon);
        let along = linalg::dot(&disp, v.coords());
        let p = geom::project(&disp, &v)?;
        loss_sum += epsilon - along;
        gain_sum += p.h_vperp;
    }
    Ok(SlightTurnReport {
        loss_along_v: loss_sum / steps as f64,
        gain_perpendicular: gain_sum / steps as f64,
        predicted_loss: epsilon * (1.0 - theta.cos()),
        predicted_gain: epsilon * theta.sin(),
        steps,
    })
}

/// Empirical branch frequencies of step_coupled at a fixed configuration,
/// against the exact probabilities (min α, max β, |α(x)−α(z)|).
pub fn branch_frequencies(
    config: &GameConfig,
    x: &[f64],
    z: &[f64],
    our: &Strategy,
    opp: &Strategy,
    steps: usize,
    seed: u64,
) -> Result<([f64; 3], [f64; 3])> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 3];
    for _ in 0..steps {
        let (_, _, rec) = step_coupled(config, x, z, our, opp, &mut rng)?;
        match rec.branch.unwrap() {
            Branch::DetDet => counts[0] += 1,
            Branch::CommonNoise => counts[1] += 1,
            Branch::DetNoise => counts[2] += 1,
        }
    }
    let a_x = coeffs(&config.field, x, n, config.variant)?.alpha;
    let a_z = coeffs(&config.field, z, n, config.variant)?.alpha;
    let a_lo = a_x.min(a_z);
    let a_hi = a_x.max(a_z);
    let expected = [a_lo, 1.0 - a_hi, a_hi - a_lo];
    let freq = counts.map(|c| c as f64 / steps as f64);
    Ok((freq, expected))
}
