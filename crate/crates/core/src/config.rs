//! Batch front-end plumbing: JSON run configurations (schema-checked with
//! unknown keys rejected), subcommand dispatch, and artifact emission.
//!
//! Every run echoes its configuration with a content hash; artifacts embed
//! that hash. The wall-clock timestamp appears only in the echo header so
//! repeated runs with the same config and seed produce byte-identical
//! artifacts everywhere else.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeff::{ExponentField, FieldKind, PVal, Variant};
use crate::comparison::{
    annular_sweep, case1_sweep, case2_sweep, constants_recipe, taylor_sweep,
    ComparisonLab, RecipeInputs, SweepSummary,
};
use crate::dpp::{
    solve_fixed_point, BoundaryDatum, Domain, DomainKind, GridField, Region,
    SolveSpec,
};
use crate::error::{Error, Result};
use crate::game::{
    estimate_value, play_episode, GameConfig, Payoff, Start, Strategy,
};
use crate::geom;
use crate::regularity::{gap_k, lipschitz_modulus, scale_sweep, SweepProblem};

pub const SCHEMA_VERSION: u32 = 1;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

// ---------------------------------------------------------------------
// configuration schema
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub subcommand: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub datum: Option<DatumSpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// "box" or "ball"
    pub shape: String,
    #[serde(default)]
    pub size: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    pub center: Vec<f64>,
    pub epsilon: f64,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        let kind = match self.shape.as_str() {
            "box" => DomainKind::Box {
                size: self
                    .size
                    .clone()
                    .ok_or_else(|| cfg_err("box domain needs a size"))?,
            },
            "ball" => DomainKind::Ball {
                radius: self
                    .radius
                    .ok_or_else(|| cfg_err("ball domain needs a radius"))?,
            },
            other => return Err(cfg_err(format!("unknown domain shape {other:?}"))),
        };
        let d = Domain {
            kind,
            center: self.center.clone(),
            epsilon: self.epsilon,
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// "constant", "affine" or "radial_holder"
    pub kind: String,
    #[serde(default)]
    pub p: Option<PVal>,
    #[serde(default)]
    pub base: Option<f64>,
    #[serde(default)]
    pub slope: Option<Vec<f64>>,
    #[serde(default)]
    pub coeff: Option<f64>,
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub c_p: Option<f64>,
    #[serde(default)]
    pub p_min: Option<f64>,
}

impl FieldSpec {
    pub fn build(&self) -> Result<ExponentField> {
        let mut field = match self.kind.as_str() {
            "constant" => ExponentField::constant(
                self.p.ok_or_else(|| cfg_err("constant field needs p"))?,
            ),
            "affine" => {
                let base = self.base.ok_or_else(|| cfg_err("affine field needs base"))?;
                let slope = self
                    .slope
                    .clone()
                    .ok_or_else(|| cfg_err("affine field needs slope"))?;
                ExponentField {
                    kind: FieldKind::Affine { base, slope },
                    s: self.s.ok_or_else(|| cfg_err("affine field needs s"))?,
                    c_p: self.c_p.ok_or_else(|| cfg_err("affine field needs c_p"))?,
                    p_min: self
                        .p_min
                        .ok_or_else(|| cfg_err("affine field needs p_min"))?,
                }
            }
            "radial_holder" => {
                let base = self
                    .base
                    .ok_or_else(|| cfg_err("radial field needs base"))?;
                let coeff = self
                    .coeff
                    .ok_or_else(|| cfg_err("radial field needs coeff"))?;
                let exponent = self
                    .exponent
                    .ok_or_else(|| cfg_err("radial field needs exponent"))?;
                ExponentField {
                    kind: FieldKind::RadialHolder {
                        base,
                        coeff,
                        exponent,
                        axis: self.axis,
                    },
                    s: self.s.unwrap_or(exponent.min(0.99)),
                    c_p: self.c_p.unwrap_or(coeff),
                    p_min: self.p_min.unwrap_or(base),
                }
            }
            other => return Err(cfg_err(format!("unknown field kind {other:?}"))),
        };
        if let Some(s) = self.s {
            field.s = s;
        }
        if let Some(c_p) = self.c_p {
            field.c_p = c_p;
        }
        if let Some(p_min) = self.p_min {
            field.p_min = p_min;
        }
        field.validate()?;
        Ok(field)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumSpec {
    /// "constant", "affine" or "quadratic_harmonic"
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub base: Option<f64>,
    #[serde(default)]
    pub slope: Option<Vec<f64>>,
}

impl DatumSpec {
    pub fn build(&self) -> Result<BoundaryDatum> {
        match self.kind.as_str() {
            "constant" => Ok(BoundaryDatum::Constant {
                value: self
                    .value
                    .ok_or_else(|| cfg_err("constant datum needs value"))?,
            }),
            "affine" => Ok(BoundaryDatum::Affine {
                base: self.base.ok_or_else(|| cfg_err("affine datum needs base"))?,
                slope: self
                    .slope
                    .clone()
                    .ok_or_else(|| cfg_err("affine datum needs slope"))?,
            }),
            "quadratic_harmonic" => Ok(BoundaryDatum::QuadraticHarmonic),
            other => Err(cfg_err(format!("unknown datum kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub h: f64,
    #[serde(default)]
    pub dir_count: Option<usize>,
    #[serde(default)]
    pub quad_count: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    /// "pull_together", "slight_turn", "threshold_angle" or "fixed_direction"
    pub rule: String,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub dir: Option<Vec<f64>>,
}

impl StrategySpec {
    pub fn build(&self) -> Result<Strategy> {
        match self.rule.as_str() {
            "pull_together" => Ok(Strategy::PullTogether),
            "slight_turn" => Ok(Strategy::SlightTurn {
                theta: self
                    .theta
                    .ok_or_else(|| cfg_err("slight_turn needs theta"))?,
            }),
            "threshold_angle" => Ok(Strategy::ThresholdAngle {
                s: self.s.ok_or_else(|| cfg_err("threshold_angle needs s"))?,
            }),
            "fixed_direction" => Ok(Strategy::FixedDirection {
                dir: geom::UnitVector::normalize(
                    self.dir
                        .as_deref()
                        .ok_or_else(|| cfg_err("fixed_direction needs dir"))?,
                )?,
            }),
            other => Err(cfg_err(format!("unknown strategy {other:?}"))),
        }
    }
}

fn default_strategy() -> StrategySpec {
    StrategySpec {
        rule: "pull_together".into(),
        theta: None,
        s: None,
        dir: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub episodes: usize,
    pub x: Vec<f64>,
    /// second start token: present = doubled game
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    /// required for the doubled game
    #[serde(default)]
    pub exit_payoff: Option<f64>,
    #[serde(default = "default_strategy")]
    pub our: StrategySpec,
    #[serde(default = "default_strategy")]
    pub opp: StrategySpec,
    #[serde(default)]
    pub max_turns: Option<usize>,
    #[serde(default)]
    pub stop_distance: Option<f64>,
    /// also record one full episode as JSON lines
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeSpec {
    pub s: f64,
    pub c_alpha: f64,
    pub alpha_min: f64,
    pub r: f64,
    pub sup_u: f64,
    pub c_u: f64,
    pub delta: f64,
}

impl RecipeSpec {
    pub fn inputs(&self) -> RecipeInputs {
        RecipeInputs {
            s: self.s,
            c_alpha: self.c_alpha,
            alpha_min: self.alpha_min,
            r: self.r,
            sup_u: self.sup_u,
            c_u: self.c_u,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// subset of "taylor", "case1", "case2", "annular"
    pub checks: Vec<String>,
    pub recipe: RecipeSpec,
    pub epsilon: f64,
    pub n: usize,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub annuli: Option<Vec<u32>>,
    #[serde(default)]
    pub opponents: Option<usize>,
    #[serde(default)]
    pub quad_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    pub recipe: RecipeSpec,
    #[serde(default)]
    pub max_pairs: Option<usize>,
    #[serde(default)]
    pub quad_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub center: Vec<f64>,
    pub r: f64,
    pub pairs: usize,
    #[serde(default)]
    pub gap: Option<GapSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eps_list: Vec<f64>,
    pub center: Vec<f64>,
    pub r: f64,
    pub pairs: usize,
    /// check exits 1 when any L(ε_{k+1})/L(ε_k) exceeds this
    #[serde(default)]
    pub max_ratio: Option<f64>,
}

// ---------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// exit 0
    Success,
    /// exit 1
    CheckFailure,
}

pub fn config_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

struct RunContext {
    config: RunConfig,
    raw: serde_json::Value,
    hash: String,
    out_dir: PathBuf,
}

impl RunContext {
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)?)?;
        Ok(())
    }
}

fn solve_spec_from(config: &RunConfig) -> Result<(SolveSpec, BoundaryDatum)> {
    let domain = config
        .domain
        .as_ref()
        .ok_or_else(|| cfg_err("missing domain section"))?
        .build()?;
    let field = config
        .field
        .as_ref()
        .ok_or_else(|| cfg_err("missing field section"))?
        .build()?;
    let variant = config
        .variant
        .ok_or_else(|| cfg_err("missing variant"))?;
    let datum = config
        .datum
        .as_ref()
        .ok_or_else(|| cfg_err("missing datum section"))?
        .build()?;
    let solver = config
        .solver
        .as_ref()
        .ok_or_else(|| cfg_err("missing solver section"))?;
    let n = domain.dim();
    let spec = SolveSpec {
        domain,
        field,
        variant,
        h: solver.h,
        dir_count: solver
            .dir_count
            .unwrap_or_else(|| SolveSpec::dir_default_for(n)),
        quad_count: solver.quad_count.unwrap_or(32),
        tol: solver.tol,
        max_iter: solver.max_iter.unwrap_or(200_000),
        seed: config.seed,
    };
    Ok((spec, datum))
}

/// Parse, validate, execute and emit artifacts for one run. Configuration
/// problems surface as Err (exit 2) before anything is written; check
/// failures return Outcome::CheckFailure (exit 1) with a failure report.
pub fn run_file(
    subcommand: &str,
    config_path: &Path,
    out_override: Option<&Path>,
) -> Result<Outcome> {
    let bytes = fs::read(config_path)?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes)?;
    let config: RunConfig = serde_json::from_slice(&bytes)?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(cfg_err(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if config.subcommand != subcommand {
        return Err(cfg_err(format!(
            "config is for subcommand {:?}, invoked as {subcommand:?}",
            config.subcommand
        )));
    }
    let out_dir = match out_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(
            config
                .output_dir
                .as_deref()
                .ok_or_else(|| cfg_err("no output directory (config or --out)"))?,
        ),
    };
    let hash = config_hash(&bytes);
    let ctx = RunContext {
        config,
        raw,
        hash,
        out_dir,
    };
    // validate everything the subcommand needs before creating artifacts
    let action = prepare(subcommand, &ctx)?;

    fs::create_dir_all(&ctx.out_dir)?;
    let echo = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "timestamp_unix_seconds": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config": ctx.raw,
    });
    ctx.write_json("config_echo.json", &echo)?;
    action(&ctx)
}

type Action = Box<dyn FnOnce(&RunContext) -> Result<Outcome>>;

/// Builds the runnable action, performing all config validation eagerly.
fn prepare(subcommand: &str, ctx: &RunContext) -> Result<Action> {
    match subcommand {
        "solve" => {
            let (spec, datum) = solve_spec_from(&ctx.config)?;
            Ok(Box::new(move |ctx| run_solve(ctx, spec, datum)))
        }
        "simulate" => {
            let sim = ctx
                .config
                .simulate
                .clone()
                .ok_or_else(|| cfg_err("missing simulate section"))?;
            let domain = ctx
                .config
                .domain
                .as_ref()
                .ok_or_else(|| cfg_err("missing domain section"))?
                .build()?;
            let field = ctx
                .config
                .field
                .as_ref()
                .ok_or_else(|| cfg_err("missing field section"))?
                .build()?;
            let variant = ctx
                .config
                .variant
                .ok_or_else(|| cfg_err("missing variant"))?;
            let payoff = match (&sim.z, sim.exit_payoff) {
                (Some(_), Some(exit_payoff)) => Payoff::Doubled { exit_payoff },
                (Some(_), None) => {
                    return Err(cfg_err("doubled game needs exit_payoff"))
                }
                (None, _) => Payoff::Single {
                    g: ctx
                        .config
                        .datum
                        .as_ref()
                        .ok_or_else(|| cfg_err("single game needs a datum"))?
                        .build()?,
                },
            };
            let game = GameConfig {
                variant,
                domain,
                field,
                payoff,
                stop_distance: sim.stop_distance,
                max_turns: sim.max_turns.unwrap_or(1_000_000),
                seed: ctx.config.seed,
            };
            let our = sim.our.build()?;
            let opp = sim.opp.build()?;
            let start = match &sim.z {
                Some(z) => Start::Doubled {
                    x: sim.x.clone(),
                    z: z.clone(),
                },
                None => Start::Single { x: sim.x.clone() },
            };
            let episodes = sim.episodes;
            let trace = sim.trace;
            Ok(Box::new(move |ctx| {
                run_simulate(ctx, game, start, our, opp, episodes, trace)
            }))
        }
        "verify" => {
            let v = ctx
                .config
                .verify
                .clone()
                .ok_or_else(|| cfg_err("missing verify section"))?;
            let field = ctx
                .config
                .field
                .as_ref()
                .ok_or_else(|| cfg_err("missing field section"))?
                .build()?;
            let variant = ctx
                .config
                .variant
                .ok_or_else(|| cfg_err("missing variant"))?;
            for c in &v.checks {
                if !["taylor", "case1", "case2", "annular"].contains(&c.as_str()) {
                    return Err(cfg_err(format!("unknown check {c:?}")));
                }
            }
            if v.n < 2 {
                return Err(cfg_err("verify needs dimension n >= 2"));
            }
            let seed = ctx.config.seed;
            Ok(Box::new(move |ctx| run_verify(ctx, v, field, variant, seed)))
        }
        "measure" => {
            let m = ctx
                .config
                .measure
                .clone()
                .ok_or_else(|| cfg_err("missing measure section"))?;
            let (spec, datum) = solve_spec_from(&ctx.config)?;
            Ok(Box::new(move |ctx| run_measure(ctx, spec, datum, m)))
        }
        "sweep" => {
            let s = ctx
                .config
                .sweep
                .clone()
                .ok_or_else(|| cfg_err("missing sweep section"))?;
            let (spec, datum) = solve_spec_from(&ctx.config)?;
            Ok(Box::new(move |ctx| run_sweep(ctx, spec, datum, s)))
        }
        other => Err(cfg_err(format!("unknown subcommand {other:?}"))),
    }
}

// ---------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------

fn write_field_csv(path: &Path, field: &GridField) -> Result<()> {
    let n = field.dims.len();
    let mut out = String::from("index");
    for d in 0..n {
        let _ = write!(out, ",x{d}");
    }
    out.push_str(",region,value\n");
    for i in 0..field.len() {
        let x = field.node_coord(i);
        let _ = write!(out, "{i}");
        for c in x {
            let _ = write!(out, ",{c}");
        }
        let region = match field.region[i] {
            Region::Interior => "interior",
            Region::Strip => "strip",
        };
        let _ = writeln!(out, ",{region},{}", field.values[i]);
    }
    fs::write(path, out)?;
    Ok(())
}

fn run_solve(ctx: &RunContext, spec: SolveSpec, datum: BoundaryDatum) -> Result<Outcome> {
    let result = solve_fixed_point(&datum, &spec)?;
    write_field_csv(&ctx.out_dir.join("field.csv"), &result.field)?;
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "epsilon": spec.domain.epsilon,
        "h": spec.h,
        "iterations": result.iterations,
        "converged": result.converged,
        "tol": result.tol,
        "final_residual": result.residuals.last().copied(),
        "max_gap": result.max_gap,
        "sup_abs": result.field.sup_abs(),
    });
    ctx.write_json("solve.json", &report)?;
    if result.converged {
        Ok(Outcome::Success)
    } else {
        ctx.write_json(
            "failure.json",
            &serde_json::json!({
                "config_hash": ctx.hash,
                "failed": ["solver_convergence"],
            }),
        )?;
        Ok(Outcome::CheckFailure)
    }
}

fn run_simulate(
    ctx: &RunContext,
    game: GameConfig,
    start: Start,
    our: Strategy,
    opp: Strategy,
    episodes: usize,
    trace: bool,
) -> Result<Outcome> {
    let estimate = estimate_value(&game, &start, &our, &opp, episodes)?;
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "start": start,
        "episodes": episodes,
        "mean": estimate.mean,
        "std_error": estimate.std_error,
        "cap_fraction": estimate.cap_fraction,
        "unreliable": estimate.unreliable,
    });
    ctx.write_json("simulate.json", &report)?;
    if trace {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(game.seed);
        let episode = play_episode(&game, &start, &our, &opp, &mut rng, true)?;
        fs::write(ctx.out_dir.join("trace.jsonl"), episode.to_json_lines()?)?;
    }
    Ok(Outcome::Success)
}

fn run_verify(
    ctx: &RunContext,
    v: VerifySpec,
    field: ExponentField,
    variant: Variant,
    seed: u64,
) -> Result<Outcome> {
    let params = constants_recipe(&v.recipe.inputs())?;
    let n = v.n;
    let quad_nodes = v.quad_count.unwrap_or(32);
    let quad = match variant {
        Variant::Orthogonal => geom::ball_quadrature(n, quad_nodes)?,
        Variant::Fullball => geom::full_ball_quadrature(n, quad_nodes)?,
    };
    let lab = ComparisonLab::new(params, field, variant, v.epsilon, quad);
    let samples = v.samples.unwrap_or(1000);
    let opponents = v.opponents.unwrap_or(8);
    let mut results: Vec<(String, SweepSummary)> = Vec::new();
    for check in &v.checks {
        let summary = match check.as_str() {
            "taylor" => taylor_sweep(&lab, n, samples, seed)?,
            "case1" => case1_sweep(&lab, n, samples, seed)?,
            "case2" => case2_sweep(&lab, n, samples, seed)?,
            "annular" => {
                let annuli: Vec<u32> = match &v.annuli {
                    Some(list) => list.clone(),
                    None => (1..=lab.params.big_n.min(200)).collect(),
                };
                annular_sweep(&lab, n, &annuli, opponents, seed)?
            }
            _ => unreachable!("validated in prepare"),
        };
        results.push((check.clone(), summary));
    }
    let pass = results.iter().all(|(_, s)| s.ok());
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "params": lab.params,
        "checks": results.iter().map(|(name, s)| {
            serde_json::json!({ "check": name, "summary": s, "pass": s.ok() })
        }).collect::<Vec<_>>(),
        "pass": pass,
    });
    ctx.write_json("verify.json", &report)?;
    if pass {
        Ok(Outcome::Success)
    } else {
        let failed: Vec<&String> = results
            .iter()
            .filter(|(_, s)| !s.ok())
            .map(|(n, _)| n)
            .collect();
        ctx.write_json(
            "failure.json",
            &serde_json::json!({ "config_hash": ctx.hash, "failed": failed }),
        )?;
        Ok(Outcome::CheckFailure)
    }
}

fn run_measure(
    ctx: &RunContext,
    spec: SolveSpec,
    datum: BoundaryDatum,
    m: MeasureSpec,
) -> Result<Outcome> {
    let solved = solve_fixed_point(&datum, &spec)?;
    let epsilon = spec.domain.epsilon;
    let report = lipschitz_modulus(
        &solved.field,
        &m.center,
        m.r,
        epsilon,
        m.pairs,
        ctx.config.seed,
    )?;
    let mut scatter_csv = String::from("distance,abs_diff\n");
    for (d, du) in &report.scatter {
        let _ = writeln!(scatter_csv, "{d},{du}");
    }
    fs::write(ctx.out_dir.join("scatter.csv"), scatter_csv)?;
    let gap = match &m.gap {
        Some(g) => {
            let params = constants_recipe(&g.recipe.inputs())?;
            let quad_nodes = g.quad_count.unwrap_or(16);
            let quad = match spec.variant {
                Variant::Orthogonal => {
                    geom::ball_quadrature(spec.domain.dim(), quad_nodes)?
                }
                Variant::Fullball => {
                    geom::full_ball_quadrature(spec.domain.dim(), quad_nodes)?
                }
            };
            let lab = ComparisonLab::new(
                params,
                spec.field.clone(),
                spec.variant,
                epsilon,
                quad,
            );
            Some(gap_k(
                &solved.field,
                &lab,
                &m.center,
                m.r,
                g.max_pairs.unwrap_or(500_000),
                ctx.config.seed,
            )?)
        }
        None => None,
    };
    let pass = solved.converged && gap.as_ref().map(|g| g.pass).unwrap_or(true);
    let out = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "converged": solved.converged,
        "modulus": report,
        "gap": gap,
        "pass": pass,
    });
    ctx.write_json("measure.json", &out)?;
    if pass {
        Ok(Outcome::Success)
    } else {
        ctx.write_json(
            "failure.json",
            &serde_json::json!({ "config_hash": ctx.hash, "failed": ["measure"] }),
        )?;
        Ok(Outcome::CheckFailure)
    }
}

fn run_sweep(
    ctx: &RunContext,
    spec: SolveSpec,
    datum: BoundaryDatum,
    s: SweepSpec,
) -> Result<Outcome> {
    let problem = SweepProblem {
        domain: spec.domain.clone(),
        field: spec.field.clone(),
        variant: spec.variant,
        datum,
        dir_count: spec.dir_count,
        quad_count: spec.quad_count,
        tol: spec.tol,
        max_iter: spec.max_iter,
        center: s.center.clone(),
        r: s.r,
        pairs: s.pairs,
        seed: ctx.config.seed,
    };
    let report = scale_sweep(&problem, &s.eps_list)?;
    let mut csv = String::from("epsilon,l_eps,converged,iterations,ratio_to_prev\n");
    for (k, row) in report.rows.iter().enumerate() {
        let ratio = if k == 0 {
            String::new()
        } else {
            format!("{}", report.ratios[k - 1])
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{ratio}",
            row.epsilon, row.report.l_eps, row.converged, row.iterations
        );
    }
    fs::write(ctx.out_dir.join("sweep.csv"), csv)?;
    let ratio_ok = match s.max_ratio {
        Some(cap) => report.ratios.iter().all(|r| *r <= cap),
        None => true,
    };
    let converged = report.rows.iter().all(|r| r.converged);
    let pass = ratio_ok && converged;
    let out = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_hash": ctx.hash,
        "sweep": report,
        "max_ratio": s.max_ratio,
        "pass": pass,
    });
    ctx.write_json("sweep.json", &out)?;
    if pass {
        Ok(Outcome::Success)
    } else {
        let mut failed = Vec::new();
        if !ratio_ok {
            failed.push("ratio_cap");
        }
        if !converged {
            failed.push("solver_convergence");
        }
        ctx.write_json(
            "failure.json",
            &serde_json::json!({ "config_hash": ctx.hash, "failed": failed }),
        )?;
        Ok(Outcome::CheckFailure)
    }
}
