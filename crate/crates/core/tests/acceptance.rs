//! Acceptance gate: one test per criterion, each emitting a single
//! pass/fail line. Run with `cargo test --test acceptance`.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use tuglab::coeff::{
    alpha_holder_constant, alpha_min, ExponentField, FieldKind, PVal, Variant,
};
use tuglab::comparison::{
    annular_sweep, case1_sweep, constants_recipe, ComparisonLab,
    ComparisonParams, RecipeInputs,
};
use tuglab::dpp::{
    direction_set, solve_fixed_point, solve_fixed_point_from, BoundaryDatum,
    Domain, DomainKind, GridField, Operator, SolveSpec,
};
use tuglab::game::{
    branch_frequencies, estimate_value, measure_slight_turn, sample_orthogonal_ball,
    GameConfig, Payoff, Start, Strategy,
};
use tuglab::geom::{self, coupled_rotation, UnitVector};
use tuglab::linalg;
use tuglab::regularity::{gap_k, holder_inputs, lipschitz_modulus};

fn report(num: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {num:02} ({name}): {verdict} — {detail}");
    assert!(ok, "criterion {num:02} ({name}) failed: {detail}");
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        if linalg::dot(&v, &v) <= 1.0 {
            if let Ok(u) = UnitVector::normalize(&v) {
                return u;
            }
        }
    }
}

#[test]
fn criterion_01_coupled_rotations() {
    let start = Instant::now();
    let mut worst_contract = f64::NEG_INFINITY;
    let mut worst_orth = 0.0_f64;
    let mut worst_plane = 0.0_f64;
    for n in [2usize, 3, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(0xacc0 + n as u64);
        for _ in 0..100_000 {
            let nu_x = random_unit(&mut rng, n);
            let nu_z = random_unit(&mut rng, n);
            let cr = coupled_rotation(&nu_x, &nu_z).unwrap();
            let zeta = sample_orthogonal_ball(&mut rng, n);
            let dx = cr.p_x.apply(&zeta);
            let dz = cr.p_z.apply(&zeta);
            let bound = linalg::norm(&linalg::add(nu_x.coords(), nu_z.coords()));
            worst_contract = worst_contract.max(linalg::dist(&dx, &dz) - bound);
            worst_orth = worst_orth
                .max(cr.p_x.matrix().orthogonality_residual())
                .max(cr.p_z.matrix().orthogonality_residual());
            let rho_dot =
                linalg::dot(cr.p_x.second_column(), cr.p_z.second_column());
            let nu_dot = linalg::dot(nu_x.coords(), nu_z.coords());
            worst_plane = worst_plane.max((rho_dot + nu_dot).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_contract <= 1e-10
        && worst_orth <= 1e-12
        && worst_plane <= 1e-10
        && elapsed < 10.0;
    report(
        1,
        "coupled rotations",
        ok,
        &format!(
            "contraction slack {worst_contract:.2e}, orthogonality {worst_orth:.2e}, \
             plane identity {worst_plane:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_02_modulus_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc2);
    let mut ok = true;
    let mut detail = String::new();
    for _ in 0..20 {
        let s = 0.15 + rng.gen::<f64>() * 0.7;
        // admissible: above every lower bound for benign (c_α=0, α_min=1, r=1)
        let floor = (0.5_f64).max(2.0 / (3.0 * s * (1.0 + s)));
        let omega0 = floor * (1.01 + rng.gen::<f64>() * 2.0);
        let params = ComparisonParams {
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
        let w = params.omega();
        for k in 1..=10_000 {
            let t = (w.omega1 * k as f64 / 10_000.0).min(w.omega1);
            let (_, d1, d2) = w.eval(t).unwrap();
            if !(d1 >= 0.5 - 1e-12 && d1 <= 1.0 + 1e-12 && d2 < 0.0) {
                ok = false;
                detail = format!("s={s} omega0={omega0} t={t}: d1={d1} d2={d2}");
            }
        }
        let (_, d1, _) = w.eval(w.omega1).unwrap();
        if (d1 - 0.5).abs() > 1e-12 {
            ok = false;
            detail = format!("slope at endpoint {d1}");
        }
    }
    if ok {
        detail = "20 parameter pairs, 10^4-point grids".into();
    }
    report(2, "modulus derivative bounds", ok, &detail);
}

#[test]
fn criterion_03_affine_fixed_point() {
    let mut worst = 0.0_f64;
    for variant in [Variant::Orthogonal, Variant::Fullball] {
        for n in [2usize, 3] {
            let eps = 0.1;
            let h = if n == 2 { 0.05 } else { 0.1 };
            let domain = Domain {
                kind: DomainKind::Box {
                    size: vec![2.0; n],
                },
                center: vec![0.0; n],
                epsilon: eps,
            };
            let mut u = GridField::for_domain(&domain, h).unwrap();
            let slope: Vec<f64> = (0..n).map(|d| 0.7 - 0.4 * d as f64).collect();
            for i in 0..u.len() {
                u.values[i] = 0.3 + linalg::dot(&slope, &u.node_coord(i));
            }
            let p = match variant {
                Variant::Orthogonal => 3.0,
                Variant::Fullball => 4.0,
            };
            let field = ExponentField::constant(PVal::Finite(p));
            let dirs = direction_set(n, if n == 2 { 16 } else { 32 }, 5).unwrap();
            let quad = match variant {
                Variant::Orthogonal => geom::ball_quadrature(n, 16).unwrap(),
                Variant::Fullball => geom::full_ball_quadrature(n, 16).unwrap(),
            };
            let op = Operator::build(&u, &field, variant, eps, &dirs, &quad).unwrap();
            let next = op.apply(&u);
            worst = worst.max(next.interior_sup_diff(&u));
        }
    }
    report(
        3,
        "affine fixed point",
        worst <= 1e-10,
        &format!("worst residual {worst:.2e}"),
    );
}

fn harmonic_problem(eps: f64) -> SolveSpec {
    SolveSpec {
        domain: Domain {
            kind: DomainKind::Box {
                size: vec![1.0, 1.0],
            },
            center: vec![0.5, 0.5],
            epsilon: eps,
        },
        field: ExponentField::constant(PVal::Finite(2.0)),
        variant: Variant::Fullball,
        h: eps / 2.0,
        dir_count: 16,
        quad_count: 16,
        tol: None,
        max_iter: 100_000,
        seed: 3,
    }
}

fn harmonic_error(field: &GridField) -> f64 {
    let mut err = 0.0_f64;
    for i in field.interior_indices() {
        let x = field.node_coord(i);
        err = err.max((field.values[i] - (x[0] * x[0] - x[1] * x[1])).abs());
    }
    err
}

#[test]
fn criterion_04_harmonic_oracle() {
    let start = Instant::now();
    let g = BoundaryDatum::QuadraticHarmonic;
    let mut coarse = harmonic_problem(0.1);
    coarse.tol = Some(1e-8);
    let sol1 = solve_fixed_point(&g, &coarse).unwrap();
    let err1 = harmonic_error(&sol1.field);
    let mut fine = harmonic_problem(0.05);
    fine.tol = Some(1e-11);
    let sol2 = solve_fixed_point_from(&g, &fine, Some(&sol1.field)).unwrap();
    let err2 = harmonic_error(&sol2.field);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = sol1.converged && sol2.converged && err1 <= 0.05 && err2 <= err1
        && elapsed < 120.0;
    report(
        4,
        "harmonic oracle",
        ok,
        &format!("sup error {err1:.2e} at eps=0.1, {err2:.2e} at eps=0.05, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_05_monte_carlo_agreement() {
    let g = BoundaryDatum::QuadraticHarmonic;
    let mut spec = harmonic_problem(0.1);
    spec.tol = Some(1e-9);
    let solved = solve_fixed_point(&g, &spec).unwrap();
    let game = GameConfig {
        variant: Variant::Fullball,
        domain: spec.domain.clone(),
        field: spec.field.clone(),
        payoff: Payoff::Single { g },
        stop_distance: None,
        max_turns: 1_000_000,
        seed: 0x51ca,
    };
    let mut ok = true;
    let mut detail = String::new();
    for (k, pt) in [[0.5, 0.5], [0.3, 0.6], [0.7, 0.35]].iter().enumerate() {
        let mut game_k = game.clone();
        game_k.seed = game.seed.wrapping_add(k as u64 * 7919);
        let est = estimate_value(
            &game_k,
            &Start::Single { x: pt.to_vec() },
            &Strategy::PullTogether,
            &Strategy::PullTogether,
            100_000,
        )
        .unwrap();
        let solved_val = solved.field.interp(pt).unwrap();
        let dev = (est.mean - solved_val).abs();
        let cap_ok = est.cap_fraction < 0.01;
        if dev > 3.0 * est.std_error || !cap_ok {
            ok = false;
        }
        detail.push_str(&format!(
            "[{pt:?}: dev {dev:.1e} vs 3se {:.1e}, cap {:.2}%] ",
            3.0 * est.std_error,
            100.0 * est.cap_fraction
        ));
    }
    report(5, "Monte Carlo vs fixed point", ok, &detail);
}

#[test]
fn criterion_06_slight_turn() {
    let eps: f64 = 0.01;
    let theta = eps.powf(0.75);
    let rep = measure_slight_turn(eps, theta, 2, 1_000_000, 0x6a11).unwrap();
    let loss_ok = (rep.loss_along_v - 5.0e-6).abs() <= 0.1 * 5.0e-6;
    let gain_ok = (rep.gain_perpendicular - 3.16e-4).abs() <= 0.1 * 3.16e-4;
    report(
        6,
        "slight-turn asymptotics",
        loss_ok && gain_ok,
        &format!(
            "loss {:.3e} (target 5.0e-6), gain {:.3e} (target 3.16e-4)",
            rep.loss_along_v, rep.gain_perpendicular
        ),
    );
}

fn bench_recipe() -> RecipeInputs {
    RecipeInputs {
        s: 0.5,
        c_alpha: 0.1,
        // honest lower bound for the constant p = 14 field in n = 2 and 3
        alpha_min: 0.75,
        r: 1.0,
        sup_u: 0.01,
        c_u: 0.05,
        delta: 1.0,
    }
}

fn bench_lab(n: usize, epsilon: f64) -> ComparisonLab {
    let params = constants_recipe(&bench_recipe()).unwrap();
    ComparisonLab::new(
        params,
        ExponentField::constant(PVal::Finite(14.0)),
        Variant::Orthogonal,
        epsilon,
        geom::ball_quadrature(n, 32).unwrap(),
    )
}

#[test]
fn criterion_07_taylor_bound() {
    let mut detail = String::new();
    let mut ok = true;
    for n in [2usize, 3] {
        let lab = bench_lab(n, 5e-5);
        let s = tuglab::comparison::taylor_sweep(&lab, n, 50_000, 0x7a11 + n as u64)
            .unwrap();
        if !s.ok() {
            ok = false;
        }
        detail.push_str(&format!(
            "[n={n}: {} checked, {} failures, worst margin {:.1e}] ",
            s.checked, s.failures, s.worst_margin
        ));
    }
    report(7, "second-order increment bound", ok, &detail);
}

#[test]
fn criterion_08_near_optimal_case() {
    let mut detail = String::new();
    let mut ok = true;
    for n in [2usize, 3] {
        let lab = bench_lab(n, 5e-5);
        let s = case1_sweep(&lab, n, 5_000, 0x8a11 + n as u64).unwrap();
        if !s.ok() || s.worst_margin >= 0.0 {
            ok = false;
        }
        detail.push_str(&format!(
            "[n={n}: {} checked, {} failures, worst {:.1e}] ",
            s.checked, s.failures, s.worst_margin
        ));
    }
    report(8, "near-optimal opponent case", ok, &detail);
}

#[test]
fn criterion_09_annular_chain() {
    let lab = bench_lab(2, 1e-4);
    let annuli: Vec<u32> = (1..=lab.params.big_n).collect();
    let s = annular_sweep(&lab, 2, &annuli, 8, 0x9a11).unwrap();
    report(
        9,
        "annular chain",
        s.ok(),
        &format!(
            "{} annuli (N = {}), {} failures",
            s.checked, lab.params.big_n, s.failures
        ),
    );
}

struct CorpusProblem {
    name: &'static str,
    field: ExponentField,
    variant: Variant,
}

fn corpus() -> Vec<CorpusProblem> {
    vec![
        CorpusProblem {
            name: "p=2.5 orthogonal",
            field: ExponentField::constant(PVal::Finite(2.5)),
            variant: Variant::Orthogonal,
        },
        CorpusProblem {
            name: "p=4 orthogonal",
            field: ExponentField::constant(PVal::Finite(4.0)),
            variant: Variant::Orthogonal,
        },
        CorpusProblem {
            name: "p=inf orthogonal",
            field: ExponentField::constant(PVal::Infinite),
            variant: Variant::Orthogonal,
        },
        CorpusProblem {
            name: "p(x)=2.5+0.5|x1|^{1/2} fullball",
            field: ExponentField {
                kind: FieldKind::RadialHolder {
                    base: 2.5,
                    coeff: 0.5,
                    exponent: 0.5,
                    axis: Some(0),
                },
                s: 0.5,
                c_p: 0.5,
                p_min: 2.5,
            },
            variant: Variant::Fullball,
        },
    ]
}

#[test]
fn criterion_10_gap_and_scale_sweep() {
    let start = Instant::now();
    let g = BoundaryDatum::QuadraticHarmonic;
    let center = [0.5, 0.5];
    // the quotient's +ε denominator alone contributes (2r+0.2)/(2r+0.1) to
    // the first ratio, so r must be comfortably larger than the radii
    let r = 0.4;
    let mut ok = true;
    let mut detail = String::new();
    for prob in corpus() {
        let mut warm: Option<GridField> = None;
        let mut l_values = Vec::new();
        let mut coarse_fit = None;
        let mut finest: Option<(f64, GridField)> = None;
        for eps in [0.2, 0.1, 0.05] {
            let spec = SolveSpec {
                domain: Domain {
                    kind: DomainKind::Box {
                        size: vec![1.0, 1.0],
                    },
                    center: center.to_vec(),
                    epsilon: eps,
                },
                field: prob.field.clone(),
                variant: prob.variant,
                h: eps / 2.0,
                dir_count: 32,
                quad_count: 16,
                tol: Some(1e-6),
                max_iter: 100_000,
                seed: 10,
            };
            let solved = solve_fixed_point_from(&g, &spec, warm.as_ref()).unwrap();
            assert!(solved.converged, "{} eps={eps} did not converge", prob.name);
            let rep =
                lipschitz_modulus(&solved.field, &center, r, eps, 2_000, 11).unwrap();
            if coarse_fit.is_none() {
                coarse_fit = Some(holder_inputs(&rep));
            }
            l_values.push(rep.l_eps);
            finest = Some((eps, solved.field.clone()));
            warm = Some(solved.field);
        }
        let ratios: Vec<f64> = l_values.windows(2).map(|w| w[1] / w[0]).collect();
        let ratios_ok = ratios.iter().all(|r| *r <= 1.2);

        let (c_u, delta) = coarse_fit.unwrap();
        let (eps_fine, field_fine) = finest.unwrap();
        let inputs = RecipeInputs {
            s: prob.field.s,
            c_alpha: alpha_holder_constant(&prob.field, 2, prob.variant),
            alpha_min: alpha_min(&prob.field, 2, prob.variant).unwrap(),
            r,
            sup_u: field_fine.sup_abs(),
            c_u,
            delta,
        };
        let params = constants_recipe(&inputs).unwrap();
        let lab = ComparisonLab::new(
            params,
            prob.field.clone(),
            prob.variant,
            eps_fine,
            match prob.variant {
                Variant::Orthogonal => geom::ball_quadrature(2, 8).unwrap(),
                Variant::Fullball => geom::full_ball_quadrature(2, 8).unwrap(),
            },
        );
        let gap = gap_k(&field_fine, &lab, &center, r, 300_000, 12).unwrap();
        if !(ratios_ok && gap.pass) {
            ok = false;
        }
        detail.push_str(&format!(
            "[{}: ratios {:?}, gap log10 K {:.1} vs threshold log10 {:.1}, {}] ",
            prob.name,
            ratios
                .iter()
                .map(|r| (r * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            gap.k_log10,
            gap.threshold_log10,
            if gap.pass { "pass" } else { "fail" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok = ok && elapsed < 900.0;
    detail.push_str(&format!("{elapsed:.0}s"));
    report(10, "gap check and scale sweep", ok, &detail);
}

#[test]
fn criterion_11_probability_decomposition() {
    // exactness of the averaging functional on constants
    let field = ExponentField {
        kind: FieldKind::Affine {
            base: 6.0,
            slope: vec![1.5, -0.5],
        },
        s: 0.5,
        c_p: 2.0,
        p_min: 4.0,
    };
    let params = constants_recipe(&bench_recipe()).unwrap();
    let mut exact = true;
    for variant in [Variant::Orthogonal, Variant::Fullball] {
        let quad = match variant {
            Variant::Orthogonal => geom::ball_quadrature(2, 16).unwrap(),
            Variant::Fullball => geom::full_ball_quadrature(2, 16).unwrap(),
        };
        let lab = ComparisonLab::new(params.clone(), field.clone(), variant, 1e-3, quad);
        let nu_x = UnitVector::axis(2, 0);
        let nu_z = UnitVector::axis(2, 1);
        let v = lab
            .f_functional(|_, _| 1.0, &[0.3, 0.1], &[-0.2, 0.4], &nu_x, &nu_z)
            .unwrap();
        if v != 1.0 {
            exact = false;
        }
    }

    // empirical branch frequencies of the coupled step
    let config = GameConfig {
        variant: Variant::Orthogonal,
        domain: Domain {
            kind: DomainKind::Box {
                size: vec![2.0, 2.0],
            },
            center: vec![0.0, 0.0],
            epsilon: 0.1,
        },
        field,
        payoff: Payoff::Doubled { exit_payoff: 1.0 },
        stop_distance: None,
        max_turns: 1_000_000,
        seed: 0xb111,
    };
    let steps = 100_000usize;
    let (freq, expected) = branch_frequencies(
        &config,
        &[0.3, 0.1],
        &[-0.2, 0.2],
        &Strategy::PullTogether,
        &Strategy::PullTogether,
        steps,
        0xb112,
    )
    .unwrap();
    let mut freq_ok = true;
    for j in 0..3 {
        let sigma = (expected[j] * (1.0 - expected[j]) / steps as f64).sqrt();
        if (freq[j] - expected[j]).abs() > 3.0 * sigma {
            freq_ok = false;
        }
    }
    report(
        11,
        "probability decomposition",
        exact && freq_ok,
        &format!("F(1) exact: {exact}; frequencies {freq:?} vs {expected:?}"),
    );
}
