//! Release acceptance suite: one test per shipping criterion, each printing
//! a `criterion N (<name>): PASS` summary line with the measured numbers
//! (visible with `--nocapture`; failures print their diagnostics always).
//!
//! Everything runs at desk scale. The criteria pin down the library's
//! headline claims end to end:
//!
//!  1. every member of the iteration family lands on the monolithic
//!     penalty solution,
//!  2. the error contracts linearly at gamma-hat* and throughout the
//!     advertised relaxation interval,
//!  3. gamma-hat* is near-optimal against its neighbors,
//!  4. penetration shrinks linearly with the penalty parameter,
//!  5. the hand-assembled derivatives agree with finite differences,
//!  6. the sampled form inequalities behind the rate theory hold with the
//!     estimated constants,
//!  7. a uniform-pressure stack reproduces the analytic plane-strain state,
//!  8. splitting a body by an ideal interface does not change the answer,
//!  9. serial and parallel runs are bit-identical.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use contact_ddm::dof::{DisplacementState, DofMap};
use contact_ddm::forms::{
    assemble_a, assemble_l, assemble_v0_norm, element_stress, estimate_constants, eval_h,
    eval_h_prime, eval_h_second,
};
use contact_ddm::material::OmegaFn;
use contact_ddm::mesh::{
    generate_split_square, generate_square, generate_stacked_blocks, ContactPair,
    MultiBodyProblem, TAG_DIRICHLET, TAG_FREE, TAG_ROLLER_X, TAG_ROLLER_Y,
};
use contact_ddm::oracle::{audit_with, contact_audit, fd_check, solve_monolithic_penalty};
use contact_ddm::penalty::{
    assemble_x, default_theta, eval_j, eval_j_prime, policy_masks, CharFnPolicy, PenaltyConfig,
};
use contact_ddm::solver::{gamma_star, solve, GammaChoice, IterationConfig, Scheme};
use contact_ddm::sparse::{dot, solve_spd, SparseSym};
use contact_ddm::suites::{bench_cases, build_suite, suite_names, BenchCase, Suite, GAMMA_GRID};
use contact_ddm::suites::{SUITE_CONSTANTS_SEED, SUITE_CONSTANT_SAMPLES};

// ---------------------------------------------------------------- helpers

/// gamma-hat* of a suite, by the same estimate the benchmark grid uses.
fn suite_gamma_hat(suite: &Suite) -> f64 {
    let map = DofMap::new(&suite.problem);
    let pairs = suite.problem.build_pairs().expect("suite pairs");
    let k = estimate_constants(
        &suite.problem,
        &map,
        &pairs,
        Some(suite.theta),
        SUITE_CONSTANT_SAMPLES,
        SUITE_CONSTANTS_SEED,
    )
    .expect("suite constants");
    gamma_star(&k).expect("positive constants").gamma
}

/// Iteration setup for one family member at a fixed relaxation parameter.
fn case_config(suite: &Suite, case: &BenchCase, gamma: f64, tol: f64, max_iters: usize) -> IterationConfig {
    let mut c = IterationConfig::new(PenaltyConfig {
        theta: suite.theta,
        policy: case.policy.clone(),
    });
    c.scheme = case.scheme;
    c.gamma = GammaChoice::Value(gamma);
    c.tol_rel = tol;
    c.max_iters = max_iters;
    c.gamma_safeguard = false;
    c
}

/// The iteration's bilinear form G at the state u: A + X(masks at u), minus
/// H'' for the Newton-like member. SPD on the free space for every case the
/// suite runs, so it defines the norm the convergence statement lives in.
fn g_matrix(
    problem: &MultiBodyProblem,
    map: &DofMap,
    pairs: &[ContactPair],
    case: &BenchCase,
    u: &[f64],
    theta: f64,
) -> SparseSym {
    let a = assemble_a(problem, map).expect("assemble A");
    let masks = policy_masks(&case.policy, map, pairs, u);
    let x = assemble_x(map, pairs, &masks, theta);
    let mut g = a.add_scaled(&x, 1.0);
    if case.scheme == Scheme::NewtonLike {
        let hpp = eval_h_second(problem, map, u);
        g = g.add_scaled(&hpp, -1.0);
    }
    g
}

fn g_norm(g: &SparseSym, v: &[f64]) -> f64 {
    g.quadratic_form(v, v).max(0.0).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// G-norm error of every recorded iterate against the reference solution.
fn error_curve(iterates: &[Vec<f64>], reference: &[f64], g: &SparseSym) -> Vec<f64> {
    iterates
        .iter()
        .map(|u| g_norm(g, &sub(u, reference)))
        .collect()
}

/// Per-iteration error ratios e_{k+1}/e_k for k >= start, cut off where the
/// error reaches the floor (reference accuracy) and ratios turn into noise.
fn error_ratios(errors: &[f64], start: usize, floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in start..errors.len().saturating_sub(1) {
        if errors[k] <= floor || errors[k + 1] <= floor {
            break;
        }
        out.push(errors[k + 1] / errors[k]);
    }
    out
}

/// Geometric-mean contraction rate of an error curve past the transient.
fn mean_rate(errors: &[f64], start: usize, floor: f64) -> f64 {
    let mut last = start;
    for k in start..errors.len() {
        if errors[k] <= floor {
            break;
        }
        last = k;
    }
    assert!(
        last > start + 1,
        "error curve too short to measure a rate: {} usable points",
        last - start
    );
    (errors[last] / errors[start]).powf(1.0 / (last - start) as f64)
}

// --------------------------------------------------------------- criteria

/// Every family member, on every suite, converges and lands on the
/// monolithic penalty solution to 1e-8 relative in the scheme's G-norm.
#[test]
fn c1_every_scheme_matches_the_monolithic_oracle() {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failures = Vec::new();
    for name in suite_names() {
        let suite = build_suite(name).unwrap();
        let gamma = suite_gamma_hat(&suite);
        let map = DofMap::new(&suite.problem);
        let pairs = suite.problem.build_pairs().unwrap();
        let reference = solve_monolithic_penalty(&suite.problem, suite.theta, 1e-12)
            .unwrap_or_else(|e| panic!("oracle failed on {name}: {e}"));
        for case in bench_cases() {
            let config = case_config(&suite, &case, gamma, 1e-11, 60_000);
            let (state, history) = match solve(&suite.problem, &config) {
                Ok(r) => r,
                Err(e) => {
                    failures.push(format!("{name}/{}: solver error: {e}", case.name));
                    continue;
                }
            };
            if !history.converged {
                failures.push(format!(
                    "{name}/{}: hit the iteration cap at residual {:e}",
                    case.name,
                    history.records.last().map_or(f64::NAN, |r| r.residual)
                ));
                continue;
            }
            let g = g_matrix(&suite.problem, &map, &pairs, &case, &state.u, suite.theta);
            let rel = g_norm(&g, &sub(&state.u, &reference.state.u)) / g_norm(&g, &reference.state.u);
            if rel > 1e-8 {
                failures.push(format!(
                    "{name}/{}: relative G-norm gap {rel:e} exceeds 1e-8",
                    case.name
                ));
            }
            if rel > worst.0 {
                worst = (rel, format!("{name}/{}", case.name));
            }
        }
    }
    assert!(failures.is_empty(), "oracle equivalence failures:\n{}", failures.join("\n"));
    println!(
        "criterion 1 (oracle equivalence): PASS — 16/16 runs within 1e-8, worst {:.2e} at {}",
        worst.0, worst.1
    );
}

/// On blocks2-linear at gamma-hat* the error against the oracle contracts
/// by a near-constant factor q < 1 from iteration 3 on, and the whole
/// sampled relaxation interval {0.5, 1.0, 1.5} x gamma-hat* converges.
#[test]
fn c2_linear_contraction_at_gamma_hat() {
    let suite = build_suite("blocks2-linear").unwrap();
    let gamma = suite_gamma_hat(&suite);
    let map = DofMap::new(&suite.problem);
    let pairs = suite.problem.build_pairs().unwrap();
    let case = bench_cases().into_iter().find(|c| c.name == "robin").unwrap();
    let reference = solve_monolithic_penalty(&suite.problem, suite.theta, 1e-12).unwrap();

    let mut config = case_config(&suite, &case, gamma, suite.tol_rel, suite.max_iters);
    config.record_iterates = true;
    let (_, history) = solve(&suite.problem, &config).unwrap();
    assert!(history.converged, "gamma-hat* run must converge");

    let g = g_matrix(&suite.problem, &map, &pairs, &case, &reference.state.u, suite.theta);
    let scale = g_norm(&g, &reference.state.u);
    let errors = error_curve(&history.iterates, &reference.state.u, &g);
    let ratios = error_ratios(&errors, 3, 1e-9 * scale);
    assert!(
        ratios.len() >= 20,
        "need a usable ratio sequence, got {} entries",
        ratios.len()
    );
    let q_max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let q_min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        q_max < 1.0,
        "error must contract every iteration past the transient; worst ratio {q_max}"
    );
    assert!(
        q_max - q_min <= 0.1,
        "contraction factor must be constant to +-0.05; saw [{q_min}, {q_max}]"
    );

    for (label, factor) in GAMMA_GRID {
        let config = case_config(&suite, &case, factor * gamma, suite.tol_rel, suite.max_iters);
        let (_, h) = solve(&suite.problem, &config).unwrap();
        assert!(h.converged, "gamma grid point {label} must converge");
    }
    println!(
        "criterion 2 (linear rate): PASS — q in [{q_min:.4}, {q_max:.4}] over {} ratios, grid converged",
        ratios.len()
    );
}

/// gamma-hat* contracts at least as fast (to 0.05) as its half and
/// one-and-a-half neighbors on blocks2-linear.
#[test]
fn c3_gamma_hat_is_near_optimal() {
    let suite = build_suite("blocks2-linear").unwrap();
    let gamma = suite_gamma_hat(&suite);
    let map = DofMap::new(&suite.problem);
    let pairs = suite.problem.build_pairs().unwrap();
    let case = bench_cases().into_iter().find(|c| c.name == "robin").unwrap();
    let reference = solve_monolithic_penalty(&suite.problem, suite.theta, 1e-12).unwrap();
    let g = g_matrix(&suite.problem, &map, &pairs, &case, &reference.state.u, suite.theta);
    let scale = g_norm(&g, &reference.state.u);

    let q_of = |factor: f64| -> f64 {
        let mut config = case_config(&suite, &case, factor * gamma, suite.tol_rel, suite.max_iters);
        config.record_iterates = true;
        let (_, history) = solve(&suite.problem, &config).unwrap();
        assert!(history.converged, "gamma = {factor} x gamma-hat* must converge");
        let errors = error_curve(&history.iterates, &reference.state.u, &g);
        mean_rate(&errors, 3, 1e-9 * scale)
    };
    let (q_half, q_star, q_sesqui) = (q_of(0.5), q_of(1.0), q_of(1.5));
    assert!(
        q_star <= q_half.min(q_sesqui) + 0.05,
        "q(gamma-hat*) = {q_star} must be within 0.05 of min(q(0.5x) = {q_half}, q(1.5x) = {q_sesqui})"
    );
    println!(
        "criterion 3 (near-optimal gamma*): PASS — q(0.5x) = {q_half:.4}, q(1x) = {q_star:.4}, q(1.5x) = {q_sesqui:.4}"
    );
}

/// Penetration of the compressed stack shrinks like theta: each halving of
/// theta scales it by a factor in [0.3, 0.7], and at the smallest theta it
/// is below 1e-6 block heights.
#[test]
fn c4_penetration_vanishes_linearly_with_theta() {
    let suite = build_suite("blocks2-linear").unwrap();
    let theta0 = default_theta(&suite.problem);
    let thetas: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|s| s * theta0).collect();
    // The gradient of the stiffest solve carries a floating-point noise
    // floor of about 1/theta x eps x |u|, so the outer tolerance must sit
    // above it. The penetration readout lives in the penalty-stiff
    // directions, where the solve is sharper than the tolerance by the
    // penalty-to-elastic stiffness ratio, so the reading stays exact to
    // many digits regardless.
    let pens: Vec<f64> = thetas
        .iter()
        .map(|&theta| {
            let sol = solve_monolithic_penalty(&suite.problem, theta, 1e-6)
                .unwrap_or_else(|e| panic!("oracle failed at theta = {theta:e}: {e}"));
            let audit = contact_audit(&suite.problem, &sol.state, theta).unwrap();
            assert!(
                audit.max_penetration > 0.0,
                "the compressed stack must actually penetrate at theta = {theta:e}"
            );
            audit.max_penetration
        })
        .collect();
    let halvings_per_decade = 10f64.log2();
    let mut factors = Vec::new();
    for w in pens.windows(2) {
        let per_halving = (w[1] / w[0]).powf(1.0 / halvings_per_decade);
        assert!(
            (0.3..=0.7).contains(&per_halving),
            "per-halving penetration factor {per_halving} outside [0.3, 0.7] (decade ratio {})",
            w[1] / w[0]
        );
        factors.push(per_halving);
    }
    let height = 1.0; // generated blocks are unit-height
    assert!(
        pens[2] <= 1e-6 * height,
        "penetration {:e} at theta = {:e} exceeds 1e-6 block heights",
        pens[2],
            thetas[2]
    );
    println!(
        "criterion 4 (penalty limit): PASS — penetrations {:.3e}/{:.3e}/{:.3e}, per-halving factors {:.3}/{:.3}",
        pens[0], pens[1], pens[2], factors[0], factors[1]
    );
}

/// Central differences confirm H', H'', and J' on 20 random states for
/// every built-in material nonlinearity.
#[test]
fn c5_derivatives_agree_with_finite_differences() {
    let theta = 2.5e-1;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0fd5_eed5);
    let mut worst = 0.0f64;
    for omega in [OmegaFn::Zero, OmegaFn::Const(0.5), OmegaFn::Rational(0.5)] {
        let mut problem = generate_stacked_blocks(2, 4, 0.0, 1.0).unwrap();
        for body in &mut problem.bodies {
            body.material.omega = omega;
        }
        let map = DofMap::new(&problem);
        let pairs = problem.build_pairs().unwrap();
        let n = map.n_free();
        for state in 0..20 {
            let u = rand_vec(&mut rng, n, 0.5);
            let v = rand_vec(&mut rng, n, 1.0);
            let w = rand_vec(&mut rng, n, 1.0);

            let h_prime = fd_check(
                |x| eval_h(&problem, &map, x),
                dot(&eval_h_prime(&problem, &map, &u), &v),
                &u,
                &v,
            );
            let h_second = fd_check(
                |x| dot(&eval_h_prime(&problem, &map, x), &w),
                dot(&eval_h_second(&problem, &map, &u).apply(&v), &w),
                &u,
                &v,
            );
            let j_prime = fd_check(
                |x| eval_j(&map, &pairs, x, theta),
                dot(&eval_j_prime(&map, &pairs, &u, theta), &v),
                &u,
                &v,
            );
            for (label, report) in [("H'", &h_prime), ("H''", &h_second), ("J'", &j_prime)] {
                assert!(
                    report.passes(1e-6),
                    "{label} disagrees with finite differences on {omega:?} state {state}: \
                     claimed {:e}, fd {:e}, rel {:e}",
                    report.claimed,
                    report.best_fd,
                    report.best_rel
                );
                worst = worst.max(report.best_rel);
            }
        }
    }
    println!(
        "criterion 5 (derivative consistency): PASS — 180 checks, worst relative gap {worst:.2e}"
    );
}

/// The sampled form inequalities behind the rate theory hold with the
/// estimated constants on 100 random states per suite problem, the
/// assembled operators are symmetric (X also PSD), and every recovered
/// normal traction is compressive.
#[test]
fn c6_sampled_form_inequalities_hold() {
    for name in suite_names() {
        let suite = build_suite(name).unwrap();
        let problem = &suite.problem;
        let map = DofMap::new(problem);
        let pairs = problem.build_pairs().unwrap();
        let n = map.n_free();
        let a = assemble_a(problem, &map).unwrap();
        let v0 = assemble_v0_norm(problem, &map).unwrap();
        let k = estimate_constants(
            problem,
            &map,
            &pairs,
            Some(suite.theta),
            SUITE_CONSTANT_SAMPLES,
            SUITE_CONSTANTS_SEED,
        )
        .unwrap();

        assert!(
            a.asymmetry() <= 1e-12 * a.max_abs(),
            "{name}: A asymmetry {:e} above 1e-12 relative",
            a.asymmetry()
        );
        let masks = policy_masks(&CharFnPolicy::RobinRobin, &map, &pairs, &vec![0.0; n]);
        let x = assemble_x(&map, &pairs, &masks, suite.theta);
        assert!(
            x.asymmetry() <= 1e-12 * x.max_abs().max(1.0),
            "{name}: X asymmetry {:e}",
            x.asymmetry()
        );

        let mut rng = ChaCha8Rng::seed_from_u64(0x9e0b_ab1e);
        for state in 0..100 {
            let u = rand_vec(&mut rng, n, 1.0);
            let v = rand_vec(&mut rng, n, 1.0);
            let w = rand_vec(&mut rng, n, 1.0);
            let nv = v0.quadratic_form(&v, &v).max(0.0).sqrt();
            let nw = v0.quadratic_form(&w, &w).max(0.0).sqrt();

            // X is positive semidefinite along every sampled direction.
            let xq = x.quadratic_form(&v, &v);
            assert!(
                xq >= -1e-12 * x.max_abs() * dot(&v, &v),
                "{name} state {state}: X quadratic form {xq:e} negative"
            );

            // hardening margin: 2 H(u) <= (1 - C) A(u, u).
            let two_h = 2.0 * eval_h(problem, &map, &u);
            let bound = (1.0 - k.c) * a.quadratic_form(&u, &u);
            assert!(
                two_h <= bound * (1.0 + 1e-12) + 1e-12,
                "{name} state {state}: 2H = {two_h:e} exceeds (1 - C) A(u,u) = {bound:e}"
            );

            // uniform ellipticity of the linearized operator.
            let hpp = eval_h_second(problem, &map, &u);
            let lhs = a.quadratic_form(&v, &v) - hpp.quadratic_form(&v, &v);
            assert!(
                lhs >= k.b * nv * nv * (1.0 - 1e-12) - 1e-12,
                "{name} state {state}: A(v,v) - H''(u;v,v) = {lhs:e} below B |v|^2 = {:e}",
                k.b * nv * nv
            );

            // the penalty gradient is D-tilde-Lipschitz and monotone.
            let jp_u = eval_j_prime(&map, &pairs, &u, suite.theta);
            let u_plus_w: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
            let jp_uw = eval_j_prime(&map, &pairs, &u_plus_w, suite.theta);
            let delta = dot(&sub(&jp_uw, &jp_u), &v).abs();
            assert!(
                delta <= k.d_tilde * nv * nw * (1.0 + 1e-12) + 1e-12,
                "{name} state {state}: |J'(u+w,v) - J'(u,v)| = {delta:e} above D-tilde |v||w| = {:e}",
                k.d_tilde * nv * nw
            );
            let u_plus_v: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let jp_uv = eval_j_prime(&map, &pairs, &u_plus_v, suite.theta);
            let mono = dot(&sub(&jp_uv, &jp_u), &v);
            assert!(
                mono >= -1e-12 * nv * nv,
                "{name} state {state}: penalty gradient not monotone: {mono:e}"
            );

            // recovered normal traction is never tensile.
            let audit = audit_with(&map, &pairs, &u, suite.theta);
            assert!(
                audit.sigma_n_max <= 0.0,
                "{name} state {state}: tensile recovered traction {:e}",
                audit.sigma_n_max
            );
        }
    }
    println!(
        "criterion 6 (property suite): PASS — 400 sampled states across {} problems",
        suite_names().len()
    );
}

/// Geometry-driven retagging of the stacked-blocks problem onto rollers:
/// x = 0 edges slide vertically, the bottom slides horizontally, x = 1
/// stays free. Keeps the uniform-pressure solution exactly representable.
fn roller_patch_stack(p: f64) -> MultiBodyProblem {
    let mut problem = generate_stacked_blocks(2, 4, 0.0, p).unwrap();
    for body in &mut problem.bodies {
        let nodes = body.mesh.nodes.clone();
        for edge in &mut body.mesh.boundary_edges {
            if edge.tag != TAG_DIRICHLET && edge.tag != TAG_FREE {
                continue; // interface and load tags stay as generated
            }
            let [a, b] = edge.nodes;
            let on = |f: &dyn Fn(&[f64; 2]) -> f64| f(&nodes[a]).abs() < 1e-12 && f(&nodes[b]).abs() < 1e-12;
            edge.tag = if on(&|n| n[0]) {
                TAG_ROLLER_X.into()
            } else if on(&|n| n[1]) {
                TAG_ROLLER_Y.into()
            } else {
                TAG_FREE.into()
            };
        }
    }
    problem.validate().expect("roller stack is a valid problem");
    problem
}

/// Two stacked identical blocks under uniform pressure recover the analytic
/// plane-strain state: sigma_yy = -p and sigma_xx = sigma_xy = 0 in every
/// element (to 1% of p), and the interface traction is -p to 1%.
#[test]
fn c7_uniform_pressure_patch_test() {
    let p = 1.0;
    let theta = 1e-6;
    let problem = roller_patch_stack(p);
    // tolerance above the 1/theta floating-point noise floor of the gradient
    let sol = solve_monolithic_penalty(&problem, theta, 1e-10).unwrap();
    let map = DofMap::new(&problem);

    let mut worst = 0.0f64;
    for (b, body) in problem.bodies.iter().enumerate() {
        for e in 0..body.mesh.elements.len() {
            let [sxx, syy, sxy] = element_stress(&problem, &map, &sol.state.u, b, e);
            for (label, got, want) in [("sigma_xx", sxx, 0.0), ("sigma_yy", syy, -p), ("sigma_xy", sxy, 0.0)] {
                let err = (got - want).abs();
                assert!(
                    err <= 0.01 * p,
                    "body {b} element {e}: {label} = {got:e}, want {want:e} within 1% of p"
                );
                worst = worst.max(err);
            }
        }
    }

    let audit = contact_audit(&problem, &sol.state, theta).unwrap();
    for (label, got) in [("max", audit.sigma_n_max), ("min", audit.sigma_n_min)] {
        assert!(
            (got + p).abs() <= 0.01 * p,
            "recovered normal traction {label} = {got:e}, want -p within 1%"
        );
    }
    println!(
        "criterion 7 (patch test): PASS — worst stress deviation {worst:.2e}, traction in [{:.6}, {:.6}]",
        audit.sigma_n_min, audit.sigma_n_max
    );
}

/// Splitting the unit square by a bonded interface changes nothing: the
/// mismatch stays under theta times the problem's traction scale, and the
/// theta-extrapolated split solution matches the unsplit solve at every
/// shared node.
#[test]
fn c8_ideal_interface_reproduces_the_unsplit_body() {
    let load = 1.0;
    let split = generate_split_square(4, load).unwrap();
    let unsplit = generate_square(4, load).unwrap();

    // Unsplit reference: a single clamped body, solved directly.
    let umap = DofMap::new(&unsplit);
    let a = assemble_a(&unsplit, &umap).unwrap();
    let l = assemble_l(&unsplit, &umap);
    let u_ref = DisplacementState {
        u: solve_spd(&a, &l, 1e-13, 60 * umap.n_free().max(4)).unwrap(),
    };
    let traction_scale = (0..unsplit.bodies[0].mesh.elements.len())
        .map(|e| {
            let [sxx, syy, sxy] = element_stress(&unsplit, &umap, &u_ref.u, 0, e);
            sxx.abs().max(syy.abs()).max(sxy.abs())
        })
        .fold(0.0, f64::max);
    assert!(traction_scale > 0.1 * load, "loaded square must carry stress");

    // Mismatch bound at a fixed penalty parameter.
    let theta = 1e-4;
    let sol_a = solve_monolithic_penalty(&split, theta, 1e-11).unwrap();
    let audit = contact_audit(&split, &sol_a.state, theta).unwrap();
    assert!(
        audit.ideal_mismatch <= theta * traction_scale,
        "interface mismatch {:e} exceeds theta x traction scale = {:e}",
        audit.ideal_mismatch,
        theta * traction_scale
    );

    // Theta-extrapolation: the penalty error is linear in theta, so
    // 2 u(theta/2) - u(theta) removes it to second order.
    let sol_b = solve_monolithic_penalty(&split, theta / 2.0, 1e-11).unwrap();
    let smap = DofMap::new(&split);
    let mut worst = 0.0f64;
    for (b, body) in split.bodies.iter().enumerate() {
        for (node, xy) in body.mesh.nodes.iter().enumerate() {
            let shared = unsplit.bodies[0]
                .mesh
                .nodes
                .iter()
                .position(|q| (q[0] - xy[0]).abs() < 1e-9 && (q[1] - xy[1]).abs() < 1e-9)
                .unwrap_or_else(|| panic!("split node {xy:?} has no unsplit twin"));
            let coarse = sol_a.state.nodal(&smap, b, node);
            let fine = sol_b.state.nodal(&smap, b, node);
            let want = u_ref.nodal(&umap, 0, shared);
            for c in 0..2 {
                let extrapolated = 2.0 * fine[c] - coarse[c];
                worst = worst.max((extrapolated - want[c]).abs());
            }
        }
    }
    assert!(
        worst <= 1e-6,
        "extrapolated split solution misses the unsplit solve by {worst:e}"
    );
    println!(
        "criterion 8 (ideal-contact consistency): PASS — mismatch {:.2e} <= {:.2e}, extrapolated node gap {:.2e}",
        audit.ideal_mismatch,
        theta * traction_scale,
        worst
    );
}

/// Serial and parallel runs of the same configuration produce identical
/// histories and identical states, byte for byte.
#[test]
fn c9_serial_and_parallel_runs_are_identical() {
    let suite = build_suite("blocks3-linear").unwrap();
    let case = bench_cases().into_iter().find(|c| c.name == "robin").unwrap();
    let run = |serial: bool| {
        let mut config = case_config(&suite, &case, 0.03, suite.tol_rel, 1_200);
        config.serial = serial;
        solve(&suite.problem, &config).unwrap()
    };
    let (state_s, history_s) = run(true);
    let (state_p, history_p) = run(false);
    assert_eq!(history_s.converged, history_p.converged);
    assert_eq!(history_s.to_csv(), history_p.to_csv(), "CSV histories differ");
    assert_eq!(state_s.u, state_p.u, "final states differ");
    println!(
        "criterion 9 (determinism): PASS — {} iterations, identical CSV and state",
        history_s.records.len()
    );
}
