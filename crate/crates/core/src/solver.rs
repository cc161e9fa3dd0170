//! The parallel domain-decomposition iterations.
//!
//! Every scheme is one relaxation loop around independent per-body solves.
//! With Phi(u) = A u - H'(u) + J'_theta(u) and a body-block-diagonal
//! G = A + X (stationary), G^k = A + X^k (nonstationary), or
//! G^k = A - H''(u^k) + X^k (Newton-like), the update is
//!
//! ```text
//! G^k (u~ - u^k) = L - Phi(u^k)        (N independent body-local solves)
//! u^{k+1} = gamma u~ + (1 - gamma) u^k
//! ```
//!
//! which is the residual form of the interface iteration
//! A(u~,v) + X(u~,v) = L(v) + X(u^k,v) + H'(u^k,v) - J'_theta(u^k,v): the
//! right-hand side of each body's equation reads only iteration-k data of
//! the other bodies, so the subdomain solves run in parallel and any
//! execution order gives bit-identical results.
//!
//! The optimal relaxation parameter is gamma* = B_Phi B_G / D_Phi^2 with the
//! substitutions B_G = B_A, B_Phi = B, D_Phi = M_A + D + D-tilde taken from
//! the estimated form constants.

use rayon::prelude::*;
use thiserror::Error;

use crate::dof::{DisplacementState, DofMap};
use crate::forms::{
    assemble_a, assemble_l, estimate_constants, eval_h, eval_h_prime, eval_h_second,
    FormConstants, FormsError,
};
use crate::mesh::{ContactPair, MeshError, MultiBodyProblem};
use crate::penalty::{
    active_set_size, assemble_x, eval_j, eval_j_prime, max_penetration, policy_masks,
    PenaltyConfig,
};
use crate::sparse::{dot, norm2, solve_spd, LinearSolveError, SparseSym};

/// Relative tolerance of the inner per-body conjugate-gradient solves. Kept
/// well below the outer defaults so the fixed-point property of the outer
/// iteration survives the inner truncation.
const SUBDOMAIN_TOL: f64 = 1e-12;
/// Samples used when `auto` gamma estimates the form constants.
const AUTO_GAMMA_SAMPLES: usize = 8;
/// Seed for the constant-estimation sampling under `auto` gamma.
const AUTO_GAMMA_SEED: u64 = 0x5eed_c0de;
/// Consecutive step-norm growths that count as divergence.
const DIVERGENCE_GROWTHS: usize = 10;

/// Which bilinear form drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// G = A + X fixed for the whole run.
    Stationary,
    /// G^k = A + X^k with the policy masks refreshed from u^k.
    Nonstationary,
    /// G^k = A - H''(u^k) + X^k.
    NewtonLike,
}

/// Relaxation parameter source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Value(f64),
    /// gamma-hat* from estimated constants.
    Auto,
}

/// Full iteration setup. `new` fills the defaults; adjust fields directly.
#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub scheme: Scheme,
    pub gamma: GammaChoice,
    pub penalty: PenaltyConfig,
    /// Threshold for both stopping tests (relative G-norm step and relative
    /// residual).
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Halve gamma after two consecutive step-norm growths.
    pub gamma_safeguard: bool,
    /// Force sequential subdomain solves (determinism debugging; results
    /// are bit-identical either way).
    pub serial: bool,
    /// Start iterating from this free-dof vector instead of zero.
    pub warm_start: Option<Vec<f64>>,
    /// Keep a copy of every iterate in the history (memory ~ iterations x
    /// dofs; meant for rate studies on small problems).
    pub record_iterates: bool,
}

impl IterationConfig {
    pub fn new(penalty: PenaltyConfig) -> IterationConfig {
        IterationConfig {
            scheme: Scheme::Stationary,
            gamma: GammaChoice::Auto,
            penalty,
            tol_rel: 1e-8,
            max_iters: 10_000,
            gamma_safeguard: true,
            serial: false,
            warm_start: None,
            record_iterates: false,
        }
    }
}

/// One convergence-history row; `k` counts accepted updates from 1.
#[derive(Debug, Clone, Copy)]
pub struct HistoryRecord {
    pub k: usize,
    /// ||u^k - u^{k-1}||_G under the iteration's current G.
    pub step_g: f64,
    /// ||Phi(u^k) - L||_2 over the free dofs.
    pub residual: f64,
    /// Penalty energy F_theta(u^k).
    pub energy: f64,
    pub max_penetration: f64,
    /// Active unilateral quadrature points at u^k.
    pub active_set: usize,
}

/// Per-run record of every iteration plus bookkeeping the schemes expose for
/// inspection (gammas after safeguarding, policy masks per refresh, matrix
/// rebuild count). Only the six per-iteration columns go to CSV.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceHistory {
    pub records: Vec<HistoryRecord>,
    pub converged: bool,
    /// gamma actually used at each iteration (visible safeguard halvings).
    pub gammas: Vec<f64>,
    /// Policy masks in effect at each iteration, recorded when the scheme
    /// refreshes them (empty for stationary runs).
    pub mask_history: Vec<Vec<Vec<f64>>>,
    /// How many times the per-body matrices were (re)built: 1 for
    /// stationary, one per mask change for nonstationary, one per iteration
    /// for Newton-like.
    pub matrix_builds: usize,
    /// Every iterate u^0, u^1, ... when `record_iterates` was set (empty
    /// otherwise).
    pub iterates: Vec<Vec<f64>>,
}

impl ConvergenceHistory {
    /// Machine-readable history: `k,step_G,residual,energy,max_penetration,active_set`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,step_G,residual,energy,max_penetration,active_set\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{}\n",
                r.k, r.step_g, r.residual, r.energy, r.max_penetration, r.active_set
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid iteration config: {0}")]
    InvalidConfig(String),
    #[error(
        "iteration diverged at k = {k}: step norm grew for {consecutive} consecutive iterations"
    )]
    Divergence {
        k: usize,
        consecutive: usize,
        history: ConvergenceHistory,
    },
    #[error("subdomain matrix lost coercivity at iteration {k} (Newton-like curvature exceeded the elastic form): {source}")]
    CoercivityLoss {
        k: usize,
        source: LinearSolveError,
        /// Iterate at the failure, for post-mortem inspection.
        iterate: Vec<f64>,
    },
    #[error("subdomain solve failed at iteration {k}: {source}")]
    Subdomain {
        k: usize,
        source: LinearSolveError,
    },
    #[error("gamma-star needs positive constants: B_Phi = {b_phi:e}, B_G = {b_g:e}, D_Phi = {d_phi:e}")]
    NonPositiveConstants { b_phi: f64, b_g: f64, d_phi: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Forms(#[from] FormsError),
}

/// Optimal relaxation parameter and its admissible interval.
#[derive(Debug, Clone, Copy)]
pub struct GammaStar {
    pub gamma: f64,
    /// The convergent open interval (0, 2 gamma*).
    pub interval: (f64, f64),
}

/// gamma* = B_Phi B_G / D_Phi^2 with B_G = B_A, B_Phi = B and
/// D_Phi = M_A + D + D-tilde. The policy and theta in force enter through
/// the constants themselves (D-tilde is estimated at the run's theta), so
/// the formula needs nothing beyond `FormConstants`.
pub fn gamma_star(k: &FormConstants) -> Result<GammaStar, SolverError> {
    let (b_phi, b_g, d_phi) = (k.b, k.b_a, k.m_a + k.d + k.d_tilde);
    if !(b_phi > 0.0 && b_g > 0.0 && d_phi > 0.0) {
        return Err(SolverError::NonPositiveConstants { b_phi, b_g, d_phi });
    }
    let gamma = b_phi * b_g / (d_phi * d_phi);
    Ok(GammaStar {
        gamma,
        interval: (0.0, 2.0 * gamma),
    })
}

/// Solves one body's local equation — the alpha-block of G u~ = G u^k +
/// (L - Phi(u^k)) — and returns u~_alpha. `residual_alpha` is the body's
/// slice of L - Phi(u^k), so a body whose full right-hand side vanishes
/// comes back as u~_alpha = 0 exactly.
pub fn subdomain_solve(
    g_alpha: &SparseSym,
    u_alpha: &[f64],
    residual_alpha: &[f64],
) -> Result<Vec<f64>, LinearSolveError> {
    let delta = solve_spd(
        g_alpha,
        residual_alpha,
        SUBDOMAIN_TOL,
        60 * g_alpha.dim().max(4),
    )?;
    Ok(u_alpha
        .iter()
        .zip(&delta)
        .map(|(u, d)| u + d)
        .collect())
}

/// Runs the configured scheme from u0 = 0 (or the warm start) and returns
/// the final state with its full history. Convergence means both stopping
/// tests passed; hitting `max_iters` returns normally with
/// `history.converged == false`. Divergence and subdomain failures are
/// errors.
pub fn solve(
    problem: &MultiBodyProblem,
    config: &IterationConfig,
) -> Result<(DisplacementState, ConvergenceHistory), SolverError> {
    let theta = config.penalty.theta;
    if !(theta > 0.0) {
        return Err(SolverError::InvalidConfig(format!(
            "penalty theta must be positive, got {theta}"
        )));
    }
    if !(config.tol_rel > 0.0) {
        return Err(SolverError::InvalidConfig(format!(
            "tol_rel must be positive, got {}",
            config.tol_rel
        )));
    }
    if config.max_iters == 0 {
        return Err(SolverError::InvalidConfig("max_iters must be at least 1".into()));
    }
    if config.scheme == Scheme::Stationary && config.penalty.policy.is_nonstationary() {
        return Err(SolverError::InvalidConfig(
            "the dirichlet-dirichlet policy refreshes its masks every iteration; \
             use the nonstationary or newton-like scheme"
                .into(),
        ));
    }
    if let GammaChoice::Value(g) = config.gamma {
        if !(g > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "gamma must be positive, got {g}"
            )));
        }
    }

    let map = DofMap::new(problem);
    let pairs = problem.build_pairs()?;
    let a = assemble_a(problem, &map)?;
    let l = assemble_l(problem, &map);
    let l_scale = norm2(&l).max(f64::MIN_POSITIVE);

    let mut gamma = match config.gamma {
        GammaChoice::Value(g) => g,
        GammaChoice::Auto => {
            let k = estimate_constants(
                problem,
                &map,
                &pairs,
                Some(theta),
                AUTO_GAMMA_SAMPLES,
                AUTO_GAMMA_SEED,
            )?;
            gamma_star(&k)?.gamma
        }
    };

    let mut u = match &config.warm_start {
        Some(w) => {
            if w.len() != map.n_free() {
                return Err(SolverError::InvalidConfig(format!(
                    "warm start has {} dofs, problem has {}",
                    w.len(),
                    map.n_free()
                )));
            }
            w.clone()
        }
        None => vec![0.0; map.n_free()],
    };

    let body_ranges: Vec<std::ops::Range<usize>> =
        (0..problem.n_bodies()).map(|b| map.body_range(b)).collect();
    let refresh_masks = config.scheme != Scheme::Stationary;
    let mut history = ConvergenceHistory::default();

    let mut masks = policy_masks(&config.penalty.policy, &map, &pairs, &u);
    let mut blocks = build_blocks(problem, &map, &a, &pairs, &masks, theta, config.scheme, &u)?;
    history.matrix_builds += 1;

    let phi_of = |u: &[f64]| -> Vec<f64> {
        let mut phi = a.apply(u);
        let hp = eval_h_prime(problem, &map, u);
        let jp = eval_j_prime(&map, &pairs, u, theta);
        for i in 0..phi.len() {
            phi[i] += jp[i] - hp[i];
        }
        phi
    };
    let g_norm = |blocks: &[SparseSym], v: &[f64]| -> f64 {
        body_ranges
            .iter()
            .zip(blocks)
            .map(|(r, g)| g.quadratic_form(&v[r.clone()], &v[r.clone()]))
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    };

    let mut phi = phi_of(&u);
    let mut prev_step: Option<f64> = None;
    let mut growths = 0usize;
    let mut safeguard_growths = 0usize;
    if config.record_iterates {
        history.iterates.push(u.clone());
    }

    for k in 1..=config.max_iters {
        if refresh_masks {
            let new_masks = policy_masks(&config.penalty.policy, &map, &pairs, &u);
            let masks_changed = new_masks != masks;
            if masks_changed {
                masks = new_masks;
            }
            if masks_changed || config.scheme == Scheme::NewtonLike {
                blocks =
                    build_blocks(problem, &map, &a, &pairs, &masks, theta, config.scheme, &u)?;
                history.matrix_builds += 1;
            }
            history.mask_history.push(masks.clone());
        }

        let residual_vec: Vec<f64> = l.iter().zip(&phi).map(|(li, pi)| li - pi).collect();
        let solve_body = |b: usize| -> Result<Vec<f64>, SolverError> {
            let r = body_ranges[b].clone();
            subdomain_solve(&blocks[b], &u[r.clone()], &residual_vec[r]).map_err(|e| {
                if config.scheme == Scheme::NewtonLike
                    && matches!(e, LinearSolveError::NotPositiveDefinite(_))
                {
                    SolverError::CoercivityLoss {
                        k,
                        source: e,
                        iterate: u.clone(),
                    }
                } else {
                    SolverError::Subdomain { k, source: e }
                }
            })
        };
        let tildes: Vec<Vec<f64>> = if config.serial {
            (0..problem.n_bodies())
                .map(solve_body)
                .collect::<Result<_, _>>()?
        } else {
            (0..problem.n_bodies())
                .into_par_iter()
                .map(solve_body)
                .collect::<Result<_, _>>()?
        };

        let mut step = vec![0.0; map.n_free()];
        for (r, tilde) in body_ranges.iter().zip(&tildes) {
            for (i, t) in r.clone().zip(tilde) {
                step[i] = gamma * (t - u[i]);
            }
        }
        let u_next: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + s).collect();
        let step_g = g_norm(&blocks, &step);

        let phi_next = phi_of(&u_next);
        let residual = norm2(
            &l.iter()
                .zip(&phi_next)
                .map(|(li, pi)| li - pi)
                .collect::<Vec<f64>>(),
        );
        let energy = 0.5 * a.quadratic_form(&u_next, &u_next) - eval_h(problem, &map, &u_next)
            - dot(&l, &u_next)
            + eval_j(&map, &pairs, &u_next, theta);
        history.records.push(HistoryRecord {
            k,
            step_g,
            residual,
            energy,
            max_penetration: max_penetration(&map, &pairs, &u_next),
            active_set: active_set_size(&map, &pairs, &u_next),
        });
        history.gammas.push(gamma);

        let grew = match prev_step {
            // strictly beyond roundoff jitter; non-finite steps count as growth
            Some(p) => !(step_g <= p * (1.0 + 1e-12)),
            None => false,
        };
        prev_step = Some(step_g);
        u = u_next;
        phi = phi_next;
        if config.record_iterates {
            history.iterates.push(u.clone());
        }

        let u_g = g_norm(&blocks, &u);
        if step_g <= config.tol_rel * u_g.max(f64::MIN_POSITIVE)
            && residual <= config.tol_rel * l_scale
        {
            history.converged = true;
            break;
        }

        if grew {
            growths += 1;
            safeguard_growths += 1;
        } else {
            growths = 0;
            safeguard_growths = 0;
        }
        if growths >= DIVERGENCE_GROWTHS {
            return Err(SolverError::Divergence {
                k,
                consecutive: growths,
                history,
            });
        }
        if config.gamma_safeguard && safeguard_growths >= 2 {
            gamma *= 0.5;
            safeguard_growths = 0;
        }
    }

    Ok((DisplacementState { u }, history))
}

/// `solve` with the scheme forced to Nonstationary.
pub fn solve_nonstationary(
    problem: &MultiBodyProblem,
    config: &IterationConfig,
) -> Result<(DisplacementState, ConvergenceHistory), SolverError> {
    let mut c = config.clone();
    c.scheme = Scheme::Nonstationary;
    solve(problem, &c)
}

/// `solve` with the scheme forced to NewtonLike.
pub fn solve_newton_like(
    problem: &MultiBodyProblem,
    config: &IterationConfig,
) -> Result<(DisplacementState, ConvergenceHistory), SolverError> {
    let mut c = config.clone();
    c.scheme = Scheme::NewtonLike;
    solve(problem, &c)
}

/// Per-body principal blocks of the iteration matrix. Block extraction
/// doubles as the structural proof that A, X, and H'' never couple bodies.
fn build_blocks(
    problem: &MultiBodyProblem,
    map: &DofMap,
    a: &SparseSym,
    pairs: &[ContactPair],
    masks: &[Vec<f64>],
    theta: f64,
    scheme: Scheme,
    u: &[f64],
) -> Result<Vec<SparseSym>, SolverError> {
    let x = assemble_x(map, pairs, masks, theta);
    let mut g = a.add_scaled(&x, 1.0);
    if scheme == Scheme::NewtonLike {
        let hpp = eval_h_second(problem, map, u);
        g = g.add_scaled(&hpp, -1.0);
    }
    Ok((0..problem.n_bodies())
        .map(|b| {
            let r = map.body_range(b);
            g.principal_block(r.start, r.end)
        })
        .collect())
}
