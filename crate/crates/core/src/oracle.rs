//! Independent reference computations: a monolithic (undecomposed) penalty
//! solver over the full coupled space, a central-difference derivative
//! checker, and a contact-condition auditor. These exist to cross-validate
//! the domain-decomposition iterations; none of them share the solver's
//! iteration path.

use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::dof::{DisplacementState, DofMap};
use crate::forms::{assemble_a, assemble_l, eval_h, eval_h_prime, eval_h_second, FormsError};
use crate::mesh::{ContactPair, MeshError, MultiBodyProblem, PairKind};
use crate::penalty::{assemble_j_hessian, eval_j, eval_j_prime, jacobian_chi, max_penetration};
use crate::sparse::{dot, norm2, LinearSolveError, SparseSym};

const NEWTON_MAX_ITERS: usize = 200;
const ARMIJO_C1: f64 = 1e-4;
const ARMIJO_MAX_HALVINGS: usize = 60;

/// Direct dense Cholesky solve. The reference path trades memory for
/// robustness: it must stay dependable at penalty stiffnesses (1/theta up
/// to ~1e10) where an iterative solve stagnates, and desk-scale systems
/// are small enough to factor outright.
fn solve_dense(m: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
    let n = m.dim();
    let dense = DMatrix::from_row_slice(n, n, &m.to_dense());
    let chol = dense.cholesky().ok_or_else(|| {
        LinearSolveError::NotPositiveDefinite("dense Cholesky factorization failed".into())
    })?;
    Ok(chol.solve(&DVector::from_column_slice(rhs)).data.into())
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("line search failed at Newton iteration {iteration} (energy {energy:e}): no Armijo step after {ARMIJO_MAX_HALVINGS} halvings")]
    LineSearchFailure { iteration: usize, energy: f64 },
    #[error("monolithic Newton did not converge in {max_iters} iterations (residual {residual:e})")]
    MaxIterations { max_iters: usize, residual: f64 },
    #[error(transparent)]
    Linear(#[from] LinearSolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Forms(#[from] FormsError),
}

/// Converged monolithic solve with its audit trail.
#[derive(Debug, Clone)]
pub struct MonolithicSolution {
    pub state: DisplacementState,
    /// Energy after each accepted step, starting with F_theta(u0); strictly
    /// decreasing by the Armijo rule.
    pub energies: Vec<f64>,
    /// Final gradient norm ||F'_theta(u)||_2.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves the penalty-regularized problem over the full coupled space by a
/// damped semismooth Newton method on F_theta: the Jacobian freezes the
/// negative-part branch per iteration (ties count as active, unlike the
/// iteration's chi — see [`jacobian_chi`]), the step is A - H'' + J''
/// against -F' by a direct dense factorization, and Armijo backtracking
/// makes every accepted step an energy descent. Converged means
/// ||F'|| <= tol * ||L||.
pub fn solve_monolithic_penalty(
    problem: &MultiBodyProblem,
    theta: f64,
    tol: f64,
) -> Result<MonolithicSolution, OracleError> {
    assert!(theta > 0.0 && tol > 0.0);
    let map = DofMap::new(problem);
    let pairs = problem.build_pairs()?;
    let a = assemble_a(problem, &map)?;
    let l = assemble_l(problem, &map);
    let l_scale = norm2(&l).max(f64::MIN_POSITIVE);

    let energy = |u: &[f64]| -> f64 {
        0.5 * a.quadratic_form(u, u) - eval_h(problem, &map, u) - dot(&l, u)
            + eval_j(&map, &pairs, u, theta)
    };
    let gradient = |u: &[f64]| -> Vec<f64> {
        let mut g = a.apply(u);
        let hp = eval_h_prime(problem, &map, u);
        let jp = eval_j_prime(&map, &pairs, u, theta);
        for i in 0..g.len() {
            g[i] += jp[i] - hp[i] - l[i];
        }
        g
    };

    let mut u = vec![0.0; map.n_free()];
    let mut f = energy(&u);
    let mut energies = vec![f];
    let mut residual = norm2(&gradient(&u));

    for iteration in 0..NEWTON_MAX_ITERS {
        if residual <= tol * l_scale {
            return Ok(MonolithicSolution {
                state: DisplacementState { u },
                energies,
                residual,
                iterations: iteration,
            });
        }
        let g = gradient(&u);
        // frozen-branch Hessian: A - H''(u) + J'' with the ties-active set
        // of u, so contact-only-restrained bodies keep a nonsingular step
        let masks: Vec<Vec<f64>> = pairs.iter().map(|p| jacobian_chi(&map, &u, p)).collect();
        let jpp = assemble_j_hessian(&map, &pairs, &masks, theta);
        let hpp = eval_h_second(problem, &map, &u);
        let hess = a.add_scaled(&hpp, -1.0).add_scaled(&jpp, 1.0);
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let d = solve_dense(&hess, &rhs)?;
        let slope = dot(&g, &d);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..ARMIJO_MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(ui, di)| ui + t * di).collect();
            let ft = energy(&trial);
            if ft <= f + ARMIJO_C1 * t * slope {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(OracleError::LineSearchFailure {
                iteration,
                energy: f,
            });
        }
        energies.push(f);
        residual = norm2(&gradient(&u));
    }
    if residual <= tol * l_scale {
        return Ok(MonolithicSolution {
            state: DisplacementState { u },
            energies,
            residual,
            iterations: NEWTON_MAX_ITERS,
        });
    }
    Err(OracleError::MaxIterations {
        max_iters: NEWTON_MAX_ITERS,
        residual,
    })
}

/// Central-difference check of a claimed directional derivative.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// Step that achieved the best agreement.
    pub best_h: f64,
    /// Best relative disagreement |fd - claimed| / max(|fd|, |claimed|, eps).
    pub best_rel: f64,
    pub claimed: f64,
    pub best_fd: f64,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.best_rel <= tol
    }
}

/// Sweeps central differences of F at u along v over h in {1e-4, 1e-5,
/// 1e-6}, scaled by the sizes of u and v, and reports the step with the
/// best relative agreement against the claimed derivative.
pub fn fd_check(
    f: impl Fn(&[f64]) -> f64,
    claimed: f64,
    u: &[f64],
    v: &[f64],
) -> FdReport {
    let scale = (1.0 + norm2(u)) / (1.0 + norm2(v));
    let mut best = FdReport {
        best_h: f64::NAN,
        best_rel: f64::INFINITY,
        claimed,
        best_fd: f64::NAN,
    };
    for h in [1e-4, 1e-5, 1e-6] {
        let t = h * scale;
        let up: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + t * b).collect();
        let um: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - t * b).collect();
        let fd = (f(&up) - f(&um)) / (2.0 * t);
        let rel = (fd - claimed).abs() / fd.abs().max(claimed.abs()).max(1e-300);
        if rel < best.best_rel {
            best = FdReport {
                best_h: h,
                best_rel: rel,
                claimed,
                best_fd: fd,
            };
        }
    }
    best
}

/// Contact-condition audit of a displacement state.
#[derive(Debug, Clone, Copy, Default)]
pub struct AuditReport {
    /// max over unilateral samples of (u_an + u_bn - d)^+.
    pub max_penetration: f64,
    /// Largest recovered normal traction (must be <= 0: it is a clamped
    /// negative branch by construction).
    pub sigma_n_max: f64,
    /// Most negative recovered normal traction (the contact pressure).
    pub sigma_n_min: f64,
    /// max |(u_an + u_bn - d) sigma_n| over separated samples.
    pub complementarity: f64,
    /// max over ideal samples of ||u_a - u_b||_2.
    pub ideal_mismatch: f64,
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "max_penetration: {:e}", self.max_penetration)?;
        writeln!(f, "sigma_n_max: {:e}", self.sigma_n_max)?;
        writeln!(f, "sigma_n_min: {:e}", self.sigma_n_min)?;
        writeln!(f, "complementarity: {:e}", self.complementarity)?;
        write!(f, "ideal_mismatch: {:e}", self.ideal_mismatch)
    }
}

/// Evaluates the contact conditions at every interface quadrature point:
/// penetration, the penalty-recovered normal traction
/// sigma_n = (1/theta)(d - u_an - u_bn)^-, the complementarity residual on
/// separated points, and the ideal-pair mismatch.
pub fn contact_audit(
    problem: &MultiBodyProblem,
    u: &DisplacementState,
    theta: f64,
) -> Result<AuditReport, MeshError> {
    let map = DofMap::new(problem);
    let pairs = problem.build_pairs()?;
    Ok(audit_with(&map, &pairs, &u.u, theta))
}

/// `contact_audit` over prebuilt pairs (shared by tests and the CLI).
pub fn audit_with(map: &DofMap, pairs: &[ContactPair], u: &[f64], theta: f64) -> AuditReport {
    let mut report = AuditReport {
        max_penetration: max_penetration(map, pairs, u),
        sigma_n_max: f64::NEG_INFINITY,
        sigma_n_min: f64::INFINITY,
        ..AuditReport::default()
    };
    let mut unilateral_samples = 0usize;
    let side = |nodes: &[usize; 2], shape: &[f64; 2], body: usize| -> [f64; 2] {
        let mut val = [0.0; 2];
        for (node, w) in nodes.iter().zip(shape) {
            for c in 0..2 {
                if let Some(fi) = map.free_index(body, *node, c) {
                    val[c] += w * u[fi];
                }
            }
        }
        val
    };
    for pair in pairs {
        for s in &pair.samples {
            let ua = side(&s.nodes_a, &s.shape_a, pair.body_a);
            let ub = side(&s.nodes_b, &s.shape_b, pair.body_b);
            match pair.kind {
                PairKind::Unilateral => {
                    unilateral_samples += 1;
                    let arg =
                        s.gap - (ua[0] * s.normal_a[0] + ua[1] * s.normal_a[1])
                            - (ub[0] * s.normal_b[0] + ub[1] * s.normal_b[1]);
                    let sigma_n = arg.min(0.0) / theta;
                    report.sigma_n_max = report.sigma_n_max.max(sigma_n);
                    report.sigma_n_min = report.sigma_n_min.min(sigma_n);
                    if arg >= 0.0 {
                        report.complementarity =
                            report.complementarity.max((arg * sigma_n).abs());
                    }
                }
                PairKind::Ideal => {
                    let m = ((ua[0] - ub[0]).powi(2) + (ua[1] - ub[1]).powi(2)).sqrt();
                    report.ideal_mismatch = report.ideal_mismatch.max(m);
                }
            }
        }
    }
    if unilateral_samples == 0 {
        report.sigma_n_max = 0.0;
        report.sigma_n_min = 0.0;
    }
    report
}
