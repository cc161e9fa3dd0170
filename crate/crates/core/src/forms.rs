//! Global variational forms over the finite-element space: the elastic
//! bilinear form A, the load functional L, the nonlinear energy H with its
//! first and second Gateaux derivatives, and numeric estimation of the
//! constants that drive the relaxation-parameter choice.
//!
//! All integrands are polynomial on each P1 triangle, so one-point (volume)
//! and endpoint (edge) rules integrate them exactly:
//!
//! ```text
//! A(u,v) = sum_a int [ lambda Theta(u) Theta(v) + 2 mu sum_ij eps_ij(u) eps_ij(v) ] dOmega
//! L(v)   = sum_a [ int f . v dOmega + int_{Gamma^sigma} p . v dS ]
//! H(u)   = sum_a 3 int mu W(e(u)) dOmega,          W(t) = int_0^t z omega(z) dz
//! H'(u,v)  = 2 int mu omega(e(u)) <e(u), e(v)> dOmega
//! H''(u;v,w) = 2 int mu [ omega(e) <e_w, e_v>
//!            + omega'(e) (2/(3e)) <e_u, e_w> <e_u, e_v> ] dOmega
//! ```
//!
//! where `<.,.>` is the full deviator contraction (off-diagonal pairs count
//! twice) and the omega'-term of H'' is taken as 0 when e(u) <= 1e-14 — its
//! limit, since <e_u, .> shrinks linearly with e.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dof::DofMap;
use crate::material::{dev_inner, element_strain, MaterialModel, StrainState};
use crate::mesh::{doubled_area, shape_gradients, ContactPair, MeshError, MultiBodyProblem};
use crate::penalty::{assemble_j_hessian, eval_j_prime};
use crate::sparse::{dot, eliminate_dirichlet, solve_spd, SparseSym, Triplets};

/// Sparse symmetric operator over the free dofs.
pub type AssembledOperator = SparseSym;

/// Threshold under which the deformation intensity counts as zero and the
/// removable-singularity term of H'' is dropped.
const INTENSITY_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("eigen-iteration did not converge within {max_iters} iterations (last quotient {last:e})")]
    EigenIteration { max_iters: usize, last: f64 },
    #[error(transparent)]
    Linear(#[from] crate::sparse::LinearSolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Strain rows of the three shape functions: per local dof (node a,
/// component c), the element strain (e11, e22, e12) it induces.
fn strain_rows(grads: &[[f64; 2]; 3]) -> [[f64; 3]; 6] {
    let mut rows = [[0.0f64; 3]; 6];
    for a in 0..3 {
        let [gx, gy] = grads[a];
        rows[2 * a] = [gx, 0.0, 0.5 * gy];
        rows[2 * a + 1] = [0.0, gy, 0.5 * gx];
    }
    rows
}

fn deviator4_of(row: &[f64; 3]) -> [f64; 4] {
    let third = (row[0] + row[1]) / 3.0;
    [row[0] - third, row[1] - third, -third, row[2]]
}

fn element_nodal(map: &DofMap, u: &[f64], body: usize, el: &[usize; 3]) -> [[f64; 2]; 3] {
    let mut out = [[0.0f64; 2]; 3];
    for (k, &node) in el.iter().enumerate() {
        for c in 0..2 {
            if let Some(fi) = map.free_index(body, node, c) {
                out[k][c] = u[fi];
            }
        }
    }
    out
}

/// Assembles the elastic bilinear form A over free dofs (block-diagonal per
/// body; exact for P1 by one-point quadrature).
pub fn assemble_a(problem: &MultiBodyProblem, map: &DofMap) -> Result<AssembledOperator, MeshError> {
    let mut t = Triplets::new(map.n_full());
    for (b, body) in problem.bodies.iter().enumerate() {
        let MaterialModel { lambda, mu, .. } = body.material;
        for (e, el) in body.mesh.elements.iter().enumerate() {
            let coords = body.mesh.element_coords(e);
            let sg = shape_gradients(&coords).map_err(|err| MeshError::InvertedElement {
                body: body.mesh.body_id,
                element: e,
                area: 0.5 * err.doubled_area,
            })?;
            let rows = strain_rows(&sg.grads);
            for j in 0..6 {
                let sj = rows[j];
                let tj = sj[0] + sj[1];
                for k in 0..6 {
                    let sk = rows[k];
                    let tk = sk[0] + sk[1];
                    let val = sg.area
                        * (lambda * tj * tk
                            + 2.0 * mu * (sj[0] * sk[0] + sj[1] * sk[1] + 2.0 * sj[2] * sk[2]));
                    t.push(
                        map.full_index(b, el[j / 2], j % 2),
                        map.full_index(b, el[k / 2], k % 2),
                        val,
                    );
                }
            }
        }
    }
    let zeros = vec![0.0; map.n_full()];
    Ok(eliminate_dirichlet(&t, &zeros, map.constrained_mask()).0)
}

/// Assembles the load vector: constant volume forces (one third of the
/// element load per node) and constant edge tractions (half per endpoint),
/// both exact for P1.
pub fn assemble_l(problem: &MultiBodyProblem, map: &DofMap) -> Vec<f64> {
    let mut l = vec![0.0; map.n_free()];
    let mut add = |body: usize, node: usize, contribution: [f64; 2]| {
        for c in 0..2 {
            if let Some(fi) = map.free_index(body, node, c) {
                l[fi] += contribution[c];
            }
        }
    };
    for (b, body) in problem.bodies.iter().enumerate() {
        let f = body.body_force;
        if f != [0.0, 0.0] {
            for (e, el) in body.mesh.elements.iter().enumerate() {
                let area = 0.5 * doubled_area(&body.mesh.element_coords(e));
                for &node in el {
                    add(b, node, [f[0] * area / 3.0, f[1] * area / 3.0]);
                }
            }
        }
        for (tag, p) in &problem.tractions {
            for be in body.mesh.edges_with_tag(tag) {
                let (n0, n1) = (be.nodes[0], be.nodes[1]);
                let (a, bb) = (body.mesh.nodes[n0], body.mesh.nodes[n1]);
                let len = ((a[0] - bb[0]).powi(2) + (a[1] - bb[1]).powi(2)).sqrt();
                for node in [n0, n1] {
                    add(b, node, [0.5 * len * p[0], 0.5 * len * p[1]]);
                }
            }
        }
    }
    l
}

/// Per-element strain of an iterate (panics on degenerate geometry, which
/// validation rules out).
fn strain_of(map: &DofMap, u: &[f64], problem: &MultiBodyProblem, b: usize, e: usize) -> StrainState {
    let body = &problem.bodies[b];
    let coords = body.mesh.element_coords(e);
    let disp = element_nodal(map, u, b, &body.mesh.elements[e]);
    element_strain(&coords, &disp).expect("validated mesh has no degenerate elements")
}

/// In-plane Cauchy stress `[sigma_xx, sigma_yy, sigma_xy]` of one element
/// under the body's law `sigma = lambda Theta I + 2 mu eps - 2 mu omega(e) dev(eps)`.
///
/// P1 strain is constant per element, so this is the exact element stress,
/// handy for patch tests and traction recovery.
pub fn element_stress(
    problem: &MultiBodyProblem,
    map: &DofMap,
    u: &[f64],
    body: usize,
    element: usize,
) -> [f64; 3] {
    let mat = &problem.bodies[body].material;
    let s = strain_of(map, u, problem, body, element);
    let theta = s.theta();
    let dev = s.deviator4();
    let om = mat.omega.eval(s.intensity());
    [
        mat.lambda * theta + 2.0 * mat.mu * s.e11 - 2.0 * mat.mu * om * dev[0],
        mat.lambda * theta + 2.0 * mat.mu * s.e22 - 2.0 * mat.mu * om * dev[1],
        2.0 * mat.mu * s.e12 - 2.0 * mat.mu * om * dev[3],
    ]
}

/// Nonlinear deformation energy H(u).
pub fn eval_h(problem: &MultiBodyProblem, map: &DofMap, u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (b, body) in problem.bodies.iter().enumerate() {
        let mu = body.material.mu;
        let omega = body.material.omega;
        for e in 0..body.mesh.elements.len() {
            let area = 0.5 * doubled_area(&body.mesh.element_coords(e));
            let s = strain_of(map, u, problem, b, e);
            acc += 3.0 * mu * area * omega.energy_integral(s.intensity());
        }
    }
    acc
}

/// Gradient vector r of the nonlinear energy: r . v = H'(u, v).
pub fn eval_h_prime(problem: &MultiBodyProblem, map: &DofMap, u: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; map.n_free()];
    for (b, body) in problem.bodies.iter().enumerate() {
        let mu = body.material.mu;
        let omega = body.material.omega;
        for (e, el) in body.mesh.elements.iter().enumerate() {
            let coords = body.mesh.element_coords(e);
            let sg = shape_gradients(&coords).expect("validated mesh");
            let s = strain_of(map, u, problem, b, e);
            let om = omega.eval(s.intensity());
            if om == 0.0 {
                continue;
            }
            let dev_u = s.deviator4();
            let rows = strain_rows(&sg.grads);
            let coeff = 2.0 * mu * sg.area * om;
            for j in 0..6 {
                let dev_j = deviator4_of(&rows[j]);
                if let Some(fi) = map.free_index(b, el[j / 2], j % 2) {
                    r[fi] += coeff * dev_inner(&dev_u, &dev_j);
                }
            }
        }
    }
    r
}

/// Second derivative of H at u as a sparse symmetric matrix M:
/// w^T M v = H''(u; v, w).
pub fn eval_h_second(problem: &MultiBodyProblem, map: &DofMap, u: &[f64]) -> SparseSym {
    let mut t = Triplets::new(map.n_full());
    for (b, body) in problem.bodies.iter().enumerate() {
        let mu = body.material.mu;
        let omega = body.material.omega;
        for (e, el) in body.mesh.elements.iter().enumerate() {
            let coords = body.mesh.element_coords(e);
            let sg = shape_gradients(&coords).expect("validated mesh");
            let s = strain_of(map, u, problem, b, e);
            let intensity = s.intensity();
            let om = omega.eval(intensity);
            let omp = omega.deriv(intensity);
            if om == 0.0 && omp == 0.0 {
                continue;
            }
            let rows = strain_rows(&sg.grads);
            let devs: Vec<[f64; 4]> = rows.iter().map(deviator4_of).collect();
            let dev_u = s.deviator4();
            // chain-rule weights <e_u, e_j>, zeroed at the removable singularity
            let chain: Vec<f64> = if intensity > INTENSITY_FLOOR && omp != 0.0 {
                devs.iter().map(|d| dev_inner(&dev_u, d)).collect()
            } else {
                vec![0.0; 6]
            };
            let chain_coeff = if intensity > INTENSITY_FLOOR {
                omp * 2.0 / (3.0 * intensity)
            } else {
                0.0
            };
            let base = 2.0 * mu * sg.area;
            for j in 0..6 {
                for k in 0..6 {
                    let val = base
                        * (om * dev_inner(&devs[j], &devs[k])
                            + chain_coeff * chain[j] * chain[k]);
                    t.push(
                        map.full_index(b, el[j / 2], j % 2),
                        map.full_index(b, el[k / 2], k % 2),
                        val,
                    );
                }
            }
        }
    }
    let zeros = vec![0.0; map.n_full()];
    eliminate_dirichlet(&t, &zeros, map.constrained_mask()).0
}

/// The fixed discrete V0 inner product: omega-independent stiffness plus
/// lumped mass. Every constant below is relative to this norm.
pub fn assemble_v0_norm(
    problem: &MultiBodyProblem,
    map: &DofMap,
) -> Result<SparseSym, MeshError> {
    let a = assemble_a(problem, map)?;
    let mut t = Triplets::new(map.n_full());
    for (b, body) in problem.bodies.iter().enumerate() {
        for (e, el) in body.mesh.elements.iter().enumerate() {
            let area = 0.5 * doubled_area(&body.mesh.element_coords(e));
            for &node in el {
                for c in 0..2 {
                    t.push(
                        map.full_index(b, node, c),
                        map.full_index(b, node, c),
                        area / 3.0,
                    );
                }
            }
        }
    }
    let zeros = vec![0.0; map.n_full()];
    let mass = eliminate_dirichlet(&t, &zeros, map.constrained_mask()).0;
    Ok(a.add_scaled(&mass, 1.0))
}

const EIGEN_TOL: f64 = 1e-9;
const LANCZOS_MAX_STEPS: usize = 160;
const INNER_CG_TOL: f64 = 1e-11;

/// Largest generalized eigenvalue of M x = lambda N x (M symmetric, N SPD).
pub fn max_gen_eig(m: &SparseSym, n: &SparseSym) -> Result<f64, FormsError> {
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    Ok(lanczos_extremes(m, n, false, true)?.1)
}

/// Smallest generalized eigenvalue of M x = lambda N x (M symmetric, N SPD).
pub fn min_gen_eig(m: &SparseSym, n: &SparseSym) -> Result<f64, FormsError> {
    Ok(lanczos_extremes(m, n, true, false)?.0)
}

/// Both extreme generalized eigenvalues of (M, N): (min, max).
pub fn eigen_range(m: &SparseSym, n: &SparseSym) -> Result<(f64, f64), FormsError> {
    lanczos_extremes(m, n, true, true)
}

/// N-orthogonal Lanczos on N^{-1} M with full reorthogonalization. Only N is
/// ever inverted (it is SPD by construction), never M, so indefinite or
/// rank-deficient M is fine. The requested extremes of the growing
/// tridiagonal (found by Sturm bisection) must hold still for three
/// consecutive steps; a Krylov-space breakdown means the restriction is
/// exact and returns immediately.
fn lanczos_extremes(
    m: &SparseSym,
    n: &SparseSym,
    want_min: bool,
    want_max: bool,
) -> Result<(f64, f64), FormsError> {
    let dim = n.dim();
    assert_eq!(m.dim(), dim, "eigen pencil dimensions differ");
    if dim == 0 {
        return Ok((0.0, 0.0));
    }
    let steps = LANCZOS_MAX_STEPS.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(0x0eed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nrm = n.quadratic_form(&v, &v).sqrt();
    for x in &mut v {
        *x /= nrm;
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut nbasis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut last = (f64::NAN, f64::NAN);
    let mut extremes = (f64::NAN, f64::NAN);
    let mut stable = 0usize;

    for j in 0..steps {
        nbasis.push(n.apply(&v));
        basis.push(v);
        alphas.push(m.quadratic_form(&basis[j], &basis[j]));
        let mv = m.apply(&basis[j]);
        let mut w = solve_spd(n, &mv, INNER_CG_TOL, 20 * dim.max(10))?;
        // full reorthogonalization (twice) subsumes the three-term recurrence
        for _ in 0..2 {
            for i in 0..=j {
                let c = dot(&w, &nbasis[i]);
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= c * vk;
                }
            }
        }
        let beta = dot(&w, &n.apply(&w)).max(0.0).sqrt();

        extremes = tridiag_extremes(&alphas, &betas);
        let scale = alphas
            .iter()
            .chain(betas.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
            .max(1e-300);
        if beta <= 1e-13 * scale {
            return Ok(extremes); // invariant subspace: restriction is exact
        }
        let span = extremes.0.abs().max(extremes.1.abs()).max(1e-300);
        let lo_ok = !want_min || (extremes.0 - last.0).abs() <= EIGEN_TOL * span;
        let hi_ok = !want_max || (extremes.1 - last.1).abs() <= EIGEN_TOL * span;
        if lo_ok && hi_ok {
            stable += 1;
            if stable >= 3 {
                return Ok(extremes);
            }
        } else {
            stable = 0;
        }
        last = extremes;

        betas.push(beta);
        v = w;
        for x in &mut v {
            *x /= beta;
        }
    }
    if steps == dim {
        return Ok(extremes); // Krylov space complete: spectrum is exact
    }
    Err(FormsError::EigenIteration {
        max_iters: steps,
        last: if want_max { last.1 } else { last.0 },
    })
}

/// Eigenvalues of the symmetric tridiagonal strictly below x, by counting
/// negative pivots of the shifted LDL^T factorization.
fn sturm_count_below(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0f64;
    for (i, &a) in alphas.iter().enumerate() {
        let b2 = if i == 0 { 0.0 } else { betas[i - 1] * betas[i - 1] };
        d = (a - x) - b2 / d;
        if d == 0.0 {
            d = -f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Extreme eigenvalues of the symmetric tridiagonal (diagonal `alphas`,
/// off-diagonal `betas`) by Sturm bisection inside the Gershgorin interval.
fn tridiag_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let m = alphas.len();
    debug_assert!(betas.len() + 1 >= m);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = (if i > 0 { betas[i - 1].abs() } else { 0.0 })
            + (if i + 1 < m { betas[i].abs() } else { 0.0 });
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    let tol = 1e-13 * scale;
    if hi - lo <= tol {
        return (alphas[0], alphas[0]);
    }
    let (lo, hi) = (lo - tol, hi + tol);
    let bisect = |threshold: usize| -> f64 {
        let (mut a, mut b) = (lo, hi);
        while b - a > tol {
            let mid = 0.5 * (a + b);
            if sturm_count_below(alphas, &betas[..m - 1], mid) >= threshold {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(1), bisect(m))
}

/// Numerically estimated form constants, all relative to the discrete V0
/// norm. Names follow the convergence theory: M_A/B_A are the continuity and
/// coercivity bounds of A; C the energy-domination margin of H; D and
/// D-tilde the Lipschitz bounds of H' and J'; B the uniform ellipticity of
/// A - H''; R and R-tilde boundedness witnesses of H' and J'.
#[derive(Debug, Clone, Copy)]
pub struct FormConstants {
    pub m_a: f64,
    pub b_a: f64,
    pub c: f64,
    pub d: f64,
    pub b: f64,
    pub d_tilde: f64,
    pub r: f64,
    pub r_tilde: f64,
}

/// Estimates all form constants.
///
/// M_A and B_A come from extreme generalized eigenvalues of A against the V0
/// product; B minimizes the smallest eigenvalue of A - H''(u) over sampled
/// iterates; D maximizes the largest eigenvalue of H''(u); D-tilde is the
/// extreme eigenvalue of the worst-case (all-active) penalty Hessian; C is
/// the analytic hardening margin 1 - sup omega; R and R-tilde are sampled
/// residual extrema. Lower bounds are rounded down 5%, upper bounds up 5%.
///
/// Pass the built pairs and theta to include the penalty terms; without them
/// D-tilde = R-tilde = 0 (no contact).
pub fn estimate_constants(
    problem: &MultiBodyProblem,
    map: &DofMap,
    pairs: &[ContactPair],
    theta: Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<FormConstants, FormsError> {
    assert!(n_samples >= 2);
    let a = assemble_a(problem, map)?;
    let norm = assemble_v0_norm(problem, map)?;
    let dim = map.n_free();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = [0.1, 1.0, 10.0];
    let sample = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
        let s = scales[k % scales.len()];
        (0..dim).map(|_| rng.gen_range(-s..s)).collect()
    };

    let (b_a_raw, m_a_raw) = eigen_range(&a, &norm)?;

    // B: ellipticity of A - H'' over sampled base points; D: its complement,
    // the largest curvature of H. A handful of base points suffices because
    // admissible omega keeps both within fixed multiples of the A-range.
    let eigen_points = 5.min(n_samples);
    let mut b_raw = f64::INFINITY;
    let mut d_raw: f64 = 0.0;
    for k in 0..eigen_points {
        let u = sample(&mut rng, k);
        let hpp = eval_h_second(problem, map, &u);
        let g = a.add_scaled(&hpp, -1.0);
        b_raw = b_raw.min(min_gen_eig(&g, &norm)?);
        d_raw = d_raw.max(max_gen_eig(&hpp, &norm)?);
    }

    // C: since W(t) <= (sup omega) t^2/2 and 2 mu int <dev,dev> <= A(u,u),
    // the margin 1 - sup omega dominates 1 - 2H/A for every u — a proven
    // bound, where sampling could only ever overestimate the infimum.
    let c_raw = 1.0
        - problem
            .bodies
            .iter()
            .fold(0.0f64, |acc, b| acc.max(b.material.omega.sup()));

    // R / R-tilde: dual-norm residual witnesses over samples
    let dual_norm = |r: &[f64]| -> Result<f64, FormsError> {
        if r.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let z = solve_spd(&norm, r, INNER_CG_TOL, 20 * dim.max(10))?;
        Ok(dot(r, &z).max(0.0).sqrt())
    };
    let mut r_raw: f64 = 0.0;
    let mut r_tilde_raw: f64 = 0.0;
    for k in 0..n_samples {
        let u = sample(&mut rng, k);
        r_raw = r_raw.max(dual_norm(&eval_h_prime(problem, map, &u))?);
        if let Some(th) = theta {
            r_tilde_raw = r_tilde_raw.max(dual_norm(&eval_j_prime(map, pairs, &u, th))?);
        }
    }

    // D-tilde: J' is monotone and piecewise linear with slopes between 0 and
    // the all-active penalty Hessian, whose extreme eigenvalue is therefore a
    // true Lipschitz bound.
    let d_tilde_raw = match theta {
        Some(th) if !pairs.is_empty() => {
            let all_active: Vec<Vec<f64>> =
                pairs.iter().map(|p| vec![1.0; p.samples.len()]).collect();
            let y = assemble_j_hessian(map, pairs, &all_active, th);
            max_gen_eig(&y, &norm)?
        }
        _ => 0.0,
    };

    Ok(FormConstants {
        m_a: m_a_raw * 1.05,
        b_a: b_a_raw * 0.95,
        c: (c_raw * 0.95).max(0.0),
        d: d_raw * 1.05,
        b: b_raw * 0.95,
        d_tilde: d_tilde_raw * 1.05,
        r: r_raw * 1.05,
        r_tilde: r_tilde_raw * 1.05,
    })
}
