//! Penalty treatment of the contact constraints and the interface bilinear
//! forms that drive the decomposition schemes.
//!
//! The penalty functional is
//!
//! ```text
//! J_theta(u) = 1/(2 theta) * sum_unilateral ||(d - u_an - u_bn)^-||^2_L2
//!            + 1/(2 theta) * sum_ideal     ||u_a - u_b||^2_L2
//! ```
//!
//! with `y^- = min(0, y)`, and its Gateaux derivative is
//!
//! ```text
//! J'_theta(u, v) = -1/theta * sum int (d - u_an - u_bn)^- (v_an + v_bn) dS
//!                +  1/theta * sum int (u_a - u_b) . (v_a - v_b) dS.
//! ```
//!
//! The interface form that augments the subdomain operators is
//!
//! ```text
//! X(u, v) = 1/theta * sum_a [ sum_b  int u_an v_an psi dS
//!                           + sum_b' int u_a . v_a phi dS ],
//! ```
//!
//! a mass-like form touching one body per term — X is block-diagonal over
//! bodies, which is exactly what makes the subdomain solves independent. The
//! 0/1 fields psi, phi select the scheme: all zero gives Neumann-Neumann,
//! all one Robin-Robin, and the active-set indicator gives the nonstationary
//! Dirichlet-Dirichlet scheme.
//!
//! All interface integrals, including the `min` and the active-set
//! indicator, are evaluated at the 2-point Gauss points of the contact
//! samples, so J, J', X, and the convergence monitors are mutually
//! consistent by construction.

use crate::dof::DofMap;
use crate::mesh::{ContactPair, ContactSample, MultiBodyProblem, PairKind};
use crate::sparse::{eliminate_dirichlet, SparseSym, Triplets};

#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// Penalty parameter θ > 0 (compliance: displacement per stress).
    pub theta: f64,
    pub policy: CharFnPolicy,
}

/// Choice of the characteristic functions ψ (unilateral) and φ (ideal).
#[derive(Debug, Clone, PartialEq)]
pub enum CharFnPolicy {
    /// ψ ≡ 0, φ ≡ 0: subdomain operators are the plain elastic blocks.
    NeumannNeumann,
    /// ψ ≡ 1, φ ≡ 1: every interface contributes its mass to both sides.
    RobinRobin,
    /// ψ = 1 / φ = 1 exactly on pairs one of whose tags is listed.
    SubsetRobin { tags: Vec<String> },
    /// ψᵏ = active-set indicator of the current iterate, φ ≡ 1.
    DirichletDirichletNonstationary,
}

impl CharFnPolicy {
    /// Whether ψ depends on the iterate (X must be reassembled as it moves).
    pub fn is_nonstationary(&self) -> bool {
        matches!(self, CharFnPolicy::DirichletDirichletNonstationary)
    }
}

/// Default penalty parameter: 1e-4 x mean element size / mean mu, so the
/// penalty stiffness 1/theta dominates the material stiffness by several
/// orders at desk scale.
pub fn default_theta(problem: &MultiBodyProblem) -> f64 {
    let mean_mu: f64 = problem
        .bodies
        .iter()
        .map(|b| b.material.mu)
        .sum::<f64>()
        / problem.n_bodies() as f64;
    1e-4 * problem.mean_element_size() / mean_mu
}

fn nodal(map: &DofMap, u: &[f64], body: usize, node: usize) -> [f64; 2] {
    let get = |c: usize| map.free_index(body, node, c).map_or(0.0, |i| u[i]);
    [get(0), get(1)]
}

/// Displacement interpolated at a sample point of one side.
fn side_disp(
    map: &DofMap,
    u: &[f64],
    body: usize,
    nodes: &[usize; 2],
    shape: &[f64; 2],
) -> [f64; 2] {
    let a = nodal(map, u, body, nodes[0]);
    let b = nodal(map, u, body, nodes[1]);
    [
        shape[0] * a[0] + shape[1] * b[0],
        shape[0] * a[1] + shape[1] * b[1],
    ]
}

/// d - u_an - u_bn at a unilateral sample (negative = penetration).
fn gap_arg(map: &DofMap, u: &[f64], pair: &ContactPair, s: &ContactSample) -> f64 {
    let ua = side_disp(map, u, pair.body_a, &s.nodes_a, &s.shape_a);
    let ub = side_disp(map, u, pair.body_b, &s.nodes_b, &s.shape_b);
    let uan = ua[0] * s.normal_a[0] + ua[1] * s.normal_a[1];
    let ubn = ub[0] * s.normal_b[0] + ub[1] * s.normal_b[1];
    s.gap - uan - ubn
}

/// u_a - u_b at an ideal sample.
fn mismatch(map: &DofMap, u: &[f64], pair: &ContactPair, s: &ContactSample) -> [f64; 2] {
    let ua = side_disp(map, u, pair.body_a, &s.nodes_a, &s.shape_a);
    let ub = side_disp(map, u, pair.body_b, &s.nodes_b, &s.shape_b);
    [ua[0] - ub[0], ua[1] - ub[1]]
}

/// The penalty functional J_theta(u).
pub fn eval_j(map: &DofMap, pairs: &[ContactPair], u: &[f64], theta: f64) -> f64 {
    let mut acc = 0.0;
    for pair in pairs {
        for s in &pair.samples {
            match pair.kind {
                PairKind::Unilateral => {
                    let neg = gap_arg(map, u, pair, s).min(0.0);
                    acc += s.weight * neg * neg;
                }
                PairKind::Ideal => {
                    let m = mismatch(map, u, pair, s);
                    acc += s.weight * (m[0] * m[0] + m[1] * m[1]);
                }
            }
        }
    }
    acc / (2.0 * theta)
}

/// Gradient vector j of the penalty functional: j . v = J'_theta(u, v).
pub fn eval_j_prime(map: &DofMap, pairs: &[ContactPair], u: &[f64], theta: f64) -> Vec<f64> {
    let mut j = vec![0.0; map.n_free()];
    let mut scatter = |body: usize, nodes: &[usize; 2], coeff: [f64; 2], shape: &[f64; 2]| {
        for (local, &node) in nodes.iter().enumerate() {
            for c in 0..2 {
                if let Some(fi) = map.free_index(body, node, c) {
                    j[fi] += shape[local] * coeff[c];
                }
            }
        }
    };
    for pair in pairs {
        for s in &pair.samples {
            match pair.kind {
                PairKind::Unilateral => {
                    let neg = gap_arg(map, u, pair, s).min(0.0);
                    if neg < 0.0 {
                        // -1/theta * neg * (v_an + v_bn), weighted
                        let c = -s.weight * neg / theta;
                        scatter(
                            pair.body_a,
                            &s.nodes_a,
                            [c * s.normal_a[0], c * s.normal_a[1]],
                            &s.shape_a,
                        );
                        scatter(
                            pair.body_b,
                            &s.nodes_b,
                            [c * s.normal_b[0], c * s.normal_b[1]],
                            &s.shape_b,
                        );
                    }
                }
                PairKind::Ideal => {
                    let m = mismatch(map, u, pair, s);
                    let c = s.weight / theta;
                    scatter(pair.body_a, &s.nodes_a, [c * m[0], c * m[1]], &s.shape_a);
                    scatter(
                        pair.body_b,
                        &s.nodes_b,
                        [-c * m[0], -c * m[1]],
                        &s.shape_b,
                    );
                }
            }
        }
    }
    j
}

/// Active-set indicator χ at each sample of a unilateral pair:
/// 0 where d - u_an - u_bn >= 0 (separated, ties included), 1 where < 0.
/// For ideal pairs the interface is always bonded: all ones.
pub fn active_set_chi(map: &DofMap, u: &[f64], pair: &ContactPair) -> Vec<f64> {
    pair.samples
        .iter()
        .map(|s| match pair.kind {
            PairKind::Ideal => 1.0,
            PairKind::Unilateral => {
                if gap_arg(map, u, pair, s) >= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        })
        .collect()
}

/// Ties-active variant of [`active_set_chi`]: 1 where d - u_an - u_bn <= 0.
///
/// At the kink of the negative-part function both branches are admissible
/// generalized derivatives. The iteration's χ takes the separated branch;
/// the monolithic reference solver takes this one, so that a body
/// restrained only through contact keeps a nonsingular Jacobian when the
/// start iterate touches the obstacle exactly.
pub fn jacobian_chi(map: &DofMap, u: &[f64], pair: &ContactPair) -> Vec<f64> {
    pair.samples
        .iter()
        .map(|s| match pair.kind {
            PairKind::Ideal => 1.0,
            PairKind::Unilateral => {
                if gap_arg(map, u, pair, s) > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        })
        .collect()
}

/// ψ/φ sample masks of a policy at the iterate `u` (`u` only matters for the
/// nonstationary active-set policy).
pub fn policy_masks(
    policy: &CharFnPolicy,
    map: &DofMap,
    pairs: &[ContactPair],
    u: &[f64],
) -> Vec<Vec<f64>> {
    pairs
        .iter()
        .map(|pair| match policy {
            CharFnPolicy::NeumannNeumann => vec![0.0; pair.samples.len()],
            CharFnPolicy::RobinRobin => vec![1.0; pair.samples.len()],
            CharFnPolicy::SubsetRobin { tags } => {
                let on = tags.iter().any(|t| *t == pair.tag_a || *t == pair.tag_b);
                vec![if on { 1.0 } else { 0.0 }; pair.samples.len()]
            }
            CharFnPolicy::DirichletDirichletNonstationary => active_set_chi(map, u, pair),
        })
        .collect()
}

/// Assembles the interface form X for the given per-sample masks.
///
/// Unilateral pairs contribute the normal-displacement mass of each side to
/// that side's own block; ideal pairs contribute the full vector mass.
/// The result couples no two bodies.
pub fn assemble_x(
    map: &DofMap,
    pairs: &[ContactPair],
    masks: &[Vec<f64>],
    theta: f64,
) -> SparseSym {
    assert_eq!(pairs.len(), masks.len());
    let mut t = Triplets::new(map.n_full());
    for (pair, mask) in pairs.iter().zip(masks) {
        for (s, &m) in pair.samples.iter().zip(mask) {
            if m == 0.0 {
                continue;
            }
            let w = m * s.weight / theta;
            match pair.kind {
                PairKind::Unilateral => {
                    // per side: w * (v_n shape_i)(u_n shape_j)
                    for (body, nodes, shape, normal) in [
                        (pair.body_a, &s.nodes_a, &s.shape_a, &s.normal_a),
                        (pair.body_b, &s.nodes_b, &s.shape_b, &s.normal_b),
                    ] {
                        for i in 0..2 {
                            for j in 0..2 {
                                for ci in 0..2 {
                                    for cj in 0..2 {
                                        t.push(
                                            map.full_index(body, nodes[i], ci),
                                            map.full_index(body, nodes[j], cj),
                                            w * shape[i] * normal[ci] * shape[j] * normal[cj],
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
                PairKind::Ideal => {
                    for (body, nodes, shape) in [
                        (pair.body_a, &s.nodes_a, &s.shape_a),
                        (pair.body_b, &s.nodes_b, &s.shape_b),
                    ] {
                        for i in 0..2 {
                            for j in 0..2 {
                                for c in 0..2 {
                                    t.push(
                                        map.full_index(body, nodes[i], c),
                                        map.full_index(body, nodes[j], c),
                                        w * shape[i] * shape[j],
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let zeros = vec![0.0; map.n_full()];
    eliminate_dirichlet(&t, &zeros, map.constrained_mask()).0
}

/// Coupled second-derivative form of the penalty functional for a frozen
/// active set: active unilateral samples contribute
/// (1/theta) ∫ (v_an + v_bn)(w_an + w_bn) dS and ideal samples contribute
/// (1/theta) ∫ (v_a - v_b).(w_a - w_b) dS. Unlike X, this couples the two
/// sides of each pair — it is the true Hessian block of J_theta wherever the
/// active set does not change, used by the monolithic solver and as the
/// Lipschitz witness for J'.
pub fn assemble_j_hessian(
    map: &DofMap,
    pairs: &[ContactPair],
    active: &[Vec<f64>],
    theta: f64,
) -> SparseSym {
    assert_eq!(pairs.len(), active.len());
    let mut t = Triplets::new(map.n_full());
    // scatter w * q q^T for a sparse column q given as (full index, value)
    let mut rank_one = |q: &[(usize, f64)], w: f64| {
        for &(i, qi) in q {
            for &(j, qj) in q {
                t.push(i, j, w * qi * qj);
            }
        }
    };
    for (pair, mask) in pairs.iter().zip(active) {
        for (s, &m) in pair.samples.iter().zip(mask) {
            if m == 0.0 {
                continue;
            }
            let w = m * s.weight / theta;
            match pair.kind {
                PairKind::Unilateral => {
                    // q^T v = v_an + v_bn
                    let mut q = Vec::with_capacity(8);
                    for i in 0..2 {
                        for c in 0..2 {
                            q.push((
                                map.full_index(pair.body_a, s.nodes_a[i], c),
                                s.shape_a[i] * s.normal_a[c],
                            ));
                            q.push((
                                map.full_index(pair.body_b, s.nodes_b[i], c),
                                s.shape_b[i] * s.normal_b[c],
                            ));
                        }
                    }
                    rank_one(&q, w);
                }
                PairKind::Ideal => {
                    // one rank-one term per component: q_c^T v = v_a,c - v_b,c
                    for c in 0..2 {
                        let mut q = Vec::with_capacity(4);
                        for i in 0..2 {
                            q.push((map.full_index(pair.body_a, s.nodes_a[i], c), s.shape_a[i]));
                            q.push((map.full_index(pair.body_b, s.nodes_b[i], c), -s.shape_b[i]));
                        }
                        rank_one(&q, w);
                    }
                }
            }
        }
    }
    let zeros = vec![0.0; map.n_full()];
    eliminate_dirichlet(&t, &zeros, map.constrained_mask()).0
}

/// Largest pointwise penetration max(0, u_an + u_bn - d) over all unilateral
/// samples (0 when nothing penetrates).
pub fn max_penetration(map: &DofMap, pairs: &[ContactPair], u: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for pair in pairs {
        if pair.kind != PairKind::Unilateral {
            continue;
        }
        for s in &pair.samples {
            worst = worst.max(-gap_arg(map, u, pair, s));
        }
    }
    worst
}

/// Number of unilateral samples currently in contact (χ = 1).
pub fn active_set_size(map: &DofMap, pairs: &[ContactPair], u: &[f64]) -> usize {
    pairs
        .iter()
        .filter(|p| p.kind == PairKind::Unilateral)
        .map(|pair| {
            active_set_chi(map, u, pair)
                .iter()
                .filter(|&&chi| chi == 1.0)
                .count()
        })
        .sum()
}
