//! Bodies, tagged boundaries, and the pairing/projection structure of
//! unilateral and ideal contact interfaces.
//!
//! A problem is a list of disjoint plane bodies, each meshed with
//! counterclockwise P1 triangles. Boundary edges carry string tags that
//! partition the boundary: the reserved tag `dirichlet` marks the clamped
//! part, `free` marks zero traction, tags named by `traction` entries form
//! the loaded part, and tags named by contact pairs form the interfaces.
//!
//! Interfaces are matched: facing edge sets lie on straight segments that
//! agree up to the initial gap, so projection is nearest-point matching with
//! a tight tangential tolerance. The gap convention is
//! `d(x) = ||x - P(x)|| >= 0` (separation distance before deformation), so
//! nonpenetration reads `u_an + u_bn <= d`.

use std::collections::HashMap;

use thiserror::Error;

use crate::material::{MaterialModel, OmegaFn};

/// Relative tangential tolerance for interface point matching.
const MATCH_TOL_REL: f64 = 1e-8;
/// Angular tolerance (radians) for the normal-opposition check.
const NORMAL_TOL_RAD: f64 = 1e-6;

/// Reserved tag marking the clamped boundary part.
pub const TAG_DIRICHLET: &str = "dirichlet";
/// Reserved tag marking explicitly traction-free boundary.
pub const TAG_FREE: &str = "free";
/// Reserved roller tag: clamps the horizontal component only (a vertical
/// symmetry plane or frictionless vertical guide).
pub const TAG_ROLLER_X: &str = "roller-x";
/// Reserved roller tag: clamps the vertical component only (a horizontal
/// frictionless support).
pub const TAG_ROLLER_Y: &str = "roller-y";

/// Tags with built-in meaning; unusable as interface or traction labels.
pub fn is_reserved_tag(tag: &str) -> bool {
    tag == TAG_DIRICHLET || tag == TAG_FREE || tag == TAG_ROLLER_X || tag == TAG_ROLLER_Y
}

#[derive(Debug, Error)]
#[error("degenerate triangle {vertices:?} (doubled signed area {doubled_area:e})")]
pub struct DegenerateTriangle {
    pub vertices: [[f64; 2]; 3],
    pub doubled_area: f64,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("body {body}: element {element} has nonpositive signed area {area:e} (vertices must be counterclockwise)")]
    InvertedElement {
        body: usize,
        element: usize,
        area: f64,
    },
    #[error("body {body}: {context} references node {node} but the body has {n_nodes} nodes")]
    NodeOutOfRange {
        body: usize,
        context: String,
        node: usize,
        n_nodes: usize,
    },
    #[error("body {body}: edge ({n0},{n1}) borders {count} elements; the mesh is not a manifold with boundary")]
    NonManifoldEdge {
        body: usize,
        n0: usize,
        n1: usize,
        count: usize,
    },
    #[error("body {body}: boundary edge ({n0},{n1}) carries no tag")]
    UntaggedBoundaryEdge { body: usize, n0: usize, n1: usize },
    #[error("body {body}: tagged edge ({n0},{n1}) is not a boundary edge of the triangulation")]
    NotABoundaryEdge { body: usize, n0: usize, n1: usize },
    #[error("body {body}: boundary edge ({n0},{n1}) is tagged more than once")]
    DuplicateBoundaryEdge { body: usize, n0: usize, n1: usize },
    #[error("body {body}: no edge is tagged '{TAG_DIRICHLET}' or a roller; every body must be restrained somewhere")]
    GammaUEmpty { body: usize },
    #[error("body {body} has no edge tagged '{tag}' ({context})")]
    UnknownTag {
        body: usize,
        tag: String,
        context: String,
    },
    #[error("tag '{tag}': {details}")]
    TagConflict { tag: String, details: String },
    #[error("contact pair {body_a}/{body_b}: point ({x:.6}, {y:.6}) has no partner on the facing side (tangential miss {miss:e})")]
    UnmatchedInterfacePoint {
        body_a: usize,
        body_b: usize,
        x: f64,
        y: f64,
        miss: f64,
    },
    #[error("contact pair {body_a}/{body_b}: normals at ({x:.6}, {y:.6}) are not opposed (n_a . n_b = {dot:.9})")]
    NormalOpposition {
        body_a: usize,
        body_b: usize,
        x: f64,
        y: f64,
        dot: f64,
    },
    #[error("contact pair {index}: {reason}")]
    InvalidPair { index: usize, reason: String },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Doubled signed area of a triangle (positive when counterclockwise).
pub fn doubled_area(p: &[[f64; 2]; 3]) -> f64 {
    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])
}

/// Gradients of the three P1 shape functions on a triangle, plus its area.
#[derive(Debug, Clone, Copy)]
pub struct ShapeGradients {
    pub grads: [[f64; 2]; 3],
    pub area: f64,
}

pub fn shape_gradients(p: &[[f64; 2]; 3]) -> Result<ShapeGradients, DegenerateTriangle> {
    let d = doubled_area(p);
    if !(d > f64::EPSILON * 16.0 * diameter_sq(p)) {
        return Err(DegenerateTriangle {
            vertices: *p,
            doubled_area: d,
        });
    }
    // grad(phi_a) = rot90(opposite edge) / (2 |T|)
    let mut grads = [[0.0f64; 2]; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        grads[a] = [(p[b][1] - p[c][1]) / d, (p[c][0] - p[b][0]) / d];
    }
    Ok(ShapeGradients {
        grads,
        area: 0.5 * d,
    })
}

fn diameter_sq(p: &[[f64; 2]; 3]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..3 {
        for j in i + 1..3 {
            let dx = p[i][0] - p[j][0];
            let dy = p[i][1] - p[j][1];
            m = m.max(dx * dx + dy * dy);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: String,
}

/// Triangulation of one body with tagged boundary.
#[derive(Debug, Clone)]
pub struct BodyMesh {
    /// 1-based body index as written in problem files.
    pub body_id: usize,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

impl BodyMesh {
    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Map from unordered boundary edge to its counterclockwise orientation
    /// in the unique owning element. Fails on non-manifold connectivity.
    pub fn oriented_boundary(&self) -> Result<HashMap<(usize, usize), (usize, usize)>, MeshError> {
        let mut count: HashMap<(usize, usize), (usize, (usize, usize))> = HashMap::new();
        let mut multiplicity: HashMap<(usize, usize), usize> = HashMap::new();
        for el in &self.elements {
            for k in 0..3 {
                let (p, q) = (el[k], el[(k + 1) % 3]);
                let key = (p.min(q), p.max(q));
                *multiplicity.entry(key).or_insert(0) += 1;
                count.entry(key).or_insert((0, (p, q)));
            }
        }
        let mut oriented = HashMap::new();
        for (key, mult) in &multiplicity {
            if *mult > 2 {
                return Err(MeshError::NonManifoldEdge {
                    body: self.body_id,
                    n0: key.0,
                    n1: key.1,
                    count: *mult,
                });
            }
            if *mult == 1 {
                oriented.insert(*key, count[key].1);
            }
        }
        Ok(oriented)
    }

    /// Unit outer normal of a boundary edge: with the edge oriented p -> q
    /// counterclockwise around the body, the outward direction is (dy, -dx).
    pub fn outer_normal(&self, oriented: &(usize, usize)) -> [f64; 2] {
        let (p, q) = *oriented;
        let dx = self.nodes[q][0] - self.nodes[p][0];
        let dy = self.nodes[q][1] - self.nodes[p][1];
        let len = (dx * dx + dy * dy).sqrt();
        [dy / len, -dx / len]
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n_nodes = self.nodes.len();
        for (e, el) in self.elements.iter().enumerate() {
            for &n in el {
                if n >= n_nodes {
                    return Err(MeshError::NodeOutOfRange {
                        body: self.body_id,
                        context: format!("element {e}"),
                        node: n,
                        n_nodes,
                    });
                }
            }
            let area = 0.5 * doubled_area(&self.element_coords(e));
            if !(area > 0.0) {
                return Err(MeshError::InvertedElement {
                    body: self.body_id,
                    element: e,
                    area,
                });
            }
        }
        for be in &self.boundary_edges {
            for &n in &be.nodes {
                if n >= n_nodes {
                    return Err(MeshError::NodeOutOfRange {
                        body: self.body_id,
                        context: format!("boundary edge tagged '{}'", be.tag),
                        node: n,
                        n_nodes,
                    });
                }
            }
        }
        let oriented = self.oriented_boundary()?;
        let mut covered: HashMap<(usize, usize), usize> = HashMap::new();
        for be in &self.boundary_edges {
            let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
            if !oriented.contains_key(&key) {
                return Err(MeshError::NotABoundaryEdge {
                    body: self.body_id,
                    n0: be.nodes[0],
                    n1: be.nodes[1],
                });
            }
            let c = covered.entry(key).or_insert(0);
            *c += 1;
            if *c > 1 {
                return Err(MeshError::DuplicateBoundaryEdge {
                    body: self.body_id,
                    n0: key.0,
                    n1: key.1,
                });
            }
        }
        for key in oriented.keys() {
            if !covered.contains_key(key) {
                return Err(MeshError::UntaggedBoundaryEdge {
                    body: self.body_id,
                    n0: key.0,
                    n1: key.1,
                });
            }
        }
        Ok(())
    }

    /// All boundary edges carrying `tag`, in declaration order.
    pub fn edges_with_tag(&self, tag: &str) -> Vec<&BoundaryEdge> {
        self.boundary_edges
            .iter()
            .filter(|be| be.tag == tag)
            .collect()
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.boundary_edges.iter().any(|be| be.tag == tag)
    }
}

/// One body: mesh, material, volume force.
#[derive(Debug, Clone)]
pub struct Body {
    pub mesh: BodyMesh,
    pub material: MaterialModel,
    pub body_force: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Unilateral,
    Ideal,
}

impl std::fmt::Display for PairKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairKind::Unilateral => write!(f, "unilateral"),
            PairKind::Ideal => write!(f, "ideal"),
        }
    }
}

/// Contact pair as declared (bodies by 0-based index plus edge-set tags).
#[derive(Debug, Clone)]
pub struct PairSpec {
    pub kind: PairKind,
    pub body_a: usize,
    pub tag_a: String,
    pub body_b: usize,
    pub tag_b: String,
}

/// The whole problem: bodies, declared pairs, loads.
#[derive(Debug, Clone)]
pub struct MultiBodyProblem {
    pub bodies: Vec<Body>,
    pub pair_specs: Vec<PairSpec>,
    /// (tag, traction vector); applies to every edge with that tag.
    pub tractions: Vec<(String, [f64; 2])>,
}

impl MultiBodyProblem {
    pub fn n_bodies(&self) -> usize {
        self.bodies.len()
    }

    /// Diameter of the bounding box of all nodes (match-tolerance scale).
    pub fn domain_diameter(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for b in &self.bodies {
            for p in &b.mesh.nodes {
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Mean element size, measured as the average of sqrt(2 * area).
    pub fn mean_element_size(&self) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for b in &self.bodies {
            for e in 0..b.mesh.elements.len() {
                acc += doubled_area(&b.mesh.element_coords(e)).abs().sqrt();
                n += 1;
            }
        }
        acc / n as f64
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for body in &self.bodies {
            body.mesh.validate()?;
            // Rollers restrain a single component; a body held only by
            // rollers may still carry rigid modes, which is legitimate when
            // contact supplies the rest of the restraint (solvers report
            // honestly if it does not).
            if !(body.mesh.has_tag(TAG_DIRICHLET)
                || body.mesh.has_tag(TAG_ROLLER_X)
                || body.mesh.has_tag(TAG_ROLLER_Y))
            {
                return Err(MeshError::GammaUEmpty {
                    body: body.mesh.body_id,
                });
            }
            if !(body.material.lambda > 0.0 && body.material.mu > 0.0) {
                return Err(MeshError::BadParameter(format!(
                    "body {}: Lame parameters must be positive (lambda {}, mu {})",
                    body.mesh.body_id, body.material.lambda, body.material.mu
                )));
            }
        }
        let mut pair_tags: Vec<(usize, &str)> = Vec::new();
        for (i, p) in self.pair_specs.iter().enumerate() {
            if p.body_a >= self.bodies.len() || p.body_b >= self.bodies.len() {
                return Err(MeshError::InvalidPair {
                    index: i,
                    reason: "body index out of range".into(),
                });
            }
            if p.body_a == p.body_b {
                return Err(MeshError::InvalidPair {
                    index: i,
                    reason: "self-contact of a body with itself is not supported".into(),
                });
            }
            for (body, tag) in [(p.body_a, &p.tag_a), (p.body_b, &p.tag_b)] {
                if !self.bodies[body].mesh.has_tag(tag) {
                    return Err(MeshError::UnknownTag {
                        body: self.bodies[body].mesh.body_id,
                        tag: tag.clone(),
                        context: format!("referenced by pair {i}"),
                    });
                }
                if is_reserved_tag(tag) {
                    return Err(MeshError::TagConflict {
                        tag: tag.clone(),
                        details: "reserved tags cannot form a contact interface".into(),
                    });
                }
                pair_tags.push((body, tag));
            }
        }
        for (tag, _) in &self.tractions {
            if is_reserved_tag(tag) {
                return Err(MeshError::TagConflict {
                    tag: tag.clone(),
                    details: "reserved tags cannot carry a traction".into(),
                });
            }
            if pair_tags.iter().any(|(_, t)| t == tag) {
                return Err(MeshError::TagConflict {
                    tag: tag.clone(),
                    details: "tag is a contact interface and cannot also carry a traction".into(),
                });
            }
            if !self.bodies.iter().any(|b| b.mesh.has_tag(tag)) {
                return Err(MeshError::TagConflict {
                    tag: tag.clone(),
                    details: "traction references a tag no body carries".into(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (tag, _) in &self.tractions {
            if !seen.insert(tag.clone()) {
                return Err(MeshError::TagConflict {
                    tag: tag.clone(),
                    details: "traction given twice for the same tag".into(),
                });
            }
        }
        Ok(())
    }

    /// Builds every declared pair.
    pub fn build_pairs(&self) -> Result<Vec<ContactPair>, MeshError> {
        self.pair_specs
            .iter()
            .map(|sp| build_contact_pair(self, sp))
            .collect()
    }
}

/// One quadrature point of a contact interface with everything the penalty
/// terms need: edge nodes and shape values on both sides, outer normals,
/// initial gap, and the length-weight.
#[derive(Debug, Clone, Copy)]
pub struct ContactSample {
    /// Point on side_a.
    pub x: [f64; 2],
    /// Matched point P(x) on side_b.
    pub xp: [f64; 2],
    /// Quadrature weight (carries the dS length measure).
    pub weight: f64,
    pub nodes_a: [usize; 2],
    pub shape_a: [f64; 2],
    pub nodes_b: [usize; 2],
    pub shape_b: [f64; 2],
    pub normal_a: [f64; 2],
    pub normal_b: [f64; 2],
    /// Initial separation d(x) = ||x - P(x)|| (identically 0 for ideal pairs).
    pub gap: f64,
}

/// A built contact interface: the quadrature/projection structure over the
/// facing edge sets of two bodies.
#[derive(Debug, Clone)]
pub struct ContactPair {
    pub kind: PairKind,
    pub body_a: usize,
    pub body_b: usize,
    pub tag_a: String,
    pub tag_b: String,
    pub samples: Vec<ContactSample>,
}

/// Builds the projection/quadrature structure of one declared pair.
///
/// Two Gauss points per side_a edge (weight = half the edge length each);
/// each is matched to the nearest point on the facing edge set, requiring the
/// mismatch perpendicular to the side_a normal to stay below
/// 1e-8 x domain diameter, and the normals to oppose within 1e-6 rad.
pub fn build_contact_pair(
    problem: &MultiBodyProblem,
    spec: &PairSpec,
) -> Result<ContactPair, MeshError> {
    let mesh_a = &problem.bodies[spec.body_a].mesh;
    let mesh_b = &problem.bodies[spec.body_b].mesh;
    let oriented_a = mesh_a.oriented_boundary()?;
    let oriented_b = mesh_b.oriented_boundary()?;
    let tol = MATCH_TOL_REL * problem.domain_diameter();

    struct SideBEdge {
        nodes: [usize; 2],
        p: [f64; 2],
        q: [f64; 2],
        normal: [f64; 2],
    }
    let side_b: Vec<SideBEdge> = mesh_b
        .edges_with_tag(&spec.tag_b)
        .iter()
        .map(|be| {
            let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
            let or = oriented_b[&key];
            SideBEdge {
                nodes: [or.0, or.1],
                p: mesh_b.nodes[or.0],
                q: mesh_b.nodes[or.1],
                normal: mesh_b.outer_normal(&or),
            }
        })
        .collect();
    if side_b.is_empty() {
        return Err(MeshError::UnknownTag {
            body: mesh_b.body_id,
            tag: spec.tag_b.clone(),
            context: "pair side_b".into(),
        });
    }
    let edges_a = mesh_a.edges_with_tag(&spec.tag_a);
    if edges_a.is_empty() {
        return Err(MeshError::UnknownTag {
            body: mesh_a.body_id,
            tag: spec.tag_a.clone(),
            context: "pair side_a".into(),
        });
    }

    // 2-point Gauss rule on [0,1]: exact for the cubic integrands that
    // products of edge-linear shapes can produce.
    let gauss = [
        0.5 - 0.5 / 3.0f64.sqrt(),
        0.5 + 0.5 / 3.0f64.sqrt(),
    ];

    let mut samples = Vec::with_capacity(2 * edges_a.len());
    for be in edges_a {
        let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
        let or = oriented_a[&key];
        let (pa, qa) = (mesh_a.nodes[or.0], mesh_a.nodes[or.1]);
        let len = ((qa[0] - pa[0]).powi(2) + (qa[1] - pa[1]).powi(2)).sqrt();
        let normal_a = mesh_a.outer_normal(&or);
        for &t in &gauss {
            let x = [pa[0] + t * (qa[0] - pa[0]), pa[1] + t * (qa[1] - pa[1])];
            // nearest point over the facing edge set
            let mut best: Option<(f64, usize, f64, [f64; 2])> = None;
            for (k, eb) in side_b.iter().enumerate() {
                let (s, xp) = closest_on_segment(&x, &eb.p, &eb.q);
                let d2 = (x[0] - xp[0]).powi(2) + (x[1] - xp[1]).powi(2);
                if best.map_or(true, |(bd, ..)| d2 < bd) {
                    best = Some((d2, k, s, xp));
                }
            }
            let (_, k, s, xp) = best.unwrap();
            let diff = [x[0] - xp[0], x[1] - xp[1]];
            let along = diff[0] * normal_a[0] + diff[1] * normal_a[1];
            let tangential =
                ((diff[0] - along * normal_a[0]).powi(2) + (diff[1] - along * normal_a[1]).powi(2))
                    .sqrt();
            if tangential > tol {
                return Err(MeshError::UnmatchedInterfacePoint {
                    body_a: mesh_a.body_id,
                    body_b: mesh_b.body_id,
                    x: x[0],
                    y: x[1],
                    miss: tangential,
                });
            }
            let eb = &side_b[k];
            let dot = normal_a[0] * eb.normal[0] + normal_a[1] * eb.normal[1];
            if dot > -(NORMAL_TOL_RAD.cos()) {
                return Err(MeshError::NormalOpposition {
                    body_a: mesh_a.body_id,
                    body_b: mesh_b.body_id,
                    x: x[0],
                    y: x[1],
                    dot,
                });
            }
            let gap = match spec.kind {
                PairKind::Ideal => 0.0,
                PairKind::Unilateral => (diff[0] * diff[0] + diff[1] * diff[1]).sqrt(),
            };
            samples.push(ContactSample {
                x,
                xp,
                weight: 0.5 * len,
                nodes_a: [or.0, or.1],
                shape_a: [1.0 - t, t],
                nodes_b: eb.nodes,
                shape_b: [1.0 - s, s],
                normal_a,
                normal_b: eb.normal,
                gap,
            });
        }
    }
    Ok(ContactPair {
        kind: spec.kind,
        body_a: spec.body_a,
        body_b: spec.body_b,
        tag_a: spec.tag_a.clone(),
        tag_b: spec.tag_b.clone(),
        samples,
    })
}

/// Closest point on segment pq to x; returns (parameter in [0,1], point).
fn closest_on_segment(x: &[f64; 2], p: &[f64; 2], q: &[f64; 2]) -> (f64, [f64; 2]) {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let mut s = ((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]) / len2;
    s = s.clamp(0.0, 1.0);
    (s, [p[0] + s * d[0], p[1] + s * d[1]])
}

/// Structured grid body: nx-by-ny cells over [x0, x0+wx] x [y0, y0+wy],
/// each cell split into two counterclockwise triangles. Node (ix, iy) gets
/// index iy*(nx+1)+ix; boundary tags are given per side.
#[allow(clippy::too_many_arguments)]
fn grid_body(
    body_id: usize,
    x0: f64,
    y0: f64,
    wx: f64,
    wy: f64,
    nx: usize,
    ny: usize,
    tags: [&str; 4], // bottom, right, top, left
    material: MaterialModel,
) -> Body {
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push([
                x0 + wx * ix as f64 / nx as f64,
                y0 + wy * iy as f64 / ny as f64,
            ]);
        }
    }
    let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (n00, n10) = (id(ix, iy), id(ix + 1, iy));
            let (n01, n11) = (id(ix, iy + 1), id(ix + 1, iy + 1));
            elements.push([n00, n10, n11]);
            elements.push([n00, n11, n01]);
        }
    }
    let mut boundary_edges = Vec::new();
    for ix in 0..nx {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(ix, 0), id(ix + 1, 0)],
            tag: tags[0].to_string(),
        });
        boundary_edges.push(BoundaryEdge {
            nodes: [id(ix, ny), id(ix + 1, ny)],
            tag: tags[2].to_string(),
        });
    }
    for iy in 0..ny {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(nx, iy), id(nx, iy + 1)],
            tag: tags[1].to_string(),
        });
        boundary_edges.push(BoundaryEdge {
            nodes: [id(0, iy), id(0, iy + 1)],
            tag: tags[3].to_string(),
        });
    }
    Body {
        mesh: BodyMesh {
            body_id,
            nodes,
            elements,
            boundary_edges,
        },
        material,
        body_force: [0.0, 0.0],
    }
}

fn default_material() -> MaterialModel {
    MaterialModel {
        lambda: 1.0,
        mu: 1.0,
        omega: OmegaFn::Zero,
    }
}

/// Vertical stack of 2 or 3 unit blocks with unilateral interfaces.
///
/// The bottom block is clamped on its lower edge; upper blocks are clamped on
/// both vertical side edges (so every body is clamped somewhere and each
/// subdomain problem stays definite under every scheme); the top edge of the
/// top block carries the uniform downward traction `load` under tag `load`.
/// Consecutive blocks are separated by `gap0`, and each interface is one
/// unilateral pair (lower body is side_a).
pub fn generate_stacked_blocks(
    n_bodies: usize,
    elements_per_side: usize,
    gap0: f64,
    load: f64,
) -> Result<MultiBodyProblem, MeshError> {
    if !(n_bodies == 2 || n_bodies == 3) {
        return Err(MeshError::BadParameter(format!(
            "n_bodies must be 2 or 3, got {n_bodies}"
        )));
    }
    if elements_per_side < 1 {
        return Err(MeshError::BadParameter(
            "elements_per_side must be at least 1".into(),
        ));
    }
    if gap0 < 0.0 {
        return Err(MeshError::BadParameter(format!(
            "gap0 must be nonnegative, got {gap0}"
        )));
    }
    let m = elements_per_side;
    let mut bodies = Vec::new();
    let mut pair_specs = Vec::new();
    for k in 0..n_bodies {
        let y0 = k as f64 * (1.0 + gap0);
        let is_bottom = k == 0;
        let is_top = k == n_bodies - 1;
        let tag_bottom = if is_bottom {
            TAG_DIRICHLET.to_string()
        } else {
            format!("s{}{}_b", k - 1, k)
        };
        let tag_top = if is_top {
            "load".to_string()
        } else {
            format!("s{}{}_a", k, k + 1)
        };
        let side = if is_bottom { TAG_FREE } else { TAG_DIRICHLET };
        bodies.push(grid_body(
            k + 1,
            0.0,
            y0,
            1.0,
            1.0,
            m,
            m,
            [&tag_bottom, side, &tag_top, side],
            default_material(),
        ));
        if !is_top {
            pair_specs.push(PairSpec {
                kind: PairKind::Unilateral,
                body_a: k,
                tag_a: format!("s{}{}_a", k, k + 1),
                body_b: k + 1,
                tag_b: format!("s{}{}_b", k, k + 1),
            });
        }
    }
    let problem = MultiBodyProblem {
        bodies,
        pair_specs,
        tractions: vec![("load".to_string(), [0.0, -load])],
    };
    problem.validate()?;
    Ok(problem)
}

/// Unit square clamped at the bottom, uniform downward traction `load` on
/// top, as a single body (reference for the split-body comparison).
pub fn generate_square(elements_per_side: usize, load: f64) -> Result<MultiBodyProblem, MeshError> {
    if elements_per_side < 1 {
        return Err(MeshError::BadParameter(
            "elements_per_side must be at least 1".into(),
        ));
    }
    let m = elements_per_side;
    let problem = MultiBodyProblem {
        bodies: vec![grid_body(
            1,
            0.0,
            0.0,
            1.0,
            1.0,
            m,
            m,
            [TAG_DIRICHLET, TAG_FREE, "load", TAG_FREE],
            default_material(),
        )],
        pair_specs: vec![],
        tractions: vec![("load".to_string(), [0.0, -load])],
    };
    problem.validate()?;
    Ok(problem)
}

/// The same unit square split into two half-bodies by a vertical ideal
/// interface at x = 1/2; both halves keep the bottom clamp and the top load.
/// `elements_per_side` refers to the full square and must be even so the
/// halves reuse the same grid spacing.
pub fn generate_split_square(
    elements_per_side: usize,
    load: f64,
) -> Result<MultiBodyProblem, MeshError> {
    let m = elements_per_side;
    if m < 2 || m % 2 != 0 {
        return Err(MeshError::BadParameter(format!(
            "elements_per_side must be even and at least 2, got {m}"
        )));
    }
    let left = grid_body(
        1,
        0.0,
        0.0,
        0.5,
        1.0,
        m / 2,
        m,
        [TAG_DIRICHLET, "ifc_a", "load", TAG_FREE],
        default_material(),
    );
    let right = grid_body(
        2,
        0.5,
        0.0,
        0.5,
        1.0,
        m / 2,
        m,
        [TAG_DIRICHLET, TAG_FREE, "load", "ifc_b"],
        default_material(),
    );
    let problem = MultiBodyProblem {
        bodies: vec![left, right],
        pair_specs: vec![PairSpec {
            kind: PairKind::Ideal,
            body_a: 0,
            tag_a: "ifc_a".to_string(),
            body_b: 1,
            tag_b: "ifc_b".to_string(),
        }],
        tractions: vec![("load".to_string(), [0.0, -load])],
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn shape_gradients_reproduce_linear_functions() {
        let p = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]];
        let sg = shape_gradients(&p).unwrap();
        // gradient of f(x,y) = 2x - 3y + 1 from nodal values
        let f: Vec<f64> = p.iter().map(|v| 2.0 * v[0] - 3.0 * v[1] + 1.0).collect();
        let gx: f64 = (0..3).map(|a| f[a] * sg.grads[a][0]).sum();
        let gy: f64 = (0..3).map(|a| f[a] * sg.grads[a][1]).sum();
        assert_relative_eq!(gx, 2.0, epsilon = 1e-13);
        assert_relative_eq!(gy, -3.0, epsilon = 1e-13);
        // partition of unity: shape gradients sum to zero
        for k in 0..2 {
            let s: f64 = (0..3).map(|a| sg.grads[a][k]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn clockwise_triangle_is_degenerate_for_gradients() {
        let p = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert!(shape_gradients(&p).is_err());
        assert!(doubled_area(&p) < 0.0);
    }

    fn minimal_square() -> BodyMesh {
        BodyMesh {
            body_id: 1,
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            elements: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: vec![
                BoundaryEdge {
                    nodes: [0, 1],
                    tag: TAG_DIRICHLET.into(),
                },
                BoundaryEdge {
                    nodes: [1, 2],
                    tag: TAG_FREE.into(),
                },
                BoundaryEdge {
                    nodes: [2, 3],
                    tag: TAG_FREE.into(),
                },
                BoundaryEdge {
                    nodes: [3, 0],
                    tag: TAG_FREE.into(),
                },
            ],
        }
    }

    #[test]
    fn minimal_square_validates() {
        minimal_square().validate().unwrap();
    }

    #[test]
    fn clockwise_element_is_rejected_by_name() {
        let mut m = minimal_square();
        m.elements[1] = [0, 3, 2];
        match m.validate() {
            Err(MeshError::InvertedElement { body: 1, element: 1, .. }) => {}
            other => panic!("expected inverted-element error, got {other:?}"),
        }
    }

    #[test]
    fn untagged_boundary_edge_is_rejected() {
        let mut m = minimal_square();
        m.boundary_edges.pop();
        assert!(matches!(
            m.validate(),
            Err(MeshError::UntaggedBoundaryEdge { body: 1, .. })
        ));
    }

    #[test]
    fn interior_edge_cannot_be_tagged() {
        let mut m = minimal_square();
        m.boundary_edges.push(BoundaryEdge {
            nodes: [0, 2],
            tag: TAG_FREE.into(),
        });
        assert!(matches!(
            m.validate(),
            Err(MeshError::NotABoundaryEdge { body: 1, n0: 0, n1: 2 })
        ));
    }

    #[test]
    fn double_tagging_is_rejected() {
        let mut m = minimal_square();
        m.boundary_edges.push(BoundaryEdge {
            nodes: [1, 0],
            tag: "load".into(),
        });
        assert!(matches!(
            m.validate(),
            Err(MeshError::DuplicateBoundaryEdge { body: 1, .. })
        ));
    }

    #[test]
    fn outer_normals_point_outward() {
        let m = minimal_square();
        let oriented = m.oriented_boundary().unwrap();
        let n_bottom = m.outer_normal(&oriented[&(0, 1)]);
        let n_top = m.outer_normal(&oriented[&(2, 3)]);
        assert_relative_eq!(n_bottom[1], -1.0, epsilon = 1e-14);
        assert_relative_eq!(n_top[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn unclamped_body_is_rejected() {
        let mut m = minimal_square();
        for be in &mut m.boundary_edges {
            be.tag = TAG_FREE.into();
        }
        let problem = MultiBodyProblem {
            bodies: vec![Body {
                mesh: m,
                material: MaterialModel {
                    lambda: 1.0,
                    mu: 1.0,
                    omega: OmegaFn::Zero,
                },
                body_force: [0.0; 2],
            }],
            pair_specs: vec![],
            tractions: vec![],
        };
        assert!(matches!(problem.validate(), Err(MeshError::GammaUEmpty { body: 1 })));
    }

    #[test]
    fn minimal_stack_counts() {
        let p = generate_stacked_blocks(2, 1, 0.0, 0.5).unwrap();
        assert_eq!(p.n_bodies(), 2);
        assert_eq!(p.bodies[0].mesh.elements.len(), 2);
        assert_eq!(p.bodies[1].mesh.elements.len(), 2);
        assert_eq!(p.pair_specs.len(), 1);
        let pair = build_contact_pair(&p, &p.pair_specs[0]).unwrap();
        assert_eq!(pair.samples.len(), 2);
        for s in &pair.samples {
            assert_abs_diff_eq!(s.gap, 0.0, epsilon = 1e-14);
            // coincident interface: the projection is the identity
            assert_abs_diff_eq!(s.x[0], s.xp[0], epsilon = 1e-14);
            assert_abs_diff_eq!(s.x[1], s.xp[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn three_block_stack_has_two_pairs() {
        let p = generate_stacked_blocks(3, 4, 0.0, 0.5).unwrap();
        assert_eq!(p.n_bodies(), 3);
        assert_eq!(p.pair_specs.len(), 2);
        assert_eq!(p.bodies[2].mesh.elements.len(), 32);
        p.validate().unwrap();
    }

    #[test]
    fn separated_blocks_have_uniform_gap() {
        let p = generate_stacked_blocks(2, 2, 0.1, 0.0).unwrap();
        let pair = build_contact_pair(&p, &p.pair_specs[0]).unwrap();
        assert_eq!(pair.samples.len(), 4);
        for s in &pair.samples {
            assert_relative_eq!(s.gap, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn pair_swap_inverts_the_projection() {
        let p = generate_stacked_blocks(2, 3, 0.07, 0.0).unwrap();
        let fwd = build_contact_pair(&p, &p.pair_specs[0]).unwrap();
        let sp = &p.pair_specs[0];
        let swapped = PairSpec {
            kind: sp.kind,
            body_a: sp.body_b,
            tag_a: sp.tag_b.clone(),
            body_b: sp.body_a,
            tag_b: sp.tag_a.clone(),
        };
        let bwd = build_contact_pair(&p, &swapped).unwrap();
        assert_eq!(fwd.samples.len(), bwd.samples.len());
        for s in &fwd.samples {
            let partner = bwd
                .samples
                .iter()
                .find(|t| {
                    (t.x[0] - s.xp[0]).abs() < 1e-12
                        && (t.x[1] - s.xp[1]).abs() < 1e-12
                        && (t.xp[0] - s.x[0]).abs() < 1e-12
                        && (t.xp[1] - s.x[1]).abs() < 1e-12
                })
                .expect("projection must invert under side swap");
            assert_abs_diff_eq!(partner.gap, s.gap, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_opposing_normals_are_rejected() {
        // pair the top edges of both stacked blocks: both normals point up
        let p = generate_stacked_blocks(2, 1, 0.0, 0.0).unwrap();
        let bad = PairSpec {
            kind: PairKind::Unilateral,
            body_a: 0,
            tag_a: "s01_a".into(),
            body_b: 1,
            tag_b: "load".into(),
        };
        assert!(matches!(
            build_contact_pair(&p, &bad),
            Err(MeshError::NormalOpposition { .. })
        ));
    }

    #[test]
    fn laterally_shifted_interface_is_unmatched() {
        let mut p = generate_stacked_blocks(2, 2, 0.0, 0.0).unwrap();
        for node in &mut p.bodies[1].mesh.nodes {
            node[0] += 0.5;
        }
        assert!(matches!(
            build_contact_pair(&p, &p.pair_specs[0]),
            Err(MeshError::UnmatchedInterfacePoint { .. })
        ));
    }

    #[test]
    fn generated_boundary_length_matches_perimeter() {
        for (p, perims) in [
            (generate_stacked_blocks(2, 3, 0.2, 1.0).unwrap(), vec![4.0, 4.0]),
            (generate_split_square(4, 1.0).unwrap(), vec![3.0, 3.0]),
        ] {
            for (body, perim) in p.bodies.iter().zip(perims) {
                let total: f64 = body
                    .mesh
                    .boundary_edges
                    .iter()
                    .map(|be| {
                        let a = body.mesh.nodes[be.nodes[0]];
                        let b = body.mesh.nodes[be.nodes[1]];
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .sum();
                assert_relative_eq!(total, perim, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn split_square_interface_is_ideal_with_zero_gap() {
        let p = generate_split_square(4, 1.0).unwrap();
        assert_eq!(p.pair_specs[0].kind, PairKind::Ideal);
        let pair = build_contact_pair(&p, &p.pair_specs[0]).unwrap();
        assert_eq!(pair.samples.len(), 8);
        for s in &pair.samples {
            assert_eq!(s.gap, 0.0);
            assert_relative_eq!(s.normal_a[0], 1.0, epsilon = 1e-14);
            assert_relative_eq!(s.normal_b[0], -1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn mean_element_size_of_unit_grid() {
        // every triangle has area h^2/2, so sqrt(2*area) = h
        let p = generate_square(5, 0.0).unwrap();
        assert_relative_eq!(p.mean_element_size(), 0.2, epsilon = 1e-12);
    }
}
