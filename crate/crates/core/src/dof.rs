//! Global degree-of-freedom numbering over all bodies.
//!
//! Nodes on `dirichlet` edges are clamped in both components, nodes on
//! roller edges in the named component only; the remaining (free) dofs get
//! global indices that are body-major and contiguous, so each body owns one
//! index range and body-block operations are slice operations. The "full"
//! numbering (all components of all nodes, clamped or not) is used
//! transiently during assembly, before Dirichlet elimination.

use crate::mesh::{MultiBodyProblem, TAG_DIRICHLET, TAG_ROLLER_X, TAG_ROLLER_Y};

#[derive(Debug, Clone)]
pub struct DofMap {
    /// full index = full_offset[body] + 2*node + comp
    full_offsets: Vec<usize>,
    /// full index -> free index (usize::MAX when constrained)
    free_of_full: Vec<usize>,
    /// free index -> full index
    full_of_free: Vec<usize>,
    /// per body: free-dof range [start, end)
    body_ranges: Vec<(usize, usize)>,
    constrained: Vec<bool>,
}

impl DofMap {
    pub fn new(problem: &MultiBodyProblem) -> DofMap {
        let n_bodies = problem.n_bodies();
        let mut full_offsets = Vec::with_capacity(n_bodies + 1);
        let mut total_full = 0usize;
        for body in &problem.bodies {
            full_offsets.push(total_full);
            total_full += 2 * body.mesh.nodes.len();
        }
        full_offsets.push(total_full);

        let mut constrained = vec![false; total_full];
        for (b, body) in problem.bodies.iter().enumerate() {
            for be in &body.mesh.boundary_edges {
                let (clamp_x, clamp_y) = match be.tag.as_str() {
                    t if t == TAG_DIRICHLET => (true, true),
                    t if t == TAG_ROLLER_X => (true, false),
                    t if t == TAG_ROLLER_Y => (false, true),
                    _ => continue,
                };
                for &n in &be.nodes {
                    if clamp_x {
                        constrained[full_offsets[b] + 2 * n] = true;
                    }
                    if clamp_y {
                        constrained[full_offsets[b] + 2 * n + 1] = true;
                    }
                }
            }
        }

        let mut free_of_full = vec![usize::MAX; total_full];
        let mut full_of_free = Vec::new();
        let mut body_ranges = Vec::with_capacity(n_bodies);
        for b in 0..n_bodies {
            let start = full_of_free.len();
            for fi in full_offsets[b]..full_offsets[b + 1] {
                if !constrained[fi] {
                    free_of_full[fi] = full_of_free.len();
                    full_of_free.push(fi);
                }
            }
            body_ranges.push((start, full_of_free.len()));
        }
        DofMap {
            full_offsets,
            free_of_full,
            full_of_free,
            body_ranges,
            constrained,
        }
    }

    pub fn n_free(&self) -> usize {
        self.full_of_free.len()
    }

    pub fn n_full(&self) -> usize {
        self.constrained.len()
    }

    pub fn full_index(&self, body: usize, node: usize, comp: usize) -> usize {
        self.full_offsets[body] + 2 * node + comp
    }

    /// Free index of (body, node, component), or None when clamped.
    pub fn free_index(&self, body: usize, node: usize, comp: usize) -> Option<usize> {
        let fi = self.free_of_full[self.full_index(body, node, comp)];
        (fi != usize::MAX).then_some(fi)
    }

    /// Free-dof range owned by one body.
    pub fn body_range(&self, body: usize) -> std::ops::Range<usize> {
        let (s, e) = self.body_ranges[body];
        s..e
    }

    pub fn constrained_mask(&self) -> &[bool] {
        &self.constrained
    }

    /// (body, node, component) of a free index.
    pub fn locate(&self, free: usize) -> (usize, usize, usize) {
        let full = self.full_of_free[free];
        let body = self
            .full_offsets
            .partition_point(|&off| off <= full)
            .saturating_sub(1);
        let local = full - self.full_offsets[body];
        (body, local / 2, local % 2)
    }

    /// Restriction of a full vector to free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.n_full());
        self.full_of_free.iter().map(|&fi| full[fi]).collect()
    }

    /// Extension of a free vector by zeros on clamped dofs.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.n_free());
        let mut full = vec![0.0; self.n_full()];
        for (k, &fi) in self.full_of_free.iter().enumerate() {
            full[fi] = free[k];
        }
        full
    }
}

/// Nodal displacements over the free dofs of a problem (clamped dofs are
/// identically zero and not stored).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementState {
    pub u: Vec<f64>,
}

impl DisplacementState {
    pub fn zeros(map: &DofMap) -> DisplacementState {
        DisplacementState {
            u: vec![0.0; map.n_free()],
        }
    }

    /// Displacement vector of one node (zeros where clamped).
    pub fn nodal(&self, map: &DofMap, body: usize, node: usize) -> [f64; 2] {
        let get = |c: usize| map.free_index(body, node, c).map_or(0.0, |i| self.u[i]);
        [get(0), get(1)]
    }
}
