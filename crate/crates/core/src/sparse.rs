//! Sparse symmetric matrices, diagonally preconditioned conjugate gradients,
//! and homogeneous Dirichlet elimination.
//!
//! Everything here is deterministic: assembly keeps a fixed entry order and
//! the CG reduction order never changes, so repeated runs produce bit-identical
//! results.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearSolveError {
    #[error("CG did not reach tol {tol:e} within {max_iter} iterations (relative residual {residual:e})")]
    MaxIterations {
        max_iter: usize,
        tol: f64,
        residual: f64,
    },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
}

/// Coordinate-format accumulator used by all assembly routines.
///
/// Duplicate entries are summed when the matrix is compressed.
#[derive(Debug, Clone)]
pub struct Triplets {
    dim: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl Triplets {
    pub fn new(dim: usize) -> Self {
        Triplets {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim);
        if value != 0.0 {
            self.entries.push((row as u32, col as u32, value));
        }
    }

    /// Appends every entry of `other`, scaled by `coeff`.
    pub fn extend_scaled(&mut self, other: &Triplets, coeff: f64) {
        assert_eq!(self.dim, other.dim);
        self.entries
            .extend(other.entries.iter().map(|&(i, j, v)| (i, j, coeff * v)));
    }

    pub fn to_csr(&self) -> SparseSym {
        SparseSym::from_triplets(self)
    }
}

/// Compressed sparse row storage for a symmetric matrix.
///
/// Both triangles are stored so matrix-vector products are a single row sweep.
#[derive(Debug, Clone)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSym {
    pub fn from_triplets(t: &Triplets) -> SparseSym {
        let dim = t.dim;
        let mut order: Vec<usize> = (0..t.entries.len()).collect();
        order.sort_unstable_by_key(|&k| (t.entries[k].0, t.entries[k].1));

        let mut cols: Vec<u32> = Vec::with_capacity(t.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.entries.len());
        let mut row_ptr = vec![0usize; dim + 1];
        let mut last: Option<(u32, u32)> = None;
        for &k in &order {
            let (i, j, v) = t.entries[k];
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.cols[lo..hi].binary_search(&(col as u32)) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// max |M - M^T|, for symmetry assertions.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k] as usize;
                if j > i {
                    worst = worst.max((self.vals[k] - self.entry(j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Dense row-major copy, for direct reference solves at desk scale.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense[i * self.dim + self.cols[k] as usize] = self.vals[k];
            }
        }
        dense
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// u^T M v.
    pub fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.dim);
        assert_eq!(v.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * v[self.cols[k] as usize];
            }
            acc += u[i] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.entry(i, i)).collect()
    }

    /// Principal submatrix over a contiguous index range.
    ///
    /// Panics if any retained row couples to a column outside the range; callers
    /// use this only on matrices that are block-diagonal over body ranges.
    pub fn principal_block(&self, start: usize, end: usize) -> SparseSym {
        let n = end - start;
        let mut t = Triplets::new(n);
        for i in start..end {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k] as usize;
                assert!(
                    (start..end).contains(&j),
                    "block extraction hit coupling ({i},{j}) outside [{start},{end})"
                );
                t.push(i - start, j - start, self.vals[k]);
            }
        }
        t.to_csr()
    }

    /// Sparse sum self + coeff * other, merging patterns.
    pub fn add_scaled(&self, other: &SparseSym, coeff: f64) -> SparseSym {
        assert_eq!(self.dim, other.dim);
        let mut t = Triplets::new(self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.push(i, self.cols[k] as usize, self.vals[k]);
            }
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                t.push(i, other.cols[k] as usize, coeff * other.vals[k]);
            }
        }
        t.to_csr()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves M x = b for symmetric positive definite M by Jacobi-preconditioned
/// conjugate gradients. On success the true residual satisfies
/// ||Mx - b|| <= tol * ||b||.
pub fn solve_spd(
    m: &SparseSym,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinearSolveError> {
    let n = m.dim();
    assert_eq!(b.len(), n);
    let norm_b = norm2(b);
    if norm_b == 0.0 || n == 0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = m
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut mp = vec![0.0; n];
    let mut last_rel = 1.0;

    for it in 0..max_iter {
        // an exactly zero preconditioned residual means the recurrence has
        // converged to working precision; the certified residual may sit a
        // hair above an extreme tol, but no further progress is possible
        if rz == 0.0 {
            return Ok(x);
        }
        m.matvec(&p, &mut mp);
        let p_mp = dot(&p, &mp);
        if !p_mp.is_finite() {
            return Err(LinearSolveError::NotPositiveDefinite(
                "non-finite curvature p'Mp".into(),
            ));
        }
        if p_mp <= 0.0 {
            return Err(LinearSolveError::NotPositiveDefinite(format!(
                "nonpositive curvature p'Mp = {p_mp:e} at iteration {it}"
            )));
        }
        let alpha = rz / p_mp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        last_rel = norm2(&r) / norm_b;
        if last_rel <= tol {
            // certify with the true residual before accepting
            let mut res = m.apply(&x);
            for i in 0..n {
                res[i] -= b[i];
            }
            let true_rel = norm2(&res) / norm_b;
            if true_rel <= tol {
                return Ok(x);
            }
            last_rel = true_rel;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinearSolveError::MaxIterations {
        max_iter,
        tol,
        residual: last_rel,
    })
}

/// Deletes constrained rows and columns of a full-space system.
///
/// Constraints are homogeneous (u = 0), so no right-hand-side correction is
/// needed. Returns the reduced matrix, reduced vector, and the free-to-full
/// index map.
pub fn eliminate_dirichlet(
    mat: &Triplets,
    rhs: &[f64],
    constrained: &[bool],
) -> (SparseSym, Vec<f64>, Vec<usize>) {
    let n = constrained.len();
    assert_eq!(mat.dim(), n);
    assert_eq!(rhs.len(), n);
    let mut full_to_free = vec![usize::MAX; n];
    let mut free_to_full = Vec::new();
    for i in 0..n {
        if !constrained[i] {
            full_to_free[i] = free_to_full.len();
            free_to_full.push(i);
        }
    }
    let mut reduced = Triplets::new(free_to_full.len());
    for &(i, j, v) in &mat.entries {
        let (fi, fj) = (full_to_free[i as usize], full_to_free[j as usize]);
        if fi != usize::MAX && fj != usize::MAX {
            reduced.push(fi, fj, v);
        }
    }
    let rhs_reduced: Vec<f64> = free_to_full.iter().map(|&i| rhs[i]).collect();
    (reduced.to_csr(), rhs_reduced, free_to_full)
}
