//! Thin layer over faer: sparse assembly, principal blocks, and a symmetric
//! positive definite solver that switches from Cholesky to Jacobi-PCG on
//! large systems.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{check_len, Error, Result};

pub type Sparse = SparseColMat<usize, f64>;

/// Systems above this size are solved iteratively.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;
pub const ITERATIVE_TOLERANCE: f64 = 1e-10;

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push(Triplet::new(i, j, v));
        }
    }

    /// Adds `v` to the 2x2 pattern `[[1,-1],[-1,1]]` on `(i, j)`.
    pub fn add_edge(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, i, v);
        self.add(j, j, v);
        self.add(i, j, -v);
        self.add(j, i, -v);
    }

    pub fn build(self) -> Result<Sparse> {
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &self.entries)
            .map_err(|e| Error::Solve(format!("sparse assembly failed: {e:?}")))
    }
}

pub fn matvec(a: &Sparse, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let vals = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for k in cp[j]..cp[j + 1] {
            y[ri[k]] += vals[k] * xj;
        }
    }
    y
}

pub fn diagonal(a: &Sparse) -> Vec<f64> {
    let mut d = vec![0.0; a.nrows().min(a.ncols())];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for (j, dj) in d.iter_mut().enumerate() {
        for k in cp[j]..cp[j + 1] {
            if ri[k] == j {
                *dj += a.val()[k];
            }
        }
    }
    d
}

pub fn diagonal_entry(a: &Sparse, i: usize) -> f64 {
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    (cp[i]..cp[i + 1])
        .filter(|&k| ri[k] == i)
        .map(|k| a.val()[k])
        .sum()
}

/// Block `a[rows, cols]`; index lists need not be sorted.
pub fn submatrix(a: &Sparse, rows: &[usize], cols: &[usize]) -> Result<Sparse> {
    let mut row_map = vec![usize::MAX; a.nrows()];
    for (k, &r) in rows.iter().enumerate() {
        row_map[r] = k;
    }
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let mut b = TripletBuilder::new(rows.len(), cols.len());
    for (cj, &j) in cols.iter().enumerate() {
        for k in cp[j]..cp[j + 1] {
            let r = row_map[ri[k]];
            if r != usize::MAX {
                b.add(r, cj, a.val()[k]);
            }
        }
    }
    b.build()
}

pub fn to_dense(a: &Sparse) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(a.nrows(), a.ncols());
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..a.ncols() {
        for k in cp[j]..cp[j + 1] {
            m[(ri[k], j)] += a.val()[k];
        }
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `‖a − b‖ / ‖b‖`, with the convention 0/0 = 0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm2(b);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn dense_matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eig(format!("{e:?}")))?;
    let vals: Vec<f64> = (0..a.nrows()).map(|i| e.S()[i]).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eig("non-finite eigenvalue".into()));
    }
    Ok((vals, e.U().to_owned()))
}

/// `V diag(g(λ)) Vᵀ`.
pub fn spectral_function(vals: &[f64], vecs: &Mat<f64>, g: impl Fn(f64) -> f64) -> Mat<f64> {
    let n = vals.len();
    let scaled = Mat::<f64>::from_fn(n, n, |i, k| vecs[(i, k)] * g(vals[k]));
    &scaled * vecs.transpose()
}

/// Dense SPD factorisation.
pub struct DenseCholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl DenseCholesky {
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Solve(format!("dense Cholesky failed: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", self.n, b.len())?;
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.llt.solve(&rhs);
        Ok((0..self.n).map(|i| x[i]).collect())
    }
}

/// Dense LU with partial pivoting for small nonsymmetric blocks.
pub fn dense_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    check_len("right-hand side", a.nrows(), b.len())?;
    let lu = a.partial_piv_lu();
    let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..b.len()).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("dense LU produced non-finite values".into()));
    }
    Ok(out)
}

/// Solver for a sparse symmetric positive definite matrix.
pub enum SymmetricSolver {
    Direct { llt: Llt<usize, f64>, n: usize },
    Iterative { a: Sparse, inv_diag: Vec<f64> },
}

impl SymmetricSolver {
    pub fn new(a: Sparse) -> Result<Self> {
        Self::with_limit(a, DIRECT_SOLVE_LIMIT)
    }

    pub fn with_limit(a: Sparse, direct_limit: usize) -> Result<Self> {
        let n = a.nrows();
        if n <= direct_limit {
            let llt = a
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::Solve(format!("sparse Cholesky failed: {e:?}")))?;
            Ok(Self::Direct { llt, n })
        } else {
            let d = diagonal(&a);
            if d.iter().any(|v| *v <= 0.0) {
                return Err(Error::Solve("nonpositive diagonal in SPD system".into()));
            }
            let inv_diag = d.iter().map(|v| 1.0 / v).collect();
            Ok(Self::Iterative { a, inv_diag })
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Direct { n, .. } => *n,
            Self::Iterative { a, .. } => a.nrows(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", self.dim(), b.len())?;
        match self {
            Self::Direct { llt, n } => {
                let rhs = Col::<f64>::from_fn(*n, |i| b[i]);
                let x = llt.solve(&rhs);
                let out: Vec<f64> = (0..*n).map(|i| x[i]).collect();
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Solve("sparse Cholesky produced non-finite values".into()));
                }
                Ok(out)
            }
            Self::Iterative { a, inv_diag } => pcg(a, inv_diag, b, ITERATIVE_TOLERANCE),
        }
    }
}

fn pcg(a: &Sparse, inv_diag: &[f64], b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n.max(100);
    for _ in 0..max_iter {
        let ap = matvec(a, &p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solve(format!(
        "conjugate gradient did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Sparse {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                b.add(i + 1, i, -1.0);
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn direct_and_iterative_agree() {
        let a = laplacian_1d(50);
        let rhs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = SymmetricSolver::with_limit(a.clone(), 1000).unwrap().solve(&rhs).unwrap();
        let x2 = SymmetricSolver::with_limit(a.clone(), 0).unwrap().solve(&rhs).unwrap();
        assert!(relative_error(&x2, &x1) < 1e-9);
        let r = matvec(&a, &x1);
        assert!(relative_error(&r, &rhs) < 1e-12);
    }

    #[test]
    fn submatrix_extracts_block() {
        let a = laplacian_1d(6);
        let s = to_dense(&submatrix(&a, &[1, 2, 3], &[2, 3]).unwrap());
        assert_eq!(s[(0, 0)], -1.0);
        assert_eq!(s[(1, 0)], 2.0);
        assert_eq!(s[(2, 1)], 2.0);
    }

    #[test]
    fn spectral_square_root_squares_back() {
        let a = to_dense(&laplacian_1d(12));
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let r = spectral_function(&vals, &vecs, f64::sqrt);
        let rr = &r * &r;
        let diff = (&rr - &a).norm_l2() / a.norm_l2();
        assert!(diff < 1e-12);
    }
}
