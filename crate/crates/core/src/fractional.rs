//! Spectral reference for `(−L_h)^s` on the truncated box, the fractional
//! Dirichlet problem with exterior data on W, and the nonlocal DtN map.
//!
//! This is the dense oracle path; it is exact functional calculus on the
//! discrete operator and therefore limited to a few thousand nodes.

use std::sync::Arc;

use faer::Mat;

use crate::coefficient::Coefficient;
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, DenseCholesky};
use crate::local::{full_stiffness, LocalOperator};
use crate::mesh::TangentialGrid;

/// Largest grid handled by the dense eigendecomposition.
pub const DENSE_NODE_LIMIT: usize = 4096;

/// `(−L_h)^s = V diag(λ^s) Vᵀ`.
#[derive(Clone)]
pub struct SpectralPower {
    grid: Arc<TangentialGrid>,
    order: f64,
    eigenvalues: Arc<Vec<f64>>,
    eigenvectors: Arc<Mat<f64>>,
    matrix: Mat<f64>,
}

fn check_order(order: f64) -> Result<()> {
    if order > 0.0 && order <= 2.0 && order.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("spectral power must lie in (0, 2], got {order}")))
    }
}

impl SpectralPower {
    pub fn new(op: &LocalOperator, order: f64) -> Result<Self> {
        Self::from_symmetric(op.grid().clone(), op.minus_operator_dense(), order)
    }

    /// From a dense symmetric positive definite `−L_h`.
    pub fn from_symmetric(grid: Arc<TangentialGrid>, minus_l: Mat<f64>, order: f64) -> Result<Self> {
        check_order(order)?;
        if grid.len() > DENSE_NODE_LIMIT {
            return Err(Error::Param(format!(
                "dense spectral oracle is limited to {DENSE_NODE_LIMIT} nodes, grid has {}",
                grid.len()
            )));
        }
        let (vals, vecs) = linalg::symmetric_eigen(&minus_l)?;
        if vals[0] <= 0.0 {
            return Err(Error::Eig(format!(
                "operator is not positive definite: smallest eigenvalue {}",
                vals[0]
            )));
        }
        let matrix = linalg::spectral_function(&vals, &vecs, |l| l.powf(order));
        Ok(Self {
            grid,
            order,
            eigenvalues: Arc::new(vals),
            eigenvectors: Arc::new(vecs),
            matrix,
        })
    }

    /// Same eigendecomposition, different power.
    pub fn with_order(&self, order: f64) -> Result<Self> {
        check_order(order)?;
        let matrix =
            linalg::spectral_function(&self.eigenvalues, &self.eigenvectors, |l| l.powf(order));
        Ok(Self {
            grid: self.grid.clone(),
            order,
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self.eigenvectors.clone(),
            matrix,
        })
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// Eigenvalues of `−L_h`, ascending.
    pub fn base_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigenvectors
    }

    /// Eigenvalues `λ_i^s`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.powf(self.order)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("grid field", self.grid.len(), x.len())?;
        Ok(linalg::dense_matvec(&self.matrix, x))
    }
}

/// Exterior value problem `(−L_h)^s u = 0` on Ω̄ nodes, `u = f` on W, `u = 0`
/// on the remaining exterior nodes.
pub struct FractionalDirichlet {
    power: Arc<SpectralPower>,
    omega: Vec<usize>,
    omega_block: DenseCholesky,
}

impl FractionalDirichlet {
    pub fn new(power: Arc<SpectralPower>) -> Result<Self> {
        let omega = power.grid().omega_nodes().to_vec();
        let p = power.matrix();
        let block = Mat::<f64>::from_fn(omega.len(), omega.len(), |i, j| p[(omega[i], omega[j])]);
        let omega_block = DenseCholesky::new(&block)?;
        Ok(Self {
            power,
            omega,
            omega_block,
        })
    }

    pub fn power(&self) -> &Arc<SpectralPower> {
        &self.power
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        self.power.grid()
    }

    /// Full-grid solution for W-nodal data `f_w` (ordered as `grid.w_nodes()`).
    pub fn solve(&self, f_w: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        let mut u = grid.extend_from_w(f_w)?;
        if f_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("exterior data must be finite".into()));
        }
        let p = self.power.matrix();
        let rhs: Vec<f64> = self
            .omega
            .iter()
            .map(|&i| {
                -grid
                    .w_nodes()
                    .iter()
                    .zip(f_w)
                    .map(|(&k, f)| p[(i, k)] * f)
                    .sum::<f64>()
            })
            .collect();
        let u_omega = self.omega_block.solve(&rhs)?;
        for (k, &i) in self.omega.iter().enumerate() {
            u[i] = u_omega[k];
        }
        Ok(u)
    }

    /// `(−L_h)^s u_f` on W.
    pub fn dtn(&self, f_w: &[f64]) -> Result<Vec<f64>> {
        let u = self.solve(f_w)?;
        let pu = self.power.apply(&u)?;
        Ok(self.grid().restrict(&pu, self.grid().w_nodes()))
    }

    /// `Λ_s = P_WW − P_WΩ P_ΩΩ⁻¹ P_ΩW`.
    pub fn dtn_matrix(&self) -> Result<NonlocalDtN> {
        let grid = self.grid();
        let w = grid.w_nodes();
        let p = self.power.matrix();
        let nw = w.len();
        let mut m = Mat::<f64>::from_fn(nw, nw, |i, j| p[(w[i], w[j])]);
        for j in 0..nw {
            let col: Vec<f64> = self.omega.iter().map(|&i| p[(i, w[j])]).collect();
            let x = self.omega_block.solve(&col)?;
            for i in 0..nw {
                let coupling: f64 = self
                    .omega
                    .iter()
                    .zip(&x)
                    .map(|(&k, xv)| p[(w[i], k)] * xv)
                    .sum();
                m[(i, j)] -= coupling;
            }
        }
        Ok(NonlocalDtN {
            matrix: m,
            order: self.power.order(),
            node_weight: grid.node_weight(),
        })
    }
}

/// Dense nonlocal DtN map on W-nodal data.
#[derive(Clone, Debug)]
pub struct NonlocalDtN {
    matrix: Mat<f64>,
    order: f64,
    node_weight: f64,
}

impl NonlocalDtN {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        linalg::dense_matvec(&self.matrix, f)
    }

    /// W quadrature pairing.
    pub fn pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        self.node_weight * linalg::dot(a, b)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
                scale = scale.max(self.matrix[(i, j)].abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Spectral norm of `Λ_{s,1} − Λ_{s,2}`.
    pub fn gap(&self, other: &NonlocalDtN) -> Result<f64> {
        check_len("W nodes", self.matrix.nrows(), other.matrix.nrows())?;
        let d = &self.matrix - &other.matrix;
        if d.nrows() == 0 {
            return Ok(0.0);
        }
        d.thin_svd()
            .map(|s| s.S()[0])
            .map_err(|e| Error::Eig(format!("{e:?}")))
    }
}

/// Gram matrices `w (I − Δ_W)^r` of discrete Sobolev proxy norms on W, with
/// `Δ_W` the identity-coefficient Laplacian under zero Dirichlet truncation
/// outside W.
#[derive(Clone, Debug)]
pub struct SobolevProxy {
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    node_weight: f64,
}

impl SobolevProxy {
    pub fn new(grid: &TangentialGrid) -> Result<Self> {
        let id = Coefficient::identity(grid);
        let k = full_stiffness(grid, &id)?;
        let w = grid.node_weight();
        let kw = linalg::to_dense(&linalg::submatrix(&k, grid.w_nodes(), grid.w_nodes())?);
        let minus_delta = Mat::<f64>::from_fn(kw.nrows(), kw.ncols(), |i, j| kw[(i, j)] / w);
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(&minus_delta)?;
        Ok(Self {
            eigenvalues,
            eigenvectors,
            node_weight: w,
        })
    }

    pub fn gram(&self, r: f64) -> Mat<f64> {
        let w = self.node_weight;
        linalg::spectral_function(&self.eigenvalues, &self.eigenvectors, |l| w * (1.0 + l).powf(r))
    }
}

/// Largest relative deviation between the spectral power of the periodic
/// second-difference operator and its symbol `((2 − 2cos ξh)/h²)^s`, over all
/// Fourier modes of a grid with `points` nodes and spacing `h`.
pub fn periodic_symbol_check(points: usize, h: f64, order: f64) -> Result<f64> {
    check_order(order)?;
    if points < 3 {
        return Err(Error::Param("periodic check needs at least 3 points".into()));
    }
    let n = points;
    let lap = Mat::<f64>::from_fn(n, n, |i, j| {
        let d = (i + n - j) % n;
        if i == j {
            2.0 / (h * h)
        } else if d == 1 || d == n - 1 {
            -1.0 / (h * h)
        } else {
            0.0
        }
    });
    let (vals, vecs) = linalg::symmetric_eigen(&lap)?;
    // the constant mode is an exact zero; drop its rounding before the power
    let floor = 1e-12 * vals[n - 1];
    let p = linalg::spectral_function(&vals, &vecs, |l| if l <= floor { 0.0 } else { l.powf(order) });
    let mut worst = 0.0f64;
    for k in 0..=n / 2 {
        let xi = 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * h);
        let symbol = ((2.0 - 2.0 * (xi * h).cos()) / (h * h)).powf(order);
        let mode: Vec<f64> = (0..n).map(|j| (xi * h * j as f64).cos()).collect();
        let pm = linalg::dense_matvec(&p, &mode);
        let scale = linalg::norm2(&mode) * symbol.max(1.0);
        let err: f64 = pm
            .iter()
            .zip(&mode)
            .map(|(a, m)| (a - symbol * m).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / scale);
    }
    Ok(worst)
}
