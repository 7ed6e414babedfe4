//! Regularised recovery of the exterior extension from nonlocal data
//! `(f, Λ_s f)` on W.
//!
//! The admissible fields are spanned by snapshots: one mixed extension solve
//! per W node with a unit trace there. In that basis the data operator is
//! `A c = (E c, T c)` with `E = I` (traces on W) and `T` the weighted Neumann
//! traces on W, measured in the proxies `H^{s-ε}(W)` and `H^{-s-ε}(W)`. The
//! penalty is the weighted Dirichlet energy over the exterior cylinder.

use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bridge::{partial_vertical_integral_with, CauchyPair, DEFAULT_TAIL_FRACTION};
use crate::coefficient::{Coefficient, CoefficientSpec};
use crate::error::{check_len, Error, Result};
use crate::extension::{analytic_constant, ExtensionField, ExtensionOperator, TraceCondition};
use crate::fractional::{FractionalDirichlet, SobolevProxy, SpectralPower};
use crate::linalg::{self, DenseCholesky};
use crate::local::{assemble_local, mass_fractions, region_stiffness, LocalOperator};
use crate::mesh::{build_tangential_grid, ExtensionMesh, GeometrySpec, Point, TangentialGrid, VerticalSpec};

/// Smallest admissible `λ_min/λ_max` of the data Gram matrix.
pub const RANK_THRESHOLD: f64 = 1e-14;

/// Snapshot discretisation of the data operator.
pub struct DataOperator {
    order: f64,
    epsilon: f64,
    extension: Arc<ExtensionOperator>,
    /// Snapshot fields, one column per W node.
    snapshots: Mat<f64>,
    /// Weighted Neumann traces on W of each snapshot.
    neumann: Mat<f64>,
    gram_hi: Mat<f64>,
    gram_lo: Mat<f64>,
    gram_energy: Mat<f64>,
    gram_data: Mat<f64>,
    data_condition: f64,
    max_bulk_residual: f64,
}

/// Admissible `ε` default, a quarter of the order.
pub fn default_epsilon(order: f64) -> f64 {
    0.25 * order
}

pub fn build_data_operator(
    grid: Arc<TangentialGrid>,
    coefficient: Arc<Coefficient>,
    order: f64,
    epsilon: Option<f64>,
    vertical: &VerticalSpec,
) -> Result<DataOperator> {
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(order));
    if !(epsilon > 0.0 && epsilon < order) {
        return Err(Error::Param(format!("ε must lie in (0, s) = (0, {order}), got {epsilon}")));
    }
    check_len("coefficient nodes", grid.len(), coefficient.len())?;
    if !coefficient.is_identity_outside_omega(&grid) {
        return Err(Error::Param(
            "the data operator needs the coefficient to be the identity outside Ω".into(),
        ));
    }
    let vmesh = vertical.resolve(order, &grid, coefficient.ellipticity_bounds().0)?;
    let mesh = ExtensionMesh::new(grid.clone(), vmesh);
    let extension = Arc::new(ExtensionOperator::assemble(mesh.clone(), &coefficient)?);
    let solver = extension.solver(TraceCondition::Mixed)?;
    let w_nodes = grid.w_nodes().to_vec();
    let nw = w_nodes.len();

    let solved: Vec<(Vec<f64>, Vec<f64>, f64)> = w_nodes
        .par_iter()
        .map(|&k| {
            let mut trace = vec![0.0; grid.len()];
            trace[k] = 1.0;
            let field = solver.solve_trace(&trace)?;
            let tau = field.neumann_trace()?.variational;
            let residual = extension.bulk_residual(field.values())?;
            Ok((grid.restrict(&tau, &w_nodes), field.into_values(), residual))
        })
        .collect::<Result<_>>()?;
    let snapshots = Mat::<f64>::from_fn(mesh.len(), nw, |i, k| solved[k].1[i]);
    let neumann = Mat::<f64>::from_fn(nw, nw, |i, k| solved[k].0[i]);
    let max_bulk_residual = solved.iter().map(|s| s.2).fold(0.0, f64::max);

    let proxy = SobolevProxy::new(&grid)?;
    let gram_hi = proxy.gram(order - epsilon);
    let gram_lo = proxy.gram(-order - epsilon);

    // weighted energy restricted to the exterior cylinder
    let exterior = grid.exterior_closure_mask();
    let k_ext = region_stiffness(&grid, &coefficient, Some(&exterior), true)?;
    let w = grid.node_weight();
    let mass: Vec<f64> = mass_fractions(&grid, Some(&exterior), true)
        .into_iter()
        .map(|m| w * m)
        .collect();
    let a_ext = ExtensionOperator::from_parts(mesh, &k_ext, mass)?;
    let applied: Vec<Vec<f64>> = solved
        .par_iter()
        .map(|s| a_ext.apply(&s.1))
        .collect::<Result<_>>()?;
    let gram_energy = symmetrise(&Mat::<f64>::from_fn(nw, nw, |i, j| {
        linalg::dot(&solved[i].1, &applied[j])
    }));

    // E = I, so EᵀG_hi E = G_hi
    let lo_t = &gram_lo * &neumann;
    let gram_data = symmetrise(&(&gram_hi + neumann.transpose() * &lo_t));
    let (vals, _) = linalg::symmetric_eigen(&gram_data)?;
    let top = vals.last().copied().unwrap_or(0.0);
    let data_condition = if top > 0.0 { vals[0] / top } else { 0.0 };
    if !(data_condition >= RANK_THRESHOLD) {
        let rank = vals.iter().filter(|v| **v > RANK_THRESHOLD * top).count();
        return Err(Error::Rank { rank, cols: nw });
    }
    Ok(DataOperator {
        order,
        epsilon,
        extension,
        snapshots,
        neumann,
        gram_hi,
        gram_lo,
        gram_energy,
        gram_data,
        data_condition,
        max_bulk_residual,
    })
}

fn symmetrise(m: &Mat<f64>) -> Mat<f64> {
    Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn quadratic(g: &Mat<f64>, x: &[f64]) -> f64 {
    linalg::dot(x, &linalg::dense_matvec(g, x))
}

impl DataOperator {
    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn extension(&self) -> &Arc<ExtensionOperator> {
        &self.extension
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        self.extension.grid()
    }

    /// Basis dimension (number of W nodes).
    pub fn dim(&self) -> usize {
        self.neumann.ncols()
    }

    pub fn snapshots(&self) -> &Mat<f64> {
        &self.snapshots
    }

    pub fn energy_gram(&self) -> &Mat<f64> {
        &self.gram_energy
    }

    /// `AᵀA` in the proxy norms.
    pub fn data_gram(&self) -> &Mat<f64> {
        &self.gram_data
    }

    /// `λ_min / λ_max` of the data Gram matrix.
    pub fn data_condition(&self) -> f64 {
        self.data_condition
    }

    /// Largest bulk residual among the snapshot fields.
    pub fn max_bulk_residual(&self) -> f64 {
        self.max_bulk_residual
    }

    /// `(E c, T c)`.
    pub fn apply(&self, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("basis coefficients", self.dim(), c.len())?;
        Ok((c.to_vec(), linalg::dense_matvec(&self.neumann, c)))
    }

    /// Extension field `Σ c_k ũ_k`.
    pub fn field(&self, c: &[f64]) -> Result<ExtensionField> {
        check_len("basis coefficients", self.dim(), c.len())?;
        ExtensionField::from_values(self.extension.clone(), linalg::dense_matvec(&self.snapshots, c))
    }

    /// Data term `‖Ec − f‖²_{hi} + ‖Tc − τ‖²_{lo}`.
    pub fn misfit(&self, c: &[f64], data: &TikhonovData) -> Result<f64> {
        data.check(self.dim())?;
        let (e, t) = self.apply(c)?;
        let de: Vec<f64> = e.iter().zip(&data.trace).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = t.iter().zip(&data.neumann).map(|(a, b)| a - b).collect();
        Ok(quadratic(&self.gram_hi, &de) + quadratic(&self.gram_lo, &dt))
    }

    /// `‖f‖²_{hi} + ‖τ‖²_{lo}`.
    pub fn data_norm_squared(&self, data: &TikhonovData) -> Result<f64> {
        data.check(self.dim())?;
        Ok(quadratic(&self.gram_hi, &data.trace) + quadratic(&self.gram_lo, &data.neumann))
    }

    pub fn penalty(&self, c: &[f64]) -> Result<f64> {
        check_len("basis coefficients", self.dim(), c.len())?;
        Ok(quadratic(&self.gram_energy, c))
    }

    /// `J_α(c) = misfit + α · penalty`.
    pub fn objective(&self, c: &[f64], data: &TikhonovData, alpha: f64) -> Result<f64> {
        Ok(self.misfit(c, data)? + alpha * self.penalty(c)?)
    }

    fn normal_matrix(&self, alpha: f64) -> Mat<f64> {
        Mat::<f64>::from_fn(self.dim(), self.dim(), |i, j| {
            alpha * self.gram_energy[(i, j)] + self.gram_data[(i, j)]
        })
    }

    /// `Aᵀ(f, τ) = G_hi f + Tᵀ G_lo τ`.
    fn normal_rhs(&self, data: &TikhonovData) -> Vec<f64> {
        let hi = linalg::dense_matvec(&self.gram_hi, &data.trace);
        let lo = linalg::dense_matvec(&self.gram_lo, &data.neumann);
        let tlo = linalg::dense_matvec(&self.neumann.transpose().to_owned(), &lo);
        hi.iter().zip(&tlo).map(|(a, b)| a + b).collect()
    }
}

/// Exterior data `(f, τ)` on the W nodes, `τ = −Λ_s f / c_s` the weighted
/// Neumann trace matching the nonlocal operator.
#[derive(Clone, Debug, PartialEq)]
pub struct TikhonovData {
    pub trace: Vec<f64>,
    pub neumann: Vec<f64>,
}

impl TikhonovData {
    pub fn zero(len: usize) -> Self {
        Self {
            trace: vec![0.0; len],
            neumann: vec![0.0; len],
        }
    }

    /// Data from `f` and the nonlocal values `Λ_s f`.
    pub fn from_nonlocal(f_w: Vec<f64>, lambda_f: &[f64], order: f64) -> Result<Self> {
        check_len("nonlocal data", f_w.len(), lambda_f.len())?;
        let cs = analytic_constant(order);
        Ok(Self {
            neumann: lambda_f.iter().map(|v| -v / cs).collect(),
            trace: f_w,
        })
    }

    /// Exactly attainable data `A c`.
    pub fn attainable(op: &DataOperator, c: &[f64]) -> Result<Self> {
        let (trace, neumann) = op.apply(c)?;
        Ok(Self { trace, neumann })
    }

    /// Adds relative noise `level · ‖·‖_∞ · U(−1, 1)` to both components.
    pub fn with_noise(&self, level: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perturb = |v: &[f64]| {
            let scale = level * linalg::norm_inf(v);
            v.iter().map(|x| x + scale * rng.random_range(-1.0..=1.0)).collect()
        };
        Self {
            trace: perturb(&self.trace),
            neumann: perturb(&self.neumann),
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        check_len("data trace", len, self.trace.len())?;
        check_len("data Neumann trace", len, self.neumann.len())
    }
}

/// Forward data `(f, −Λ_s f / c_s)` on W from the spectral oracle, optionally
/// computed on the nested refinement and sampled back at the coarse W nodes.
pub fn generate_data(
    geometry: &GeometrySpec,
    coefficient: &CoefficientSpec,
    order: f64,
    f: &(dyn Fn(&Point) -> f64 + Sync),
    refine: bool,
) -> Result<TikhonovData> {
    let coarse = build_tangential_grid(geometry)?;
    let data_spec = if refine { geometry.nested_refinement() } else { geometry.clone() };
    let grid = Arc::new(build_tangential_grid(&data_spec)?);
    let a = Arc::new(Coefficient::from_spec(coefficient, &grid)?);
    let local = assemble_local(grid.clone(), a)?;
    let oracle = FractionalDirichlet::new(Arc::new(SpectralPower::new(&local, order)?))?;
    let f_w = grid.sample_w(f);
    let lambda = oracle.dtn(&f_w)?;
    let full = TikhonovData::from_nonlocal(f_w, &lambda, order)?;
    if !refine {
        return Ok(full);
    }
    // coarse node m sits at fine node 2m + 1 on every axis
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &i) in grid.w_nodes().iter().enumerate() {
        pos[i] = k;
    }
    let mut out = TikhonovData::zero(coarse.w_nodes().len());
    for (k, &i) in coarse.w_nodes().iter().enumerate() {
        let m = coarse.multi_index(i);
        let mut fine = [0usize; 3];
        for d in 0..coarse.dim() {
            fine[d] = 2 * m[d] + 1;
        }
        let p = pos[grid.index(fine)];
        if p == usize::MAX {
            return Err(Error::MeshMismatch("nested W nodes do not line up".into()));
        }
        out.trace[k] = full.trace[p];
        out.neumann[k] = full.neumann[p];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TikhonovSolution {
    pub alpha: f64,
    pub coefficients: Vec<f64>,
    /// Data term of `J_α` at the minimiser.
    pub misfit: f64,
    /// `sqrt(misfit / (‖f‖² + ‖τ‖²))`.
    pub relative_misfit: f64,
    /// Weighted energy of the minimiser over the exterior cylinder.
    pub penalty: f64,
    /// `‖(αG_E + G_A)c − Aᵀd‖ / ‖Aᵀd‖`.
    pub normal_residual: f64,
    /// Smallest eigenvalue of the normal matrix.
    pub normal_min_eigenvalue: f64,
}

impl TikhonovSolution {
    pub fn objective(&self) -> f64 {
        self.misfit + self.alpha * self.penalty
    }
}

/// Minimiser of `J_α` by Cholesky on the normal equations.
pub fn minimize(op: &DataOperator, data: &TikhonovData, alpha: f64) -> Result<TikhonovSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Param(format!("α must be positive, got {alpha}")));
    }
    data.check(op.dim())?;
    let h = op.normal_matrix(alpha);
    let rhs = op.normal_rhs(data);
    let c = DenseCholesky::new(&h)?.solve(&rhs)?;
    let hc = linalg::dense_matvec(&h, &c);
    let rhs_norm = linalg::norm2(&rhs);
    let normal_residual = if rhs_norm == 0.0 {
        linalg::norm2(&hc)
    } else {
        linalg::norm2(&hc.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / rhs_norm
    };
    let (vals, _) = linalg::symmetric_eigen(&h)?;
    let misfit = op.misfit(&c, data)?;
    let norm2 = op.data_norm_squared(data)?;
    Ok(TikhonovSolution {
        alpha,
        relative_misfit: if norm2 > 0.0 { (misfit / norm2).sqrt() } else { misfit.sqrt() },
        misfit,
        penalty: op.penalty(&c)?,
        coefficients: c,
        normal_residual,
        normal_min_eigenvalue: vals[0],
    })
}

#[derive(Clone, Debug)]
pub struct AlphaSweep {
    pub rows: Vec<TikhonovSolution>,
    pub misfit_nonincreasing: bool,
    pub penalty_nondecreasing: bool,
}

/// Relative slack allowed in the monotonicity checks for rounding.
const MONOTONE_SLACK: f64 = 1e-9;

/// Solves along a decreasing schedule and checks the Tikhonov monotonicity of
/// misfit and penalty.
pub fn alpha_sweep(op: &DataOperator, data: &TikhonovData, alphas: &[f64]) -> Result<AlphaSweep> {
    if alphas.is_empty() {
        return Err(Error::Param("α schedule is empty".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Param("α schedule must be strictly decreasing".into()));
    }
    let rows = alphas
        .par_iter()
        .map(|&a| minimize(op, data, a))
        .collect::<Result<Vec<_>>>()?;
    let floor = MONOTONE_SLACK * op.data_norm_squared(data)?;
    let misfit_nonincreasing = rows
        .windows(2)
        .all(|w| w[1].misfit <= w[0].misfit * (1.0 + MONOTONE_SLACK) + floor);
    let penalty_nondecreasing = rows
        .windows(2)
        .all(|w| w[1].penalty >= w[0].penalty * (1.0 - MONOTONE_SLACK));
    Ok(AlphaSweep {
        rows,
        misfit_nonincreasing,
        penalty_nondecreasing,
    })
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub probes: usize,
    pub violations: usize,
    /// Smallest `J_α(c + δ) − J_α(c)` over the probes.
    pub min_increase: f64,
}

/// Random perturbations `δ` of size `scale · ‖c‖` (or `scale` when `c = 0`);
/// a probe fails when `J_α(c + δ) < J_α(c)`.
pub fn optimality_probes(
    op: &DataOperator,
    data: &TikhonovData,
    solution: &TikhonovSolution,
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<ProbeReport> {
    let c = &solution.coefficients;
    let base = op.objective(c, data, solution.alpha)?;
    let size = scale * linalg::norm2(c).max(f64::MIN_POSITIVE).max(if c.iter().all(|v| *v == 0.0) { 1.0 } else { 0.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut min_increase = f64::INFINITY;
    for _ in 0..count {
        let mut d: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let dn = linalg::norm2(&d);
        d.iter_mut().for_each(|x| *x *= size / dn);
        let trial: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
        let increase = op.objective(&trial, data, solution.alpha)? - base;
        if increase < 0.0 {
            violations += 1;
        }
        min_increase = min_increase.min(increase);
    }
    Ok(ProbeReport {
        probes: count,
        violations,
        min_increase,
    })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub solution: TikhonovSolution,
    pub pair: CauchyPair,
    /// Tail fraction of the vertical integral.
    pub relative_tail: f64,
}

/// Minimises `J_α`, continues the exterior field into the Ω cylinder with zero
/// weighted Neumann data on Ω × {0}, and extracts Cauchy data of the vertical
/// integral.
pub fn reconstruct_cauchy_from_data(
    op: &DataOperator,
    local: &LocalOperator,
    data: &TikhonovData,
    alpha: f64,
) -> Result<Reconstruction> {
    if local.grid().len() != op.grid().len() {
        return Err(Error::MeshMismatch("local operator and data operator grids differ".into()));
    }
    let solution = minimize(op, data, alpha)?;
    let exterior = op.field(&solution.coefficients)?;
    let mesh = op.extension().mesh();
    let grid = op.grid();
    let mut interior_column = vec![false; grid.len()];
    for &i in grid.omega_interior_nodes() {
        interior_column[i] = true;
    }
    let fixed: Vec<bool> = (0..mesh.len())
        .map(|k| !interior_column[mesh.split(k).0])
        .collect();
    let glued = op
        .extension()
        .solver(TraceCondition::Fixed(fixed))?
        .solve(exterior.values(), None)?;
    let v = partial_vertical_integral_with(&glued, 0.0, DEFAULT_TAIL_FRACTION)?;
    let pair = CauchyPair::from_vertical_integral(&v, local, data.trace.clone())?;
    Ok(Reconstruction {
        solution,
        pair,
        relative_tail: v.relative_tail,
    })
}
