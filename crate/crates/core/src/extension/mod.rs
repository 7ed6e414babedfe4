//! Degenerate weighted extension problem
//! `∇·(y^{1-2s} ã ∇ũ) = 0` on `box × (0, M)`, `ã = diag(a, 1)`.
//!
//! Discretisation is tangential finite differences tensored with vertical
//! elements linear in `ζ = y^{2s}/(2s)`: `A = K_t ⊗ Q + M_t ⊗ K_y`, where `Q`
//! holds the lumped weighted vertical masses, `K_y` the exact vertical
//! stiffness `1/Δζ` per cell and `M_t` the tangential lumped mass. Both factors are
//! M-matrices, so `A` satisfies a discrete maximum principle. The top level
//! `y = M` is homogeneous Dirichlet.

pub mod calibration;
pub mod kernel;

use std::sync::Arc;

use crate::coefficient::Coefficient;
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, Sparse, SymmetricSolver, TripletBuilder};
use crate::local::full_stiffness;
use crate::mesh::{ExtensionMesh, TangentialGrid};

pub use calibration::{analytic_constant, calibrate_cs, fit_constant, CalibrationConstant};
pub use kernel::{decay_diagnostic, DecayReport, KernelExtension};

/// Assembled weighted stiffness on an extension mesh.
pub struct ExtensionOperator {
    mesh: ExtensionMesh,
    tangential_mass: Vec<f64>,
    matrix: Sparse,
}

impl ExtensionOperator {
    /// Whole-box operator for coefficient `a`.
    pub fn assemble(mesh: ExtensionMesh, coefficient: &Coefficient) -> Result<Self> {
        let grid = mesh.grid().clone();
        check_len("coefficient nodes", grid.len(), coefficient.len())?;
        let k_t = full_stiffness(&grid, coefficient)?;
        let mass = vec![grid.node_weight(); grid.len()];
        Self::from_parts(mesh, &k_t, mass)
    }

    /// Operator from a tangential stiffness and lumped tangential mass, used to
    /// restrict the energy to a sub-cylinder.
    pub fn from_parts(mesh: ExtensionMesh, k_t: &Sparse, tangential_mass: Vec<f64>) -> Result<Self> {
        let nt = mesh.grid().len();
        check_len("tangential mass", nt, tangential_mass.len())?;
        if k_t.nrows() != nt || k_t.ncols() != nt {
            return Err(Error::Dimension {
                what: "tangential stiffness",
                expected: nt,
                got: k_t.nrows(),
            });
        }
        let vertical = mesh.vertical();
        let levels = mesh.levels_per_column();
        let q = vertical.nodal_weights();
        let mut b = TripletBuilder::new(mesh.len(), mesh.len());
        let cp = k_t.symbolic().col_ptr();
        let ri = k_t.symbolic().row_idx();
        for t2 in 0..nt {
            for k in cp[t2]..cp[t2 + 1] {
                let (t1, v) = (ri[k], k_t.val()[k]);
                for (j, qj) in q.iter().enumerate() {
                    b.add(mesh.node(t1, j), mesh.node(t2, j), v * qj);
                }
            }
        }
        for (t, m) in tangential_mass.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for c in 0..levels - 1 {
                b.add_edge(mesh.node(t, c), mesh.node(t, c + 1), m * vertical.cell_stiffness(c));
            }
        }
        Ok(Self {
            matrix: b.build()?,
            mesh,
            tangential_mass,
        })
    }

    pub fn mesh(&self) -> &ExtensionMesh {
        &self.mesh
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        self.mesh.grid()
    }

    pub fn order(&self) -> f64 {
        self.mesh.order()
    }

    pub fn matrix(&self) -> &Sparse {
        &self.matrix
    }

    pub fn tangential_mass(&self) -> &[f64] {
        &self.tangential_mass
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("extension field", self.mesh.len(), u.len())?;
        Ok(linalg::matvec(&self.matrix, u))
    }

    /// Discrete weighted energy `∫ y^{1-2s} ã∇u·∇u`.
    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        let au = self.apply(u)?;
        Ok(linalg::dot(u, &au))
    }

    /// Bilinear form `∫ y^{1-2s} ã∇u·∇v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let av = self.apply(v)?;
        Ok(linalg::dot(u, &av))
    }

    /// Relative residual of the bulk equation in a diagonally scaled dual norm,
    /// `sqrt(Σ r_k²/A_kk) / sqrt(uᵀAu)`, over rows at levels `1..J-1` whose
    /// tangential node is not adjacent to the box edge.
    pub fn bulk_residual(&self, u: &[f64]) -> Result<f64> {
        let au = self.apply(u)?;
        let energy = linalg::dot(u, &au);
        let grid = self.grid();
        let mesh = &self.mesh;
        let top = mesh.levels_per_column() - 1;
        let mut sum = 0.0;
        for t in 0..grid.len() {
            let inner = (0..grid.dim()).all(|d| {
                grid.neighbor(t, d, true).is_some() && grid.neighbor(t, d, false).is_some()
            });
            if !inner || self.tangential_mass[t] == 0.0 {
                continue;
            }
            for j in 1..top {
                let k = mesh.node(t, j);
                let d = linalg::diagonal_entry(&self.matrix, k);
                sum += au[k] * au[k] / d;
            }
        }
        if energy <= 0.0 {
            return Ok(if sum == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok((sum / energy).sqrt())
    }

    pub fn solver(self: &Arc<Self>, condition: TraceCondition) -> Result<ExtensionSolver> {
        ExtensionSolver::new(self.clone(), condition)
    }
}

/// Boundary conditions on the trace `y = 0`; the top `y = M` is always
/// homogeneous Dirichlet.
#[derive(Clone, Debug)]
pub enum TraceCondition {
    /// Dirichlet on trace nodes outside Ω̄, zero weighted Neumann on Ω̄.
    Mixed,
    /// Dirichlet on every trace node.
    FullTrace,
    /// Weighted Neumann on every trace node.
    Neumann,
    /// Dirichlet on an arbitrary node set of the mesh (top level added).
    Fixed(Vec<bool>),
}

/// Factorised extension problem for one set of Dirichlet nodes.
pub struct ExtensionSolver {
    op: Arc<ExtensionOperator>,
    fixed: Vec<bool>,
    free: Vec<usize>,
    fixed_nodes: Vec<usize>,
    a_fd: Sparse,
    solver: SymmetricSolver,
}

impl ExtensionSolver {
    pub fn new(op: Arc<ExtensionOperator>, condition: TraceCondition) -> Result<Self> {
        let mesh = op.mesh();
        let grid = mesh.grid();
        let top = mesh.levels_per_column() - 1;
        let mut fixed = match &condition {
            TraceCondition::Fixed(mask) => {
                check_len("fixed-node mask", mesh.len(), mask.len())?;
                mask.clone()
            }
            _ => vec![false; mesh.len()],
        };
        for t in 0..grid.len() {
            fixed[mesh.node(t, top)] = true;
            let trace_fixed = match condition {
                TraceCondition::Mixed => !grid.in_omega(t),
                TraceCondition::FullTrace => true,
                _ => false,
            };
            if trace_fixed {
                fixed[mesh.node(t, 0)] = true;
            }
        }
        // columns without tangential mass are decoupled from the weight and pinned
        for (t, m) in op.tangential_mass().iter().enumerate() {
            if *m == 0.0 {
                for j in 0..=top {
                    let node = mesh.node(t, j);
                    if linalg::diagonal_entry(&op.matrix, node) == 0.0 {
                        fixed[node] = true;
                    }
                }
            }
        }
        let free: Vec<usize> = (0..mesh.len()).filter(|&k| !fixed[k]).collect();
        let fixed_nodes: Vec<usize> = (0..mesh.len()).filter(|&k| fixed[k]).collect();
        let a_ff = linalg::submatrix(&op.matrix, &free, &free)?;
        let a_fd = linalg::submatrix(&op.matrix, &free, &fixed_nodes)?;
        let solver = SymmetricSolver::new(a_ff)?;
        Ok(Self {
            op,
            fixed,
            free,
            fixed_nodes,
            a_fd,
            solver,
        })
    }

    pub fn operator(&self) -> &Arc<ExtensionOperator> {
        &self.op
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    /// Solves with Dirichlet values taken from `values` on fixed nodes and an
    /// optional load vector on free nodes.
    pub fn solve(&self, values: &[f64], load: Option<&[f64]>) -> Result<ExtensionField> {
        let n = self.op.mesh().len();
        check_len("Dirichlet values", n, values.len())?;
        if let Some(l) = load {
            check_len("load vector", n, l.len())?;
        }
        let ud: Vec<f64> = self.fixed_nodes.iter().map(|&k| values[k]).collect();
        let coupling = linalg::matvec(&self.a_fd, &ud);
        let rhs: Vec<f64> = self
            .free
            .iter()
            .zip(&coupling)
            .map(|(&k, c)| load.map_or(0.0, |l| l[k]) - c)
            .collect();
        let uf = self.solver.solve(&rhs)?;
        let mut u = vec![0.0; n];
        for (k, &node) in self.fixed_nodes.iter().enumerate() {
            u[node] = ud[k];
        }
        for (k, &node) in self.free.iter().enumerate() {
            u[node] = uf[k];
        }
        Ok(ExtensionField {
            op: self.op.clone(),
            values: u,
        })
    }

    /// Dirichlet data given as a tangential field at `y = 0`.
    pub fn solve_trace(&self, f: &[f64]) -> Result<ExtensionField> {
        let mesh = self.op.mesh();
        check_len("trace data", mesh.grid().len(), f.len())?;
        let mut values = vec![0.0; mesh.len()];
        for (t, v) in f.iter().enumerate() {
            values[mesh.node(t, 0)] = *v;
        }
        self.solve(&values, None)
    }

    /// Weighted Neumann datum `h = lim y^{1-2s}∂_y ũ` on the free trace nodes.
    pub fn solve_neumann(&self, h: &[f64]) -> Result<ExtensionField> {
        let mesh = self.op.mesh();
        check_len("Neumann data", mesh.grid().len(), h.len())?;
        let mut load = vec![0.0; mesh.len()];
        for (t, v) in h.iter().enumerate() {
            load[mesh.node(t, 0)] = -self.op.tangential_mass()[t] * v;
        }
        self.solve(&vec![0.0; mesh.len()], Some(&load))
    }
}

/// Mixed problem with exterior data `f` given on the tangential grid;
/// values of `f` on Ω̄ are ignored.
pub fn solve_extension(op: &Arc<ExtensionOperator>, order: f64, f: &[f64]) -> Result<ExtensionField> {
    if (order - op.order()).abs() > 1e-14 {
        return Err(Error::MeshMismatch(format!(
            "solve requested for s = {order} on a mesh built for s = {}",
            op.order()
        )));
    }
    op.solver(TraceCondition::Mixed)?.solve_trace(f)
}

/// Nodal values of a discrete extension.
#[derive(Clone)]
pub struct ExtensionField {
    op: Arc<ExtensionOperator>,
    values: Vec<f64>,
}

impl std::fmt::Debug for ExtensionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtensionField")
            .field("order", &self.op.order())
            .field("nodes", &self.values.len())
            .finish()
    }
}

/// Which estimator produced a weighted Neumann trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEstimator {
    /// Residual of the `y = 0` stiffness rows over the tangential mass.
    Variational,
    /// `(ũ(·, y₁) − ũ(·, 0)) / ζ(y₁)` with `ζ = y^{2s}/(2s)`.
    Quotient,
}

/// Weighted Neumann trace `lim y^{1-2s}∂_y ũ` on the tangential grid.
#[derive(Clone, Debug)]
pub struct WeightedTrace {
    pub variational: Vec<f64>,
    pub quotient: Vec<f64>,
}

impl WeightedTrace {
    pub fn values(&self, estimator: TraceEstimator) -> &[f64] {
        match estimator {
            TraceEstimator::Variational => &self.variational,
            TraceEstimator::Quotient => &self.quotient,
        }
    }
}

impl ExtensionField {
    /// Wraps arbitrary nodal values (synthetic fields, combinations).
    pub fn from_values(op: Arc<ExtensionOperator>, values: Vec<f64>) -> Result<Self> {
        check_len("extension field", op.mesh().len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("extension field must be finite".into()));
        }
        Ok(Self { op, values })
    }

    /// Samples `f(x', y)` at every node.
    pub fn from_fn(
        op: Arc<ExtensionOperator>,
        f: impl Fn(&crate::mesh::Point, f64) -> f64,
    ) -> Result<Self> {
        let mesh = op.mesh();
        let levels = mesh.vertical().levels();
        let mut values = vec![0.0; mesh.len()];
        for t in 0..mesh.grid().len() {
            let x = mesh.grid().coord(t);
            for (j, y) in levels.iter().enumerate() {
                values[mesh.node(t, j)] = f(&x, *y);
            }
        }
        Self::from_values(op, values)
    }

    pub fn operator(&self) -> &Arc<ExtensionOperator> {
        &self.op
    }

    pub fn mesh(&self) -> &ExtensionMesh {
        self.op.mesh()
    }

    pub fn order(&self) -> f64 {
        self.op.order()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, t: usize, j: usize) -> f64 {
        self.values[self.mesh().node(t, j)]
    }

    pub fn level(&self, j: usize) -> Vec<f64> {
        (0..self.mesh().grid().len()).map(|t| self.at(t, j)).collect()
    }

    pub fn trace(&self) -> Vec<f64> {
        self.level(0)
    }

    pub fn column(&self, t: usize) -> &[f64] {
        let l = self.mesh().levels_per_column();
        &self.values[t * l..(t + 1) * l]
    }

    pub fn energy(&self) -> Result<f64> {
        self.op.energy(&self.values)
    }

    pub fn neumann_trace(&self) -> Result<WeightedTrace> {
        let mesh = self.mesh();
        let au = self.op.apply(&self.values)?;
        let y1 = mesh.vertical().levels()[1];
        let zeta1 = mesh.vertical().natural_coordinate(y1);
        let nt = mesh.grid().len();
        let mut variational = vec![0.0; nt];
        let mut quotient = vec![0.0; nt];
        for t in 0..nt {
            let m = self.op.tangential_mass()[t];
            variational[t] = if m > 0.0 { -au[mesh.node(t, 0)] / m } else { 0.0 };
            quotient[t] = (self.at(t, 1) - self.at(t, 0)) / zeta1;
        }
        Ok(WeightedTrace {
            variational,
            quotient,
        })
    }

    pub fn scaled(&self, c: f64) -> ExtensionField {
        ExtensionField {
            op: self.op.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &ExtensionField) -> Result<ExtensionField> {
        check_len("extension field", self.values.len(), other.values.len())?;
        Ok(ExtensionField {
            op: self.op.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_tangential_grid, BoxRegion, GeometrySpec, VerticalMesh};

    fn operator(n: usize, order: f64, height: f64, cells: usize) -> Arc<ExtensionOperator> {
        let g = Arc::new(
            build_tangential_grid(&GeometrySpec {
                omega: BoxRegion::new(vec![0.0], vec![1.0]),
                w: BoxRegion::new(vec![1.5], vec![2.0]),
                nodes_per_axis: n,
                padding: None,
            })
            .unwrap(),
        );
        let v = VerticalMesh::build(order, height, cells, VerticalMesh::default_grading(order)).unwrap();
        let a = Coefficient::identity(&g);
        Arc::new(ExtensionOperator::assemble(ExtensionMesh::new(g, v), &a).unwrap())
    }

    #[test]
    fn operator_is_symmetric() {
        let op = operator(16, 0.3, 2.0, 16);
        let d = linalg::to_dense(op.matrix());
        for i in 0..d.nrows() {
            for j in 0..i {
                assert!((d[(i, j)] - d[(j, i)]).abs() <= 1e-14 * d[(i, i)].abs());
            }
        }
    }

    #[test]
    fn full_trace_constant_gives_constant_away_from_top() {
        let op = operator(24, 0.5, 6.0, 32);
        let solver = op.solver(TraceCondition::FullTrace).unwrap();
        let nt = op.grid().len();
        let u = solver.solve_trace(&vec![1.0; nt]).unwrap();
        // the solution is bounded by the data (maximum principle)
        assert!(u.values().iter().all(|v| *v >= -1e-12 && *v <= 1.0 + 1e-12));
        let tr = u.neumann_trace().unwrap();
        assert!(tr.variational.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn neumann_rows_vanish_on_omega_in_mixed_solve() {
        let op = operator(32, 0.4, 4.0, 24);
        let g = op.grid().clone();
        let f = g.sample(|x| if g.spec().w.contains(x, 0.0) { (x[0] * 3.0).sin() } else { 0.0 });
        let u = solve_extension(&op, 0.4, &f).unwrap();
        let tr = u.neumann_trace().unwrap();
        let scale = linalg::norm_inf(&tr.variational);
        for &i in g.omega_nodes() {
            assert!(tr.variational[i].abs() <= 1e-9 * scale.max(1.0));
        }
        assert!(matches!(
            solve_extension(&op, 0.5, &f),
            Err(Error::MeshMismatch(_))
        ));
    }

    #[test]
    fn power_profile_traces_are_exact() {
        for s in [0.25, 0.5, 0.75] {
            let op = operator(16, s, 3.0, 24);
            let u = ExtensionField::from_fn(op.clone(), |_, y| y.powf(2.0 * s) / (2.0 * s)).unwrap();
            let tr = u.neumann_trace().unwrap();
            assert!(tr.quotient.iter().all(|v| (v - 1.0).abs() < 1e-12));
            // away from the box edge the tangential part vanishes
            for t in 2..14 {
                assert!((tr.variational[t] - 1.0).abs() < 1e-12, "s={s}");
            }
        }
    }

    #[test]
    fn separable_profile_is_discretely_harmonic() {
        // ζ = y^{2s}/(2s) solves (y^{1-2s} ζ')' = 0 and lies in the vertical space
        let s = 0.3;
        let op = operator(16, s, 3.0, 16);
        let zeta = ExtensionField::from_fn(op.clone(), |_, y| y.powf(2.0 * s) / (2.0 * s)).unwrap();
        assert!(op.bulk_residual(zeta.values()).unwrap() < 1e-12);
        let linear = ExtensionField::from_fn(op.clone(), |_, y| y).unwrap();
        assert!(op.bulk_residual(linear.values()).unwrap() > 1e-3);
    }

    #[test]
    fn neumann_solve_reproduces_its_datum() {
        let op = operator(16, 0.6, 3.0, 24);
        let solver = op.solver(TraceCondition::Neumann).unwrap();
        let h: Vec<f64> = (0..16).map(|t| (t as f64 * 0.4).cos()).collect();
        let u = solver.solve_neumann(&h).unwrap();
        let tr = u.neumann_trace().unwrap();
        assert!(linalg::relative_error(&tr.variational, &h) < 1e-10);
    }
}
