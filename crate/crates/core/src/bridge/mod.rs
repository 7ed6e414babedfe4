//! From nonlocal to local data: the vertical integral
//! `v(x') = ∫₀^∞ t^{1-2s} ũ(x', t) dt` of an extension solves the local
//! conductivity equation in Ω, which turns exterior data `(f, Λ_s f)` into
//! Cauchy data `(v|∂Ω, ∂_ν v|∂Ω)`.
//!
//! Sign and scale follow from integrating the extension equation in `t`:
//! `−∇'·a∇'v = −τ = c_s⁻¹ (−L)^s u` with `τ = lim y^{1-2s}∂_y ũ`.

pub mod density;
pub mod duality;

use std::sync::Arc;

use faer::Mat;
use statrs::function::gamma::{gamma, gamma_ur};

use crate::coefficient::Coefficient;
use crate::error::{check_len, Error, Result};
use crate::extension::{analytic_constant, ExtensionField, ExtensionOperator, ExtensionSolver, TraceCondition};
use crate::fractional::{FractionalDirichlet, SpectralPower};
use crate::linalg::{self, DenseCholesky};
use crate::local::{assemble_local, region_stiffness, LocalOperator};
use crate::mesh::{BoxRegion, ExtensionMesh, TangentialGrid, VerticalMesh, VerticalSpec};

pub use density::{
    density_diagnostic, distinguishability, DensityReport, DistinguishabilityReport,
};
pub use duality::{duality_check, duality_transform, DualityReport};

/// Default bound on the relative truncation tail of a vertical integral.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.01;

/// How the vertical integral was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// Exact weighted measures against the piecewise-linear interpolant in `t`.
    WeightedLinear,
}

/// `∫_y^∞ t^{1-2s} ũ dt` on the tangential grid.
#[derive(Clone, Debug)]
pub struct VerticalIntegralField {
    pub values: Vec<f64>,
    pub scheme: QuadratureScheme,
    /// Lower integration limit.
    pub from: f64,
    /// Estimated `∫_M^∞` contribution per tangential node (absolute).
    pub tail: Vec<f64>,
    /// `‖tail‖ / ‖∫₀^∞‖`.
    pub relative_tail: f64,
}

impl VerticalIntegralField {
    /// `v` on Ω̄, ordered as `grid.omega_nodes()`.
    pub fn on_omega(&self, grid: &TangentialGrid) -> Vec<f64> {
        grid.restrict(&self.values, grid.omega_nodes())
    }
}

pub fn vertical_integral(field: &ExtensionField) -> Result<VerticalIntegralField> {
    partial_vertical_integral(field, 0.0)
}

pub fn partial_vertical_integral(field: &ExtensionField, from: f64) -> Result<VerticalIntegralField> {
    partial_vertical_integral_with(field, from, DEFAULT_TAIL_FRACTION)
}

/// Cell-by-cell quadrature above `from` plus an exponential tail estimate.
///
/// The tail envelope `|u_b| e^{−κ(t − y_b)}` is fitted per column on the
/// levels nearest `M/2` and `3M/4`, which stay clear of the truncation layer
/// at `y = M`. A column that does not decay there gets an infinite tail.
pub fn partial_vertical_integral_with(
    field: &ExtensionField,
    from: f64,
    allowed: f64,
) -> Result<VerticalIntegralField> {
    let vertical = field.mesh().vertical();
    let levels = vertical.levels();
    let height = vertical.height();
    if !(from >= 0.0 && from <= height) {
        return Err(Error::Param(format!("lower limit {from} outside [0, {height}]")));
    }
    let nt = field.mesh().grid().len();
    let (ja, jb) = envelope_levels(levels);
    let column_integral = |col: &[f64], from: f64| {
        let mut sum = 0.0;
        for c in 0..vertical.cells() {
            if levels[c + 1] <= from {
                continue;
            }
            let lower = from.max(levels[c]);
            sum += vertical.partial_cell_integral(c, lower, col[c], col[c + 1]);
        }
        sum
    };
    let mut values = vec![0.0; nt];
    let mut full = vec![0.0; nt];
    let mut tail = vec![0.0; nt];
    for t in 0..nt {
        let col = field.column(t);
        values[t] = column_integral(col, from);
        full[t] = if from == 0.0 { values[t] } else { column_integral(col, 0.0) };
        tail[t] = envelope_tail(vertical, levels[ja], col[ja], levels[jb], col[jb]);
    }
    // the tail is judged against the whole integral, so it stays meaningful near y = M
    let norm = linalg::norm2(&full);
    let tail_norm = linalg::norm2(&tail);
    let relative_tail = if tail_norm == 0.0 { 0.0 } else { tail_norm / norm };
    if !(relative_tail <= allowed) {
        return Err(Error::Tail {
            bound: relative_tail,
            allowed,
        });
    }
    Ok(VerticalIntegralField {
        values,
        scheme: QuadratureScheme::WeightedLinear,
        from,
        tail,
        relative_tail,
    })
}

fn envelope_levels(levels: &[f64]) -> (usize, usize) {
    let m = *levels.last().unwrap();
    let nearest = |y: f64| {
        (0..levels.len())
            .min_by(|&a, &b| (levels[a] - y).abs().total_cmp(&(levels[b] - y).abs()))
            .unwrap()
    };
    let ja = nearest(0.5 * m);
    let jb = nearest(0.75 * m).max(ja + 1);
    (ja, jb)
}

/// `∫_M^∞ t^β |u_b| e^{−κ(t − y_b)} dt` with `κ = ln(|u_a|/|u_b|)/(y_b − y_a)`.
fn envelope_tail(vertical: &VerticalMesh, ya: f64, ua: f64, yb: f64, ub: f64) -> f64 {
    let (ua, ub) = (ua.abs(), ub.abs());
    if ub == 0.0 {
        return 0.0;
    }
    if ua <= ub {
        return f64::INFINITY;
    }
    let kappa = (ua / ub).ln() / (yb - ya);
    let p = 2.0 - 2.0 * vertical.order();
    let m = vertical.height();
    let x = kappa * m;
    // e^{κ y_b} Γ(p, κM), switching to the asymptotic form before overflow
    let scaled = if x < 50.0 {
        (kappa * yb).exp() * gamma_ur(p, x) * gamma(p)
    } else {
        (kappa * (yb - m)).exp() * x.powf(p - 1.0) * (1.0 + (p - 1.0) / x)
    };
    ub * scaled / kappa.powf(p)
}

/// Which form of the local equation a residual tests.
#[derive(Clone, Debug)]
pub enum ResidualMode {
    /// `−∇'·a∇'v = 0` in Ω.
    Homogeneous,
    /// `−∇'·a∇'v = c_s⁻¹ (−L)^s u_f` in a neighbourhood Ω' of Ω̄; the
    /// right-hand side is a full-grid nodal field.
    WithSource { rhs: Vec<f64>, region: BoxRegion },
}

/// Weak residual of the local equation over the nodal test functions
/// supported in the test region.
#[derive(Clone, Debug)]
pub struct LocalResidual {
    /// `sup_φ |⟨a∇v,∇φ⟩ − ⟨rhs,φ⟩| / ‖φ‖_{H¹}` over the span of the test basis.
    pub dual_norm: f64,
    /// `‖v‖_{H¹}` on the test region.
    pub solution_norm: f64,
    pub normalized: f64,
    pub test_nodes: usize,
}

/// Nodes of a region whose full stencil stays inside it.
fn region_interior(grid: &TangentialGrid, mask: &[bool]) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| {
            mask[i]
                && (0..grid.dim()).all(|d| {
                    [true, false]
                        .iter()
                        .all(|&fw| grid.neighbor(i, d, fw).is_some_and(|k| mask[k]))
                })
        })
        .collect()
}

/// Discrete weak residual of `v` against the local operator.
///
/// The residual `r = K v − w·rhs` is measured in the dual of the `H¹` norm
/// `φᵀ(K + wI)φ` over test functions vanishing off the region interior,
/// normalised by the `H¹` norm of `v` over the region.
pub fn verify_local_equation(
    v: &VerticalIntegralField,
    op: &LocalOperator,
    mode: &ResidualMode,
) -> Result<LocalResidual> {
    let grid = op.grid();
    check_len("vertical integral", grid.len(), v.values.len())?;
    let (mask, rhs) = match mode {
        ResidualMode::Homogeneous => (grid.omega_mask(), None),
        ResidualMode::WithSource { rhs, region } => {
            check_len("right-hand side", grid.len(), rhs.len())?;
            (grid.region_mask(region), Some(rhs))
        }
    };
    let test = region_interior(grid, &mask);
    if test.is_empty() {
        return Err(Error::Resolution("test region has no interior nodes".into()));
    }
    let w = grid.node_weight();
    let kv = linalg::matvec(op.stiffness(), &v.values);
    let r: Vec<f64> = test
        .iter()
        .map(|&i| kv[i] - rhs.map_or(0.0, |f| w * f[i]))
        .collect();
    let k_tt = linalg::to_dense(&linalg::submatrix(op.stiffness(), &test, &test)?);
    let h1 = Mat::<f64>::from_fn(test.len(), test.len(), |i, j| {
        k_tt[(i, j)] + if i == j { w } else { 0.0 }
    });
    let x = DenseCholesky::new(&h1)?.solve(&r)?;
    let dual_norm = linalg::dot(&r, &x).max(0.0).sqrt();

    let k_region = region_stiffness(grid, op.coefficient(), Some(&mask), false)?;
    let v_masked: Vec<f64> = v
        .values
        .iter()
        .zip(&mask)
        .map(|(x, m)| if *m { *x } else { 0.0 })
        .collect();
    let kr = linalg::matvec(&k_region, &v_masked);
    let solution_norm = (linalg::dot(&v_masked, &kr) + w * linalg::dot(&v_masked, &v_masked))
        .max(0.0)
        .sqrt();
    let normalized = if dual_norm == 0.0 { 0.0 } else { dual_norm / solution_norm };
    Ok(LocalResidual {
        dual_norm,
        solution_norm,
        normalized,
        test_nodes: test.len(),
    })
}

/// Cauchy data `(v|∂Ω, ∂_ν v|∂Ω)` on the ∂Ω nodes, with the exterior datum that
/// produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyPair {
    pub trace: Vec<f64>,
    pub flux: Vec<f64>,
    /// Exterior datum on the W nodes.
    pub source: Vec<f64>,
}

impl CauchyPair {
    /// Cauchy data of a vertical integral; the flux is the variational
    /// co-normal derivative of `v` on Ω̄.
    pub fn from_vertical_integral(
        v: &VerticalIntegralField,
        op: &LocalOperator,
        source: Vec<f64>,
    ) -> Result<Self> {
        let grid = op.grid();
        let v_omega = v.on_omega(grid);
        Ok(Self {
            trace: grid.restrict(&v.values, grid.omega_boundary_nodes()),
            flux: op.boundary_flux(&v_omega)?,
            source,
        })
    }

    /// `trace` followed by `flux`.
    pub fn stacked(&self) -> Vec<f64> {
        self.trace.iter().chain(&self.flux).copied().collect()
    }

    /// Relative Euclidean distance of the stacked data.
    pub fn relative_error(&self, reference: &CauchyPair) -> f64 {
        linalg::relative_error(&self.stacked(), &reference.stacked())
    }

    /// Componentwise relative errors `(trace, flux)`.
    pub fn component_errors(&self, reference: &CauchyPair) -> (f64, f64) {
        (
            linalg::relative_error(&self.trace, &reference.trace),
            linalg::relative_error(&self.flux, &reference.flux),
        )
    }
}

/// Spectral solve, full-trace extension, vertical integral and boundary
/// extraction for one coefficient and order.
pub struct BridgePipeline {
    local: Arc<LocalOperator>,
    oracle: FractionalDirichlet,
    extension: Arc<ExtensionOperator>,
    full_trace: ExtensionSolver,
    order: f64,
    constant: f64,
    tail_fraction: f64,
}

impl BridgePipeline {
    pub fn new(
        grid: Arc<TangentialGrid>,
        coefficient: Arc<Coefficient>,
        order: f64,
        vertical: &VerticalSpec,
    ) -> Result<Self> {
        let local = Arc::new(assemble_local(grid.clone(), coefficient.clone())?);
        let power = Arc::new(SpectralPower::new(&local, order)?);
        let (a_min, _) = coefficient.ellipticity_bounds();
        let vmesh = vertical.resolve(order, &grid, a_min)?;
        Self::from_parts(local, power, vmesh)
    }

    /// Reuses an assembled local operator and spectral power.
    pub fn from_parts(
        local: Arc<LocalOperator>,
        power: Arc<SpectralPower>,
        vertical: VerticalMesh,
    ) -> Result<Self> {
        let order = power.order();
        if (vertical.order() - order).abs() > 1e-14 {
            return Err(Error::MeshMismatch(format!(
                "vertical mesh built for s = {}, power has s = {order}",
                vertical.order()
            )));
        }
        let grid = local.grid().clone();
        let extension = Arc::new(ExtensionOperator::assemble(
            ExtensionMesh::new(grid, vertical),
            local.coefficient(),
        )?);
        let full_trace = extension.solver(TraceCondition::FullTrace)?;
        Ok(Self {
            oracle: FractionalDirichlet::new(power)?,
            full_trace,
            extension,
            local,
            order,
            constant: analytic_constant(order),
            tail_fraction: DEFAULT_TAIL_FRACTION,
        })
    }

    pub fn with_tail_fraction(mut self, allowed: f64) -> Self {
        self.tail_fraction = allowed;
        self
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        self.local.grid()
    }

    pub fn local(&self) -> &Arc<LocalOperator> {
        &self.local
    }

    pub fn oracle(&self) -> &FractionalDirichlet {
        &self.oracle
    }

    pub fn extension(&self) -> &Arc<ExtensionOperator> {
        &self.extension
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// `c_s` in `(−L)^s u = −c_s τ`.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    /// Extension whose trace is the fractional solution `u_f` everywhere.
    pub fn extend(&self, f_w: &[f64]) -> Result<(Vec<f64>, ExtensionField)> {
        let u = self.oracle.solve(f_w)?;
        let field = self.full_trace.solve_trace(&u)?;
        Ok((u, field))
    }

    pub fn vertical_integral(&self, f_w: &[f64]) -> Result<VerticalIntegralField> {
        let (_, field) = self.extend(f_w)?;
        partial_vertical_integral_with(&field, 0.0, self.tail_fraction)
    }

    /// The Cauchy-data map `f ↦ (v|∂Ω, ∂_ν v|∂Ω)`.
    pub fn operator_t(&self, f_w: &[f64]) -> Result<CauchyPair> {
        let v = self.vertical_integral(f_w)?;
        CauchyPair::from_vertical_integral(&v, &self.local, f_w.to_vec())
    }

    /// Right-hand side `c_s⁻¹ (−L_h)^s u_f` of the local equation on the grid.
    pub fn source_term(&self, u: &[f64]) -> Result<Vec<f64>> {
        let pu = self.oracle.power().apply(u)?;
        Ok(pu.into_iter().map(|x| x / self.constant).collect())
    }

    /// Default neighbourhood Ω' of Ω̄: Ω grown by a quarter of its distance
    /// to W, which keeps the test region clear of the steep source near W.
    pub fn default_neighbourhood(&self) -> BoxRegion {
        let spec = self.grid().spec();
        let (o, w) = (&spec.omega, &spec.w);
        let gap = (0..o.dim())
            .map(|d| (w.lo[d] - o.hi[d]).max(o.lo[d] - w.hi[d]))
            .fold(f64::NEG_INFINITY, f64::max);
        o.expanded(0.25 * gap.max(0.0))
    }

    /// Homogeneous residual in Ω.
    pub fn homogeneous_residual(&self, f_w: &[f64]) -> Result<LocalResidual> {
        let v = self.vertical_integral(f_w)?;
        verify_local_equation(&v, &self.local, &ResidualMode::Homogeneous)
    }

    /// Residual against the spectral right-hand side on `region`.
    pub fn source_residual(&self, f_w: &[f64], region: Option<BoxRegion>) -> Result<LocalResidual> {
        let (u, field) = self.extend(f_w)?;
        let v = partial_vertical_integral_with(&field, 0.0, self.tail_fraction)?;
        let rhs = self.source_term(&u)?;
        let region = region.unwrap_or_else(|| self.default_neighbourhood());
        verify_local_equation(&v, &self.local, &ResidualMode::WithSource { rhs, region })
    }
}
