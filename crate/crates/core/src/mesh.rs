//! Discrete geometry: the tangential tensor grid carrying Ω and W, the graded
//! vertical mesh for the extension variable, and their tensor product.
//!
//! Tangential nodes sit strictly inside the computational box,
//! `x_i = lo + (i + 1) h`, so the zero Dirichlet truncation at the box edge is
//! carried by implicit ghost nodes and every stored node is an unknown.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const MAX_DIM: usize = 3;

/// A point of the tangential space; entries past the grid dimension are zero.
pub type Point = [f64; MAX_DIM];

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let n = self.lo.len();
        if n == 0 || n > MAX_DIM || self.hi.len() != n {
            return Err(Error::Param(format!(
                "{name}: box must have matching lo/hi of dimension 1..=3"
            )));
        }
        for d in 0..n {
            if !(self.lo[d].is_finite() && self.hi[d].is_finite() && self.lo[d] < self.hi[d]) {
                return Err(Error::Param(format!("{name}: need lo < hi on axis {d}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.dim()).all(|d| x[d] >= self.lo[d] - tol && x[d] <= self.hi[d] + tol)
    }

    pub fn closures_intersect(&self, other: &BoxRegion) -> bool {
        (0..self.dim()).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }

    pub fn hull(&self, other: &BoxRegion) -> BoxRegion {
        let lo = (0..self.dim()).map(|d| self.lo[d].min(other.lo[d])).collect();
        let hi = (0..self.dim()).map(|d| self.hi[d].max(other.hi[d])).collect();
        BoxRegion { lo, hi }
    }

    pub fn expanded(&self, pad: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|v| v - pad).collect(),
            hi: self.hi.iter().map(|v| v + pad).collect(),
        }
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|d| (self.hi[d] - self.lo[d]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; MAX_DIM];
        for d in 0..self.dim() {
            c[d] = 0.5 * (self.lo[d] + self.hi[d]);
        }
        c
    }
}

/// Geometry as read from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub omega: BoxRegion,
    pub w: BoxRegion,
    pub nodes_per_axis: usize,
    /// Margin added around the hull of Ω ∪ W; defaults to the hull diameter.
    #[serde(default)]
    pub padding: Option<f64>,
}

impl GeometrySpec {
    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn computational_box(&self) -> BoxRegion {
        let hull = self.omega.hull(&self.w);
        let pad = self.padding.unwrap_or_else(|| hull.diameter());
        hull.expanded(pad)
    }

    pub fn with_nodes(&self, nodes_per_axis: usize) -> GeometrySpec {
        GeometrySpec {
            nodes_per_axis,
            ..self.clone()
        }
    }

    /// Nested refinement: halves the spacing so every coarse node is a fine node.
    pub fn nested_refinement(&self) -> GeometrySpec {
        self.with_nodes(2 * self.nodes_per_axis + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    OmegaInterior,
    OmegaBoundary,
    W,
    Exterior,
}

/// Uniform tensor grid on the computational box with Ω/W/exterior masks.
#[derive(Clone, Debug)]
pub struct TangentialGrid {
    dim: usize,
    shape: [usize; MAX_DIM],
    lo: Point,
    spacing: Point,
    kinds: Vec<NodeKind>,
    omega_lo: [usize; MAX_DIM],
    omega_hi: [usize; MAX_DIM],
    omega_nodes: Vec<usize>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    w_nodes: Vec<usize>,
    spec: GeometrySpec,
    computational_box: BoxRegion,
}

/// Index range `[first, last]` of grid coordinates inside `[a, b]`.
fn index_range(lo: f64, h: f64, n: usize, a: f64, b: f64) -> Option<(usize, usize)> {
    let tol = 1e-9;
    let first = ((a - lo) / h - 1.0 - tol).ceil().max(0.0);
    let last = ((b - lo) / h - 1.0 + tol).floor().min(n as f64 - 1.0);
    if first > last {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

pub fn build_tangential_grid(spec: &GeometrySpec) -> Result<TangentialGrid> {
    spec.omega.validate("omega")?;
    spec.w.validate("w")?;
    let dim = spec.dim();
    if spec.w.dim() != dim {
        return Err(Error::Param("omega and w must have the same dimension".into()));
    }
    if let Some(p) = spec.padding {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::Param(format!("padding must be >= 0, got {p}")));
        }
    }
    if spec.omega.closures_intersect(&spec.w) {
        return Err(Error::Overlap(format!(
            "Ω = {:?}..{:?} and W = {:?}..{:?}",
            spec.omega.lo, spec.omega.hi, spec.w.lo, spec.w.hi
        )));
    }
    let n = spec.nodes_per_axis;
    if n < 4 {
        return Err(Error::Resolution(format!("need at least 4 nodes per axis, got {n}")));
    }

    let bx = spec.computational_box();
    let mut shape = [1; MAX_DIM];
    let mut lo = [0.0; MAX_DIM];
    let mut spacing = [0.0; MAX_DIM];
    for d in 0..dim {
        shape[d] = n;
        lo[d] = bx.lo[d];
        spacing[d] = (bx.hi[d] - bx.lo[d]) / (n as f64 + 1.0);
    }

    let mut omega_lo = [0; MAX_DIM];
    let mut omega_hi = [0; MAX_DIM];
    let mut w_lo = [0; MAX_DIM];
    let mut w_hi = [0; MAX_DIM];
    for d in 0..dim {
        let (a, b) = index_range(lo[d], spacing[d], n, spec.omega.lo[d], spec.omega.hi[d])
            .ok_or_else(|| Error::Resolution(format!("no grid nodes inside Ω on axis {d}")))?;
        if b - a + 1 < 3 {
            return Err(Error::Resolution(format!(
                "Ω spans {} nodes on axis {d}; at least 3 are needed for an interior",
                b - a + 1
            )));
        }
        omega_lo[d] = a;
        omega_hi[d] = b;
        let (a, b) = index_range(lo[d], spacing[d], n, spec.w.lo[d], spec.w.hi[d])
            .ok_or_else(|| Error::Resolution(format!("no grid nodes inside W on axis {d}")))?;
        w_lo[d] = a;
        w_hi[d] = b;
    }
    let separated =
        (0..dim).any(|d| w_lo[d] > omega_hi[d] + 1 || omega_lo[d] > w_hi[d] + 1);
    if !separated {
        return Err(Error::Resolution(
            "Ω and W node masks touch; refine the grid to leave a gap".into(),
        ));
    }

    let total: usize = shape.iter().product();
    let mut kinds = Vec::with_capacity(total);
    let mut omega_nodes = Vec::new();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut w_nodes = Vec::new();
    for i in 0..total {
        let m = unravel(&shape, i);
        let in_box = |blo: &[usize; MAX_DIM], bhi: &[usize; MAX_DIM]| {
            (0..dim).all(|d| m[d] >= blo[d] && m[d] <= bhi[d])
        };
        let kind = if in_box(&omega_lo, &omega_hi) {
            omega_nodes.push(i);
            let on_face = (0..dim).any(|d| m[d] == omega_lo[d] || m[d] == omega_hi[d]);
            if on_face {
                boundary.push(i);
                NodeKind::OmegaBoundary
            } else {
                interior.push(i);
                NodeKind::OmegaInterior
            }
        } else if in_box(&w_lo, &w_hi) {
            w_nodes.push(i);
            NodeKind::W
        } else {
            NodeKind::Exterior
        };
        kinds.push(kind);
    }

    Ok(TangentialGrid {
        dim,
        shape,
        lo,
        spacing,
        kinds,
        omega_lo,
        omega_hi,
        omega_nodes,
        interior,
        boundary,
        w_nodes,
        spec: spec.clone(),
        computational_box: bx,
    })
}

fn unravel(shape: &[usize; MAX_DIM], mut i: usize) -> [usize; MAX_DIM] {
    let mut m = [0; MAX_DIM];
    for d in 0..MAX_DIM {
        m[d] = i % shape[d];
        i /= shape[d];
    }
    m
}

impl TangentialGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.shape[0]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn spec(&self) -> &GeometrySpec {
        &self.spec
    }

    pub fn computational_box(&self) -> &BoxRegion {
        &self.computational_box
    }

    pub fn multi_index(&self, i: usize) -> [usize; MAX_DIM] {
        unravel(&self.shape, i)
    }

    pub fn index(&self, m: [usize; MAX_DIM]) -> usize {
        m[0] + self.shape[0] * (m[1] + self.shape[1] * m[2])
    }

    pub fn coord(&self, i: usize) -> Point {
        let m = self.multi_index(i);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = self.lo[d] + (m[d] as f64 + 1.0) * self.spacing[d];
        }
        x
    }

    /// Neighbour along `axis`; `None` when the step leaves the grid (ghost node on the box edge).
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut m = self.multi_index(i);
        if forward {
            if m[axis] + 1 >= self.shape[axis] {
                return None;
            }
            m[axis] += 1;
        } else {
            if m[axis] == 0 {
                return None;
            }
            m[axis] -= 1;
        }
        Some(self.index(m))
    }

    /// Node at multi-index `m + offset`, if inside the grid.
    pub fn offset(&self, i: usize, offset: [isize; MAX_DIM]) -> Option<usize> {
        let m = self.multi_index(i);
        let mut out = [0; MAX_DIM];
        for d in 0..MAX_DIM {
            let v = m[d] as isize + offset[d];
            if v < 0 || v as usize >= self.shape[d] {
                return None;
            }
            out[d] = v as usize;
        }
        Some(self.index(out))
    }

    /// Volume of the dual cell of every node.
    pub fn node_weight(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn kind(&self, i: usize) -> NodeKind {
        self.kinds[i]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn in_omega(&self, i: usize) -> bool {
        matches!(self.kinds[i], NodeKind::OmegaInterior | NodeKind::OmegaBoundary)
    }

    /// Nodes of the closed set Ω̄ in grid order.
    pub fn omega_nodes(&self) -> &[usize] {
        &self.omega_nodes
    }

    pub fn omega_interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn omega_boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn w_nodes(&self) -> &[usize] {
        &self.w_nodes
    }

    /// Nodes outside the open set Ω (the closure of Ω_e within the box).
    pub fn exterior_closure_mask(&self) -> Vec<bool> {
        self.kinds
            .iter()
            .map(|k| *k != NodeKind::OmegaInterior)
            .collect()
    }

    pub fn omega_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.in_omega(i)).collect()
    }

    pub fn region_mask(&self, region: &BoxRegion) -> Vec<bool> {
        let tol = 1e-9 * self.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
        (0..self.len())
            .map(|i| region.contains(&self.coord(i), tol))
            .collect()
    }

    /// Surface measure of the part of ∂Ω_h owned by a boundary node.
    pub fn boundary_weight(&self, i: usize) -> f64 {
        let m = self.multi_index(i);
        let on_face = |d: usize| m[d] == self.omega_lo[d] || m[d] == self.omega_hi[d];
        let mut total = 0.0;
        for d in 0..self.dim {
            if !on_face(d) {
                continue;
            }
            let mut area = 1.0;
            for e in 0..self.dim {
                if e != d {
                    area *= self.spacing[e] * if on_face(e) { 0.5 } else { 1.0 };
                }
            }
            total += area;
        }
        total
    }

    /// Places W-nodal values into a full-grid vector (zero elsewhere).
    pub fn extend_from_w(&self, f_w: &[f64]) -> Result<Vec<f64>> {
        check_len("W field", self.w_nodes.len(), f_w.len())?;
        let mut out = vec![0.0; self.len()];
        for (k, &i) in self.w_nodes.iter().enumerate() {
            out[i] = f_w[k];
        }
        Ok(out)
    }

    pub fn restrict(&self, values: &[f64], nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&i| values[i]).collect()
    }

    /// Samples `f` at the W nodes.
    pub fn sample_w(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.w_nodes.iter().map(|&i| f(&self.coord(i))).collect()
    }

    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.coord(i))).collect()
    }

    /// Rate of the slowest decaying vertical mode for the identity coefficient
    /// with zero data on the box edge.
    pub fn slowest_decay_rate(&self) -> f64 {
        let sum: f64 = (0..self.dim)
            .map(|d| {
                let len = self.spacing[d] * (self.shape[d] as f64 + 1.0);
                (std::f64::consts::PI / len).powi(2)
            })
            .sum();
        sum.sqrt()
    }
}

/// Graded vertical levels `y_j = M (j/J)^γ` with elements linear in
/// `ζ = y^{2s}/(2s)` and exact weighted measures for the weight `t^{1-2s}`.
///
/// In `ζ` the vertical energy `∫ t^{1-2s} |∂_t u|² dt` becomes `∫ |∂_ζ u|² dζ`,
/// so the trace layer `u(0) + τ ζ` lies in the discrete space and the cell
/// stiffness is exactly `1/Δζ`.
#[derive(Clone, Debug)]
pub struct VerticalMesh {
    order: f64,
    height: f64,
    grading: f64,
    levels: Vec<f64>,
    zeta: Vec<f64>,
    cell_measures: Vec<f64>,
    nodal_weights: Vec<f64>,
}

/// `∫_a^b t^{p-1} dt` for `p > 0`.
fn power_integral(p: f64, a: f64, b: f64) -> f64 {
    (b.powf(p) - a.powf(p)) / p
}

impl VerticalMesh {
    pub fn build(order: f64, height: f64, cells: usize, grading: f64) -> Result<Self> {
        if !(order > 0.0 && order < 1.0) {
            return Err(Error::Param(format!("order s must lie in (0,1), got {order}")));
        }
        if !(height.is_finite() && height > 0.0) {
            return Err(Error::Param(format!("height M must be positive, got {height}")));
        }
        if cells < 8 {
            return Err(Error::Param(format!("need at least 8 vertical cells, got {cells}")));
        }
        if !(grading.is_finite() && grading >= 1.0) {
            return Err(Error::Param(format!("grading must be >= 1, got {grading}")));
        }
        let levels = (0..=cells)
            .map(|j| height * (j as f64 / cells as f64).powf(grading))
            .collect();
        Ok(Self::from_levels(order, height, grading, levels))
    }

    fn from_levels(order: f64, height: f64, grading: f64, levels: Vec<f64>) -> Self {
        let cells = levels.len() - 1;
        let zeta: Vec<f64> = levels.iter().map(|y| y.powf(2.0 * order) / (2.0 * order)).collect();
        let mut cell_measures = Vec::with_capacity(cells);
        let mut nodal_weights = vec![0.0; cells + 1];
        for c in 0..cells {
            let (wa, wb) = Self::hat_integrals(order, zeta[c], zeta[c + 1], levels[c], levels[c + 1]);
            cell_measures.push(power_integral(2.0 - 2.0 * order, levels[c], levels[c + 1]));
            nodal_weights[c] += wa;
            nodal_weights[c + 1] += wb;
        }
        Self {
            order,
            height,
            grading,
            levels,
            zeta,
            cell_measures,
            nodal_weights,
        }
    }

    /// `∫_lo^b t^{1-2s} φ dt` for the two hats of the cell `[a, b]`, linear in ζ.
    /// Uses `∫ t^{1-2s} ζ dt = t²/(4s)`.
    fn hat_integrals(order: f64, za: f64, zb: f64, lo: f64, b: f64) -> (f64, f64) {
        let m0 = power_integral(2.0 - 2.0 * order, lo, b);
        let m1 = (b * b - lo * lo) / (4.0 * order);
        let dz = zb - za;
        ((zb * m0 - m1) / dz, (m1 - za * m0) / dz)
    }

    /// Grading that resolves the `y^{2s}` layer at the trace.
    pub fn default_grading(order: f64) -> f64 {
        (1.5 / order).clamp(1.0, 6.0)
    }

    /// Same levels, weights recomputed for another order.
    pub fn with_order(&self, order: f64) -> Result<Self> {
        if !(order > 0.0 && order < 1.0) {
            return Err(Error::Param(format!("order s must lie in (0,1), got {order}")));
        }
        Ok(Self::from_levels(order, self.height, self.grading, self.levels.clone()))
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn weight_exponent(&self) -> f64 {
        1.0 - 2.0 * self.order
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn cells(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn cell_measures(&self) -> &[f64] {
        &self.cell_measures
    }

    /// `∫ t^{1-2s} φ_j(t) dt` for the piecewise-linear hat functions.
    pub fn nodal_weights(&self) -> &[f64] {
        &self.nodal_weights
    }

    /// Weighted stiffness of one cell: `1 / Δζ`.
    pub fn cell_stiffness(&self, c: usize) -> f64 {
        1.0 / (self.zeta[c + 1] - self.zeta[c])
    }

    /// `ζ` at every level.
    pub fn natural_levels(&self) -> &[f64] {
        &self.zeta
    }

    pub fn exact_total_measure(&self) -> f64 {
        let p = 2.0 - 2.0 * self.order;
        self.height.powf(p) / p
    }

    /// Coordinate `ζ = y^{2s}/(2s)` in which `y^{1-2s}∂_y = ∂_ζ`.
    pub fn natural_coordinate(&self, y: f64) -> f64 {
        let p = 2.0 * self.order;
        y.powf(p) / p
    }

    /// `∫_y^b t^{1-2s} (u_a φ_a + u_b φ_b) dt` over the tail `[y, b]` of cell `c`.
    pub(crate) fn partial_cell_integral(&self, c: usize, y: f64, ua: f64, ub: f64) -> f64 {
        let (wa, wb) = Self::hat_integrals(
            self.order,
            self.zeta[c],
            self.zeta[c + 1],
            y,
            self.levels[c + 1],
        );
        ua * wa + ub * wb
    }
}

/// Vertical discretisation parameters as read from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalSpec {
    pub levels: usize,
    #[serde(default)]
    pub height: Option<f64>,
    #[serde(default)]
    pub grading: Option<f64>,
}

impl VerticalSpec {
    pub fn new(levels: usize) -> Self {
        Self {
            levels,
            height: None,
            grading: None,
        }
    }

    /// Default height: the slowest box mode has decayed by 1e-4 at `y = M`.
    pub fn default_height(grid: &TangentialGrid, ellipticity_min: f64) -> f64 {
        let rate = grid.slowest_decay_rate() * ellipticity_min.max(1e-12).sqrt();
        (1e4f64).ln() / rate
    }

    pub fn resolve(
        &self,
        order: f64,
        grid: &TangentialGrid,
        ellipticity_min: f64,
    ) -> Result<VerticalMesh> {
        let height = self
            .height
            .unwrap_or_else(|| Self::default_height(grid, ellipticity_min));
        let grading = self
            .grading
            .unwrap_or_else(|| VerticalMesh::default_grading(order));
        VerticalMesh::build(order, height, self.levels, grading)
    }
}

/// Tensor product of a tangential grid and a vertical mesh.
#[derive(Clone, Debug)]
pub struct ExtensionMesh {
    grid: Arc<TangentialGrid>,
    vertical: VerticalMesh,
}

impl ExtensionMesh {
    pub fn new(grid: Arc<TangentialGrid>, vertical: VerticalMesh) -> Self {
        Self { grid, vertical }
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        &self.grid
    }

    pub fn vertical(&self) -> &VerticalMesh {
        &self.vertical
    }

    pub fn order(&self) -> f64 {
        self.vertical.order()
    }

    pub fn levels_per_column(&self) -> usize {
        self.vertical.cells() + 1
    }

    pub fn len(&self) -> usize {
        self.grid.len() * self.levels_per_column()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, t: usize, j: usize) -> usize {
        t * self.levels_per_column() + j
    }

    /// Inverse of [`ExtensionMesh::node`].
    pub fn split(&self, node: usize) -> (usize, usize) {
        let l = self.levels_per_column();
        (node / l, node % l)
    }

    /// Quadrature weight of a node for the measure `x_{n+1}^{1-2s} dx`.
    pub fn quadrature_weight(&self, node: usize) -> f64 {
        let (_, j) = self.split(node);
        self.grid.node_weight() * self.vertical.nodal_weights()[j]
    }

    pub fn same_shape(&self, other: &ExtensionMesh) -> bool {
        self.grid.len() == other.grid.len()
            && self.vertical.levels().len() == other.vertical.levels().len()
            && self
                .vertical
                .levels()
                .iter()
                .zip(other.vertical.levels())
                .all(|(a, b)| (a - b).abs() <= 1e-14 * b.abs().max(1.0))
    }
}
