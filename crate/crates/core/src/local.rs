//! Conservative finite differences for `−∇'·a∇'` and the local Dirichlet
//! problem on Ω̄.
//!
//! Assembly runs over primal cells (hypercubes spanned by neighbouring nodes).
//! Each cell contributes its `2^{n-1}` edges per axis with weight
//! `a_face · Πh / h_d² / 2^{n-1}`, `a_face` the arithmetic mean of the two end
//! values. A region is a set of nodes; only cells whose corners all lie in it
//! contribute, which gives half weights on region faces and makes the
//! boundary rows of the region matrix a variational flux.

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;

use crate::coefficient::Coefficient;
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, DenseCholesky, Sparse, SymmetricSolver, TripletBuilder};
use crate::mesh::{TangentialGrid, MAX_DIM};

fn cell_corner(
    grid: &TangentialGrid,
    cell: [isize; MAX_DIM],
    corner: usize,
) -> Option<usize> {
    let n = grid.nodes_per_axis() as isize;
    let mut m = [0usize; MAX_DIM];
    for d in 0..grid.dim() {
        let v = cell[d] + ((corner >> d) & 1) as isize;
        if v < 0 || v >= n {
            return None;
        }
        m[d] = v as usize;
    }
    Some(grid.index(m))
}

fn cell_count(grid: &TangentialGrid) -> usize {
    (grid.nodes_per_axis() + 1).pow(grid.dim() as u32)
}

fn cell_origin(grid: &TangentialGrid, c: usize) -> [isize; MAX_DIM] {
    let per = grid.nodes_per_axis() + 1;
    let mut out = [0isize; MAX_DIM];
    let mut rest = c;
    for o in out.iter_mut().take(grid.dim()) {
        *o = (rest % per) as isize - 1;
        rest /= per;
    }
    out
}

fn cell_in_region(
    grid: &TangentialGrid,
    cell: [isize; MAX_DIM],
    mask: Option<&[bool]>,
    ghosts_in_region: bool,
) -> bool {
    (0..1usize << grid.dim()).all(|k| match cell_corner(grid, cell, k) {
        Some(i) => mask.map_or(true, |m| m[i]),
        None => ghosts_in_region,
    })
}

/// Stiffness of `−∇'·a∇'` over the union of primal cells inside a region,
/// on the full grid numbering (rows outside the region are empty).
///
/// `mask = None` selects every node. Ghost corners on the box edge carry the
/// value zero; they count as part of the region iff `ghosts_in_region`.
pub fn region_stiffness(
    grid: &TangentialGrid,
    coefficient: &Coefficient,
    mask: Option<&[bool]>,
    ghosts_in_region: bool,
) -> Result<Sparse> {
    let dim = grid.dim();
    let h = grid.spacing();
    let vol = grid.node_weight();
    let share = 1.0 / (1usize << (dim - 1)) as f64;
    let factors: Vec<f64> = (0..dim).map(|d| vol / (h[d] * h[d]) * share).collect();
    let triplets: Vec<(usize, usize, f64)> = (0..cell_count(grid))
        .into_par_iter()
        .flat_map_iter(|c| {
            let cell = cell_origin(grid, c);
            let mut out = Vec::new();
            if !cell_in_region(grid, cell, mask, ghosts_in_region) {
                return out.into_iter();
            }
            for d in 0..dim {
                for k in 0..1usize << dim {
                    if (k >> d) & 1 == 1 {
                        continue;
                    }
                    let p = cell_corner(grid, cell, k);
                    let q = cell_corner(grid, cell, k | (1 << d));
                    match (p, q) {
                        (Some(p), Some(q)) => {
                            let a = 0.5 * (coefficient.axis(p, d) + coefficient.axis(q, d));
                            let v = a * factors[d];
                            out.push((p, p, v));
                            out.push((q, q, v));
                            out.push((p, q, -v));
                            out.push((q, p, -v));
                        }
                        (Some(p), None) | (None, Some(p)) => {
                            out.push((p, p, coefficient.axis(p, d) * factors[d]));
                        }
                        (None, None) => {}
                    }
                }
            }
            out.into_iter()
        })
        .collect();
    let mut b = TripletBuilder::new(grid.len(), grid.len());
    for (i, j, v) in triplets {
        b.add(i, j, v);
    }
    b.build()
}

/// Full-grid stiffness `K` with zero Dirichlet ghosts; `−L_h = K / Πh`.
pub fn full_stiffness(grid: &TangentialGrid, coefficient: &Coefficient) -> Result<Sparse> {
    region_stiffness(grid, coefficient, None, true)
}

/// Fraction of each node's dual cell lying in the region.
pub fn mass_fractions(grid: &TangentialGrid, mask: Option<&[bool]>, ghosts_in_region: bool) -> Vec<f64> {
    let dim = grid.dim();
    let share = 1.0 / (1usize << dim) as f64;
    let mut out = vec![0.0; grid.len()];
    for c in 0..cell_count(grid) {
        let cell = cell_origin(grid, c);
        if !cell_in_region(grid, cell, mask, ghosts_in_region) {
            continue;
        }
        for k in 0..1usize << dim {
            if let Some(i) = cell_corner(grid, cell, k) {
                out[i] += share;
            }
        }
    }
    out
}

/// Local operator on the grid plus the factorised Dirichlet problem on Ω̄.
pub struct LocalOperator {
    grid: Arc<TangentialGrid>,
    coefficient: Arc<Coefficient>,
    stiffness: Sparse,
    omega_stiffness: Sparse,
    interior_pos: Vec<usize>,
    boundary_pos: Vec<usize>,
    boundary_weights: Vec<f64>,
    k_ib: Sparse,
    interior_solver: SymmetricSolver,
}

pub fn assemble_local(
    grid: Arc<TangentialGrid>,
    coefficient: Arc<Coefficient>,
) -> Result<LocalOperator> {
    check_len("coefficient nodes", grid.len(), coefficient.len())?;
    for i in 0..grid.len() {
        for &v in coefficient.diagonal(i) {
            if !(v > 0.0) {
                return Err(Error::Ellipticity { node: i, value: v });
            }
        }
    }
    let stiffness = full_stiffness(&grid, &coefficient)?;
    let omega_mask = grid.omega_mask();
    let region = region_stiffness(&grid, &coefficient, Some(&omega_mask), false)?;
    let omega = grid.omega_nodes();
    let omega_stiffness = linalg::submatrix(&region, omega, omega)?;

    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &i) in omega.iter().enumerate() {
        pos[i] = k;
    }
    let interior_pos: Vec<usize> = grid.omega_interior_nodes().iter().map(|&i| pos[i]).collect();
    let boundary_pos: Vec<usize> = grid.omega_boundary_nodes().iter().map(|&i| pos[i]).collect();
    let boundary_weights = grid
        .omega_boundary_nodes()
        .iter()
        .map(|&i| grid.boundary_weight(i))
        .collect();
    let k_ii = linalg::submatrix(&omega_stiffness, &interior_pos, &interior_pos)?;
    let k_ib = linalg::submatrix(&omega_stiffness, &interior_pos, &boundary_pos)?;
    let interior_solver = SymmetricSolver::new(k_ii)?;
    Ok(LocalOperator {
        grid,
        coefficient,
        stiffness,
        omega_stiffness,
        interior_pos,
        boundary_pos,
        boundary_weights,
        k_ib,
        interior_solver,
    })
}

impl LocalOperator {
    pub fn grid(&self) -> &Arc<TangentialGrid> {
        &self.grid
    }

    pub fn coefficient(&self) -> &Arc<Coefficient> {
        &self.coefficient
    }

    /// Full-grid stiffness `K`.
    pub fn stiffness(&self) -> &Sparse {
        &self.stiffness
    }

    /// Stiffness of Ω̄ alone, indexed like `grid.omega_nodes()`.
    pub fn omega_stiffness(&self) -> &Sparse {
        &self.omega_stiffness
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Dense `−L_h = K / Πh` on the full grid.
    pub fn minus_operator_dense(&self) -> Mat<f64> {
        let w = self.grid.node_weight();
        let mut m = linalg::to_dense(&self.stiffness);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] /= w;
            }
        }
        m
    }

    /// `(−L_h) v` on the full grid.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let w = self.grid.node_weight();
        linalg::matvec(&self.stiffness, v)
            .into_iter()
            .map(|x| x / w)
            .collect()
    }

    /// Solves `∇'·a∇'v = 0` in Ω with `v = g` on ∂Ω; returns v on Ω̄ (grid order).
    pub fn solve_dirichlet(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len("boundary data", self.boundary_pos.len(), g.len())?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("boundary data must be finite".into()));
        }
        let rhs: Vec<f64> = linalg::matvec(&self.k_ib, g).into_iter().map(|x| -x).collect();
        let vi = self.interior_solver.solve(&rhs)?;
        let mut v = vec![0.0; self.grid.omega_nodes().len()];
        for (k, &p) in self.interior_pos.iter().enumerate() {
            v[p] = vi[k];
        }
        for (k, &p) in self.boundary_pos.iter().enumerate() {
            v[p] = g[k];
        }
        Ok(v)
    }

    /// Outward co-normal flux `ν·a∇v` on ∂Ω of a field given on Ω̄.
    pub fn boundary_flux(&self, v_omega: &[f64]) -> Result<Vec<f64>> {
        check_len("Ω̄ field", self.grid.omega_nodes().len(), v_omega.len())?;
        let r = linalg::matvec(&self.omega_stiffness, v_omega);
        Ok(self
            .boundary_pos
            .iter()
            .zip(&self.boundary_weights)
            .map(|(&p, b)| r[p] / b)
            .collect())
    }

    /// Interior rows of the Ω̄ residual, `(K_Ω v)_i`.
    pub fn interior_residual(&self, v_omega: &[f64]) -> Result<Vec<f64>> {
        check_len("Ω̄ field", self.grid.omega_nodes().len(), v_omega.len())?;
        let r = linalg::matvec(&self.omega_stiffness, v_omega);
        Ok(self.interior_pos.iter().map(|&p| r[p]).collect())
    }

    pub fn dtn(&self, g: &[f64]) -> Result<Vec<f64>> {
        let v = self.solve_dirichlet(g)?;
        self.boundary_flux(&v)
    }

    /// Dense DtN matrix from the Schur complement `K_bb − K_bi K_ii⁻¹ K_ib`.
    pub fn dtn_matrix(&self) -> Result<LocalDtN> {
        let nb = self.boundary_pos.len();
        let k_ib = linalg::to_dense(&self.k_ib);
        let columns: Vec<Vec<f64>> = (0..nb)
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = (0..k_ib.nrows()).map(|i| k_ib[(i, j)]).collect();
                self.interior_solver.solve(&col)
            })
            .collect::<Result<_>>()?;
        let k_bb = linalg::to_dense(&linalg::submatrix(
            &self.omega_stiffness,
            &self.boundary_pos,
            &self.boundary_pos,
        )?);
        let mut schur = Mat::<f64>::zeros(nb, nb);
        for j in 0..nb {
            for i in 0..nb {
                let coupling: f64 = (0..k_ib.nrows()).map(|k| k_ib[(k, i)] * columns[j][k]).sum();
                schur[(i, j)] = k_bb[(i, j)] - coupling;
            }
        }
        // symmetrise away the rounding of the interior solves
        let schur = Mat::<f64>::from_fn(nb, nb, |i, j| 0.5 * (schur[(i, j)] + schur[(j, i)]));
        Ok(LocalDtN::new(schur, self.boundary_weights.clone()))
    }
}

/// Dense local DtN map `Λ = B⁻¹ S` with `S` the symmetric Schur complement
/// and `B` the boundary quadrature weights.
#[derive(Clone, Debug)]
pub struct LocalDtN {
    matrix: Mat<f64>,
    schur: Mat<f64>,
    weights: Vec<f64>,
}

impl LocalDtN {
    pub fn new(schur: Mat<f64>, weights: Vec<f64>) -> Self {
        let matrix = Mat::<f64>::from_fn(schur.nrows(), schur.ncols(), |i, j| {
            schur[(i, j)] / weights[i]
        });
        Self {
            matrix,
            schur,
            weights,
        }
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// `S = B Λ`, symmetric.
    pub fn schur(&self) -> &Mat<f64> {
        &self.schur
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        linalg::dense_matvec(&self.matrix, g)
    }

    /// Boundary quadrature pairing `Σ B_b a_b c_b`.
    pub fn pairing(&self, a: &[f64], c: &[f64]) -> f64 {
        a.iter()
            .zip(c)
            .zip(&self.weights)
            .map(|((x, y), b)| x * y * b)
            .sum()
    }

    /// Gram matrix of the `H^{1/2}(∂Ω)` proxy `B(I + Λ)`.
    pub fn h_half_gram(&self) -> Mat<f64> {
        let n = self.len();
        Mat::<f64>::from_fn(n, n, |i, j| {
            self.schur[(i, j)] + if i == j { self.weights[i] } else { 0.0 }
        })
    }

    /// `H^{-1/2}(∂Ω)` proxy norm of a flux, dual to [`LocalDtN::h_half_gram`]
    /// under the boundary pairing.
    pub fn h_minus_half_norm(&self, flux: &[f64]) -> Result<f64> {
        let chol = DenseCholesky::new(&self.h_half_gram())?;
        let bf: Vec<f64> = flux.iter().zip(&self.weights).map(|(f, b)| f * b).collect();
        let x = chol.solve(&bf)?;
        Ok(linalg::dot(&bf, &x).max(0.0).sqrt())
    }

    pub fn h_half_norm(&self, g: &[f64]) -> f64 {
        let hg = linalg::dense_matvec(&self.h_half_gram(), g);
        linalg::dot(g, &hg).max(0.0).sqrt()
    }

    /// `max |S − Sᵀ| / max |S|` before symmetrisation is zero by construction;
    /// this measures the pairing symmetry of `Λ` itself.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.weights[i] * self.matrix[(i, j)];
                let b = self.weights[j] * self.matrix[(j, i)];
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Operator norm of `Λ₁ − Λ₂` in the Euclidean nodal norm.
    pub fn gap(&self, other: &LocalDtN) -> Result<f64> {
        check_len("boundary nodes", self.len(), other.len())?;
        Ok((&self.matrix - &other.matrix).norm_l2_spectral())
    }

    /// Operator norm of `B^{1/2}(Λ₁ − Λ₂)B^{-1/2}`, the gap in the boundary pairing.
    pub fn weighted_gap(&self, other: &LocalDtN) -> Result<f64> {
        check_len("boundary nodes", self.len(), other.len())?;
        let n = self.len();
        let d = Mat::<f64>::from_fn(n, n, |i, j| {
            (self.matrix[(i, j)] - other.matrix[(i, j)]) * self.weights[i].sqrt()
                / self.weights[j].sqrt()
        });
        Ok(d.norm_l2_spectral())
    }
}

trait SpectralNorm {
    fn norm_l2_spectral(&self) -> f64;
}

impl SpectralNorm for Mat<f64> {
    fn norm_l2_spectral(&self) -> f64 {
        if self.nrows() == 0 || self.ncols() == 0 {
            return 0.0;
        }
        match self.thin_svd() {
            Ok(svd) => svd.S()[0],
            Err(_) => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{CoefficientForm, CoefficientSpec, ScalarExpr};
    use crate::mesh::{build_tangential_grid, BoxRegion, GeometrySpec};

    fn grid1(n: usize) -> Arc<TangentialGrid> {
        Arc::new(
            build_tangential_grid(&GeometrySpec {
                omega: BoxRegion::new(vec![0.0], vec![1.0]),
                w: BoxRegion::new(vec![1.5], vec![2.0]),
                nodes_per_axis: n,
                padding: Some(1.0),
            })
            .unwrap(),
        )
    }

    fn grid2(n: usize) -> Arc<TangentialGrid> {
        Arc::new(
            build_tangential_grid(&GeometrySpec {
                omega: BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]),
                w: BoxRegion::new(vec![1.5, 0.0], vec![2.0, 1.0]),
                nodes_per_axis: n,
                padding: Some(0.5),
            })
            .unwrap(),
        )
    }

    #[test]
    fn one_dimensional_stencil() {
        let g = grid1(12);
        let a = Coefficient::identity(&g);
        let k = linalg::to_dense(&full_stiffness(&g, &a).unwrap());
        let h = g.spacing()[0];
        for i in 0..12 {
            assert!((k[(i, i)] - 2.0 / h).abs() < 1e-12);
            if i + 1 < 12 {
                assert!((k[(i, i + 1)] + 1.0 / h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_identity_is_five_point() {
        let g = grid2(10);
        let a = Coefficient::identity(&g);
        let k = linalg::to_dense(&full_stiffness(&g, &a).unwrap());
        let h = g.spacing();
        for i in 0..g.len() {
            let want = 2.0 * h[1] / h[0] + 2.0 * h[0] / h[1];
            assert!((k[(i, i)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_field_in_anisotropic_medium() {
        let g = grid2(14);
        let spec = CoefficientSpec {
            form: CoefficientForm::Diagonal {
                axes: vec![
                    ScalarExpr::Constant { value: 2.0 },
                    ScalarExpr::Constant { value: 1.0 },
                ],
            },
            identity_outside_omega: true,
        };
        let a = Arc::new(Coefficient::from_spec(&spec, &g).unwrap());
        let op = assemble_local(g.clone(), a).unwrap();
        let v: Vec<f64> = g.omega_nodes().iter().map(|&i| g.coord(i)[0]).collect();
        let r = op.interior_residual(&v).unwrap();
        assert!(linalg::norm_inf(&r) < 1e-12);
        let flux = op.boundary_flux(&v).unwrap();
        // faces normal to the first axis carry ±2, the others 0 (corners average)
        for (k, &i) in g.omega_boundary_nodes().iter().enumerate() {
            assert!(flux[k].abs() <= 2.0 + 1e-12, "node {i}");
        }
    }

    #[test]
    fn one_dimensional_linear_solution_and_flux() {
        let g = grid1(20);
        let op = assemble_local(g.clone(), Arc::new(Coefficient::identity(&g))).unwrap();
        let xs: Vec<f64> = g.omega_boundary_nodes().iter().map(|&i| g.coord(i)[0]).collect();
        let v = op.solve_dirichlet(&xs).unwrap();
        for (k, &i) in g.omega_nodes().iter().enumerate() {
            assert!((v[k] - g.coord(i)[0]).abs() < 1e-10);
        }
        let flux = op.dtn(&xs).unwrap();
        assert!((flux[0] + 1.0).abs() < 1e-10);
        assert!((flux[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constants_carry_no_flux() {
        let g = grid2(12);
        let op = assemble_local(g.clone(), Arc::new(Coefficient::identity(&g))).unwrap();
        let ones = vec![1.0; g.omega_boundary_nodes().len()];
        let v = op.solve_dirichlet(&ones).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(linalg::norm_inf(&op.dtn(&ones).unwrap()) < 1e-12);
    }

    #[test]
    fn dtn_matrix_matches_column_solves() {
        let g = grid2(12);
        let op = assemble_local(g.clone(), Arc::new(Coefficient::identity(&g))).unwrap();
        let dtn = op.dtn_matrix().unwrap();
        let nb = dtn.len();
        for j in [0, nb / 3, nb - 1] {
            let mut e = vec![0.0; nb];
            e[j] = 1.0;
            let col = op.dtn(&e).unwrap();
            for i in 0..nb {
                assert!((col[i] - dtn.matrix()[(i, j)]).abs() < 1e-10 * (1.0 + col[i].abs()));
            }
        }
        assert!(dtn.symmetry_defect() < 1e-12);
    }

    #[test]
    fn exterior_region_mass_excludes_open_omega() {
        let g = grid2(12);
        let mask = g.exterior_closure_mask();
        let frac = mass_fractions(&g, Some(&mask), true);
        for &i in g.omega_interior_nodes() {
            assert_eq!(frac[i], 0.0);
        }
        for &i in g.w_nodes() {
            assert_eq!(frac[i], 1.0);
        }
        let full = mass_fractions(&g, None, true);
        assert!(full.iter().all(|f| *f == 1.0));
    }
}
