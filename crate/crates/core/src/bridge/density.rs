//! How well Cauchy traces of exterior data fill out `H^{1/2}(∂Ω)`, and how
//! strongly the local and nonlocal DtN maps separate two coefficients.

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;

use crate::bridge::BridgePipeline;
use crate::coefficient::Coefficient;
use crate::error::{check_len, Error, Result};
use crate::fractional::{FractionalDirichlet, SpectralPower};
use crate::linalg;
use crate::local::assemble_local;
use crate::mesh::{TangentialGrid, VerticalSpec};

/// Relative drop of a projected trace below which it counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DensityReport {
    pub basis_size: usize,
    /// `distances[g][k]`: relative `H`-distance of target `g` from the span of
    /// the first `k` traces, `k = 0..=basis_size`.
    pub distances: Vec<Vec<f64>>,
    pub rank: usize,
    pub rank_warning: Option<String>,
}

impl DensityReport {
    pub fn final_distance(&self, target: usize) -> f64 {
        *self.distances[target].last().unwrap()
    }

    /// Smallest `k` with distance below `level`, if any.
    pub fn first_below(&self, target: usize, level: f64) -> Option<usize> {
        self.distances[target].iter().position(|d| *d < level)
    }
}

fn h_inner(gram: &Mat<f64>, a: &[f64], b: &[f64]) -> f64 {
    linalg::dot(a, &linalg::dense_matvec(gram, b))
}

fn h_norm(gram: &Mat<f64>, a: &[f64]) -> f64 {
    h_inner(gram, a, a).max(0.0).sqrt()
}

/// Least-squares distances of each target from nested spans of `traces` in
/// the inner product `⟨a, b⟩ = aᵀ G b`, by Gram–Schmidt with
/// reorthogonalisation.
pub fn density_diagnostic(
    targets: &[Vec<f64>],
    traces: &[Vec<f64>],
    gram: &Mat<f64>,
) -> Result<DensityReport> {
    let n = gram.nrows();
    for t in targets.iter().chain(traces) {
        check_len("boundary field", n, t.len())?;
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    let mut residuals: Vec<Vec<f64>> = targets.to_vec();
    let norms: Vec<f64> = targets.iter().map(|g| h_norm(gram, g)).collect();
    let mut distances: Vec<Vec<f64>> = norms
        .iter()
        .map(|&nm| vec![if nm > 0.0 { 1.0 } else { 0.0 }])
        .collect();
    for (k, trace) in traces.iter().enumerate() {
        let original = h_norm(gram, trace);
        let mut q = trace.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = h_inner(gram, b, &q);
                q.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let projected = h_norm(gram, &q);
        if projected > RANK_TOLERANCE * original && projected > 0.0 {
            q.iter_mut().for_each(|x| *x /= projected);
            for r in residuals.iter_mut() {
                let c = h_inner(gram, &q, r);
                r.iter_mut().zip(&q).for_each(|(x, y)| *x -= c * y);
            }
            basis.push(q);
        } else {
            dependent.push(k);
        }
        for (g, r) in residuals.iter().enumerate() {
            let d = if norms[g] > 0.0 { h_norm(gram, r) / norms[g] } else { 0.0 };
            distances[g].push(d);
        }
    }
    let rank_warning = (!dependent.is_empty()).then(|| {
        format!(
            "basis traces are numerically rank deficient: {} of {} add no new direction (indices {:?})",
            dependent.len(),
            traces.len(),
            dependent
        )
    });
    Ok(DensityReport {
        basis_size: traces.len(),
        distances,
        rank: basis.len(),
        rank_warning,
    })
}

/// `H^{1/2}(∂Ω)` proxy Gram matrix `B(I + Λ_I)` with `Λ_I` the identity
/// coefficient DtN map.
pub fn half_norm_gram(grid: &Arc<TangentialGrid>) -> Result<Mat<f64>> {
    let identity = Arc::new(Coefficient::identity(grid));
    Ok(assemble_local(grid.clone(), identity)?.dtn_matrix()?.h_half_gram())
}

#[derive(Clone, Debug)]
pub struct DistinguishabilityReport {
    /// `‖Λ₁ − Λ₂‖` in the nodal Euclidean norm.
    pub local_gap: f64,
    /// Same gap in the ∂Ω quadrature pairing.
    pub local_weighted_gap: f64,
    /// `‖Λ_{s,1} − Λ_{s,2}‖` on W.
    pub nonlocal_gap: f64,
    /// Largest relative difference of the Cauchy data `T₁f`, `T₂f` over the probes.
    pub cauchy_gap: f64,
}

/// Local, nonlocal and Cauchy-data gaps between two coefficients that agree
/// with the identity outside Ω.
pub fn distinguishability(
    grid: &Arc<TangentialGrid>,
    a1: Arc<Coefficient>,
    a2: Arc<Coefficient>,
    order: f64,
    vertical: &VerticalSpec,
    probes: &[Vec<f64>],
) -> Result<DistinguishabilityReport> {
    for a in [&a1, &a2] {
        check_len("coefficient nodes", grid.len(), a.len())?;
        if !a.is_identity_outside_omega(grid) {
            return Err(Error::Param(
                "distinguishability needs both coefficients equal to the identity outside Ω".into(),
            ));
        }
    }
    let a_min = a1.ellipticity_bounds().0.min(a2.ellipticity_bounds().0);
    let vmesh = vertical.resolve(order, grid, a_min)?;
    let sides: Vec<_> = [a1, a2]
        .into_par_iter()
        .map(|a| -> Result<_> {
            let local = Arc::new(assemble_local(grid.clone(), a)?);
            let dtn = local.dtn_matrix()?;
            let power = Arc::new(SpectralPower::new(&local, order)?);
            let nonlocal = FractionalDirichlet::new(power.clone())?.dtn_matrix()?;
            let pipeline = BridgePipeline::from_parts(local, power, vmesh.clone())?;
            let pairs = probes
                .iter()
                .map(|f| pipeline.operator_t(f))
                .collect::<Result<Vec<_>>>()?;
            Ok((dtn, nonlocal, pairs))
        })
        .collect::<Result<_>>()?;
    let (d1, n1, p1) = &sides[0];
    let (d2, n2, p2) = &sides[1];
    let cauchy_gap = p1
        .iter()
        .zip(p2)
        .map(|(x, y)| {
            let (a, b) = (x.stacked(), y.stacked());
            let diff = linalg::norm2(&a.iter().zip(&b).map(|(u, v)| u - v).collect::<Vec<_>>());
            let scale = linalg::norm2(&a);
            if scale == 0.0 { diff } else { diff / scale }
        })
        .fold(0.0, f64::max);
    Ok(DistinguishabilityReport {
        local_gap: d1.gap(d2)?,
        local_weighted_gap: d1.weighted_gap(d2)?,
        nonlocal_gap: n1.gap(n2)?,
        cauchy_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Mat<f64> {
        Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                3.0
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn member_of_span_has_zero_distance() {
        let g = spd(5);
        let traces = vec![
            vec![1.0, 0.0, 2.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0, -1.0],
        ];
        let target = vec![2.0, -1.0, 3.0, 0.0, 3.0];
        let r = density_diagnostic(&[target, traces[0].clone()], &traces, &g).unwrap();
        assert!(r.distances[0][2] < 1e-14);
        assert!(r.distances[1][1] < 1e-14);
        assert!(r.distances[0].windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert_eq!(r.rank, 2);
        assert!(r.rank_warning.is_none());
    }

    #[test]
    fn dependent_traces_raise_a_warning() {
        let g = spd(3);
        let a = vec![1.0, 2.0, 3.0];
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x).collect();
        let r = density_diagnostic(&[vec![1.0, 0.0, 0.0]], &[a, b], &g).unwrap();
        assert_eq!(r.rank, 1);
        assert!(r.rank_warning.is_some());
        assert_eq!(r.distances[0][1], r.distances[0][2]);
    }
}
