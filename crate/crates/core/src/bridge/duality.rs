//! Duality between the weights `y^{2s-1}` and `y^{1-2s}`: if `u₁` solves the
//! extension problem of order `1 − s` with weighted Neumann datum `h`, then
//! `u₂ = y^{2s-1}∂_y u₁` solves the order-`s` problem with trace `h`.
//!
//! In `ζ₁ = y^{2(1-s)}/(2(1-s))` the transform is `u₂ = ∂_{ζ₁} u₁`. Near the
//! trace `u₁ = a + hζ₁ + c ζ₁^p + …` with `p = 1/(1 − s)`, so the derivative
//! is taken by three-point differences exact on `{1, ζ₁, ζ₁^p}`; at `s = 1/2`
//! these are the usual quadratic differences.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::extension::{ExtensionField, ExtensionOperator};
use crate::linalg;

/// Maps a field of order `1 − s` to the order-`s` operator `target` on the
/// same levels.
pub fn duality_transform(u1: &ExtensionField, target: &Arc<ExtensionOperator>) -> Result<ExtensionField> {
    let (s1, s) = (u1.order(), target.order());
    if (s1 + s - 1.0).abs() > 1e-12 {
        return Err(Error::MeshMismatch(format!(
            "duality pairs orders s and 1 − s, got {s1} and {s}"
        )));
    }
    if !u1.mesh().same_shape(target.mesh()) {
        return Err(Error::MeshMismatch(
            "duality transform needs identical tangential grids and vertical levels".into(),
        ));
    }
    let vertical = u1.mesh().vertical();
    let zeta: Vec<f64> = vertical
        .levels()
        .iter()
        .map(|y| vertical.natural_coordinate(*y))
        .collect();
    let last = zeta.len() - 1;
    let p = 1.0 / (1.0 - s);
    let mesh = target.mesh();
    let mut values = vec![0.0; mesh.len()];
    for t in 0..mesh.grid().len() {
        let col = u1.column(t);
        for j in 0..=last {
            let c = j.clamp(1, last - 1);
            values[mesh.node(t, j)] = three_point_slope(
                zeta[j],
                p,
                [zeta[c - 1], zeta[c], zeta[c + 1]],
                [col[c - 1], col[c], col[c + 1]],
            );
        }
    }
    ExtensionField::from_values(target.clone(), values)
}

/// Derivative at `x` of the interpolant `a + bζ + cζ^p` through three points.
fn three_point_slope(x: f64, p: f64, z: [f64; 3], u: [f64; 3]) -> f64 {
    let g = |v: f64| v.powf(p);
    let (d1, d2) = (z[1] - z[0], z[2] - z[0]);
    let (e1, e2) = (g(z[1]) - g(z[0]), g(z[2]) - g(z[0]));
    let (r1, r2) = (u[1] - u[0], u[2] - u[0]);
    let det = d1 * e2 - d2 * e1;
    let b = (r1 * e2 - r2 * e1) / det;
    let c = (d1 * r2 - d2 * r1) / det;
    b + c * p * x.powf(p - 1.0)
}

#[derive(Clone, Debug)]
pub struct DualityReport {
    /// `‖u₂(·,0) − h‖ / ‖h‖` over the tangential grid.
    pub trace_error: f64,
    /// Bulk residual of `u₂` for the order-`s` operator.
    pub bulk_residual: f64,
}

/// Transforms `u1` and compares its trace with the Neumann datum `h`.
pub fn duality_check(
    u1: &ExtensionField,
    target: &Arc<ExtensionOperator>,
    h: &[f64],
) -> Result<(ExtensionField, DualityReport)> {
    check_len("Neumann datum", target.grid().len(), h.len())?;
    let u2 = duality_transform(u1, target)?;
    let report = DualityReport {
        trace_error: linalg::relative_error(&u2.trace(), h),
        bulk_residual: target.bulk_residual(u2.values())?,
    };
    Ok((u2, report))
}
