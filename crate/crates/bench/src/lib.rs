//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use calderon_core::{build_tangential_grid, BoxRegion, Coefficient, CoefficientSpec, GeometrySpec, TangentialGrid};

/// Unit interval Ω with W = [1.5, 2] (`dim = 1`) or the unit square with
/// W = [1.5, 2] × [0, 1] (`dim = 2`).
pub fn geometry(dim: usize, nodes: usize) -> GeometrySpec {
    let (omega, w) = if dim == 1 {
        (BoxRegion::new(vec![0.0], vec![1.0]), BoxRegion::new(vec![1.5], vec![2.0]))
    } else {
        (
            BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]),
            BoxRegion::new(vec![1.5, 0.0], vec![2.0, 1.0]),
        )
    };
    GeometrySpec {
        omega,
        w,
        nodes_per_axis: nodes,
        padding: None,
    }
}

pub fn grid(dim: usize, nodes: usize) -> Arc<TangentialGrid> {
    Arc::new(build_tangential_grid(&geometry(dim, nodes)).expect("valid benchmark geometry"))
}

/// Identity plus a 10% bump centred in Ω.
pub fn bumped(grid: &TangentialGrid) -> Arc<Coefficient> {
    let center = vec![0.5; grid.dim()];
    let spec = CoefficientSpec::isotropic_bump(0.1, center, 0.3);
    Arc::new(Coefficient::from_spec(&spec, grid).expect("elliptic"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        for dim in [1, 2] {
            let g = grid(dim, 16);
            assert_eq!(g.dim(), dim);
            assert!(bumped(&g).ellipticity_bounds().1 > 1.0);
        }
    }
}
