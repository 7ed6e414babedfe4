//! Smooth exterior data supported in W.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Point, TangentialGrid};

/// `exp(1 − 1/(1 − r²))`, `r = |x − center| / radius`, on the W nodes.
pub fn w_bump(grid: &TangentialGrid, center: &Point, radius: f64) -> Vec<f64> {
    grid.sample_w(|x| {
        let r2: f64 = (0..grid.dim()).map(|d| (x[d] - center[d]).powi(2)).sum::<f64>()
            / (radius * radius);
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

/// Reproducible bumps with random centres and radii, each supported inside W
/// and covering at least one W node.
pub fn seeded_w_bumps(grid: &TangentialGrid, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &grid.spec().w;
    let dim = grid.dim();
    let half_width = (0..dim)
        .map(|d| 0.5 * (w.hi[d] - w.lo[d]))
        .fold(f64::INFINITY, f64::min);
    let h_max = grid.spacing().iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let radius = rng.random_range(0.4..0.95) * half_width;
        let radius = radius.max(1.5 * h_max).min(half_width);
        let mut c = [0.0; 3];
        for d in 0..dim {
            let (lo, hi) = (w.lo[d] + radius, w.hi[d] - radius);
            c[d] = if hi > lo { rng.random_range(lo..hi) } else { 0.5 * (w.lo[d] + w.hi[d]) };
        }
        let f = w_bump(grid, &c, radius);
        if f.iter().any(|v| *v > 1e-3) {
            out.push(f);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_tangential_grid, BoxRegion, GeometrySpec};

    #[test]
    fn bumps_are_reproducible_and_nonzero() {
        let g = build_tangential_grid(&GeometrySpec {
            omega: BoxRegion::new(vec![0.0], vec![1.0]),
            w: BoxRegion::new(vec![1.5], vec![2.0]),
            nodes_per_axis: 64,
            padding: None,
        })
        .unwrap();
        let a = seeded_w_bumps(&g, 5, 7);
        let b = seeded_w_bumps(&g, 5, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|f| f.iter().all(|v| *v >= 0.0) && f.iter().any(|v| *v > 0.0)));
        assert_ne!(a, seeded_w_bumps(&g, 5, 8));
    }
}
