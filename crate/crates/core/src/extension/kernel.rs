//! Poisson-kernel realisation of the extension for `a = I`:
//! `ũ(x', y) = Σ_z w u(z) P_y(x' − z) / S_h(y)` with
//! `P_y(x) = C y^{2s} (|x|² + y²)^{-(n+2s)/2}`, `C = Γ(s + n/2)/(π^{n/2} Γ(s))`,
//! and `S_h(y) = Σ_{k∈ℤⁿ} w P_y(kh)` the mass of the kernel on the infinite
//! lattice, so that constants are reproduced exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

use crate::error::{check_len, Error, Result};
use crate::mesh::{Point, TangentialGrid, MAX_DIM};

/// Normalising constant of the fractional Poisson kernel in dimension `n`.
pub fn kernel_constant(dim: usize, order: f64) -> f64 {
    let half = dim as f64 / 2.0;
    gamma(order + half) / (PI.powf(half) * gamma(order))
}

/// Kernel mass outside the ball of radius `rho`.
pub fn kernel_tail_mass(dim: usize, order: f64, rho: f64, y: f64) -> f64 {
    let u = y * y / (rho * rho + y * y);
    beta_reg(order, dim as f64 / 2.0, u)
}

#[derive(Clone)]
pub struct KernelExtension {
    grid: Arc<TangentialGrid>,
    order: f64,
    constant: f64,
}

impl KernelExtension {
    pub fn new(grid: Arc<TangentialGrid>, order: f64) -> Result<Self> {
        if !(order > 0.0 && order < 1.0) {
            return Err(Error::Param(format!("order s must lie in (0,1), got {order}")));
        }
        let constant = kernel_constant(grid.dim(), order);
        Ok(Self {
            grid,
            order,
            constant,
        })
    }

    pub fn grid(&self) -> &Arc<TangentialGrid> {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    fn exponent(&self) -> f64 {
        0.5 * (self.grid.dim() as f64 + 2.0 * self.order)
    }

    /// `P_y` at squared distance `r2`.
    pub fn kernel(&self, r2: f64, y: f64) -> f64 {
        self.constant * y.powf(2.0 * self.order) * (r2 + y * y).powf(-self.exponent())
    }

    /// Lattice mass `S_h(y)`. By Poisson summation it differs from one by
    /// terms of size `exp(−2π y / h)`, so it is summed explicitly only while
    /// those terms are visible in double precision.
    pub fn lattice_mass(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Param(format!("height must be positive, got {y}")));
        }
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let h_max = h.iter().cloned().fold(0.0, f64::max);
        if 2.0 * PI * y / h_max > 40.0 {
            return Ok(1.0);
        }
        let rho = 64.0 * h_max.max(y);
        let reach: Vec<i64> = h.iter().map(|hd| (rho / hd).floor() as i64).collect();
        let w: f64 = h.iter().product();
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut k = vec![0i64; dim];
        for d in 0..dim {
            k[d] = -reach[d];
        }
        'outer: loop {
            let r2: f64 = (0..dim).map(|d| (k[d] as f64 * h[d]).powi(2)).sum();
            if r2 <= rho * rho {
                sum += w * self.kernel(r2, y);
                count += 1;
            }
            for d in 0..dim {
                if k[d] < reach[d] {
                    k[d] += 1;
                    continue 'outer;
                }
                k[d] = -reach[d];
            }
            break;
        }
        // the summed points tile a ball of equal volume; the tail starts at its radius
        let half = dim as f64 / 2.0;
        let unit_ball = PI.powf(half) / gamma(half + 1.0);
        let radius = (count as f64 * w / unit_ball).powf(1.0 / dim as f64);
        Ok(sum + kernel_tail_mass(dim, self.order, radius, y))
    }

    fn support(&self, u: &[f64]) -> Vec<(Point, f64)> {
        let w = self.grid.node_weight();
        u.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (self.grid.coord(i), w * v))
            .collect()
    }

    fn value_from(&self, support: &[(Point, f64)], x: &Point, y: f64, mass: f64) -> f64 {
        let dim = self.grid.dim();
        support
            .iter()
            .map(|(z, wu)| {
                let r2: f64 = (0..dim).map(|d| (x[d] - z[d]).powi(2)).sum();
                wu * self.kernel(r2, y)
            })
            .sum::<f64>()
            / mass
    }

    fn gradient_from(&self, support: &[(Point, f64)], x: &Point, y: f64, mass: f64) -> Point {
        let dim = self.grid.dim();
        let p = self.exponent();
        let mut g = [0.0; MAX_DIM];
        for (z, wu) in support {
            let r2: f64 = (0..dim).map(|d| (x[d] - z[d]).powi(2)).sum();
            let factor = -2.0 * p * wu * self.kernel(r2, y) / (r2 + y * y);
            for d in 0..dim {
                g[d] += factor * (x[d] - z[d]);
            }
        }
        for gd in g.iter_mut() {
            *gd /= mass;
        }
        g
    }

    /// `ũ(x, y)` for grid data `u` (zero outside the grid).
    pub fn value(&self, u: &[f64], x: &Point, y: f64) -> Result<f64> {
        check_len("grid field", self.grid.len(), u.len())?;
        let mass = self.lattice_mass(y)?;
        Ok(self.value_from(&self.support(u), x, y, mass))
    }

    /// Tangential gradient `∇'ũ(x, y)`.
    pub fn gradient(&self, u: &[f64], x: &Point, y: f64) -> Result<Point> {
        check_len("grid field", self.grid.len(), u.len())?;
        let mass = self.lattice_mass(y)?;
        Ok(self.gradient_from(&self.support(u), x, y, mass))
    }

    /// `ũ(·, y)` at every grid node.
    pub fn extend(&self, u: &[f64], y: f64) -> Result<Vec<f64>> {
        check_len("grid field", self.grid.len(), u.len())?;
        let mass = self.lattice_mass(y)?;
        let support = self.support(u);
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|i| self.value_from(&support, &self.grid.coord(i), y, mass))
            .collect())
    }
}

/// Log-log slopes of the decay of `ũ(·, y)` for compactly supported data.
#[derive(Clone, Debug)]
pub struct DecayReport {
    pub heights: Vec<f64>,
    pub sup: Vec<f64>,
    pub gradient_sup: Vec<f64>,
    pub l2: Vec<f64>,
    pub sup_slope: f64,
    pub gradient_slope: f64,
    pub l2_slope: f64,
    /// `−n`.
    pub predicted_sup: f64,
    /// `−n − 1`.
    pub predicted_gradient: f64,
    /// Exponent `n/p − n` of the `L¹ → L²` decay bound (`p = 1`), i.e. zero.
    pub l2_bound_exponent: f64,
    /// Sharp `L²` rate `−n/2`.
    pub l2_sharp: f64,
    pub support_diameter: f64,
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Minimal number of decades the heights must span above the support diameter.
pub const DECAY_MIN_DECADES: f64 = 1.5;

/// Samples `|ũ|` and `|∇'ũ|` along axis and diagonal rays out to `3y` around
/// the support centroid, and `‖ũ(·, y)‖_{L²}` by a midpoint rule over a cube
/// of half-width `8y + diam`, then fits slopes against `y`.
pub fn decay_diagnostic(kernel: &KernelExtension, u: &[f64], heights: &[f64]) -> Result<DecayReport> {
    let grid = kernel.grid();
    check_len("grid field", grid.len(), u.len())?;
    let dim = grid.dim();
    let support: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0).collect();
    if support.is_empty() {
        return Err(Error::Fit("data has empty support".into()));
    }
    let mut lo = [f64::INFINITY; MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; MAX_DIM];
    let mut centroid = [0.0; MAX_DIM];
    for &i in &support {
        let x = grid.coord(i);
        for d in 0..dim {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
            centroid[d] += x[d] / support.len() as f64;
        }
    }
    let diameter = (0..dim)
        .map(|d| (hi[d] - lo[d]).powi(2))
        .sum::<f64>()
        .sqrt()
        .max(grid.spacing().iter().cloned().fold(0.0, f64::max));
    let used: Vec<f64> = heights.iter().cloned().filter(|y| *y >= diameter).collect();
    let span = if used.len() >= 3 {
        (used.iter().cloned().fold(0.0, f64::max) / used.iter().cloned().fold(f64::INFINITY, f64::min))
            .log10()
    } else {
        0.0
    };
    if used.len() < 3 || span < DECAY_MIN_DECADES {
        return Err(Error::Fit(format!(
            "need at least 3 heights spanning {DECAY_MIN_DECADES} decades above the support diameter {diameter:.3e}; got {} heights spanning {span:.2}",
            used.len()
        )));
    }

    let mut dirs: Vec<Point> = Vec::new();
    for d in 0..dim {
        let mut e = [0.0; MAX_DIM];
        e[d] = 1.0;
        dirs.push(e);
        e[d] = -1.0;
        dirs.push(e);
    }
    if dim >= 2 {
        let r = 1.0 / (dim as f64).sqrt();
        for mask in 0..1usize << dim {
            let mut e = [0.0; MAX_DIM];
            for (d, ed) in e.iter_mut().enumerate().take(dim) {
                *ed = if (mask >> d) & 1 == 1 { r } else { -r };
            }
            dirs.push(e);
        }
    }
    let rays = 48;
    let cube: usize = match dim {
        1 => 256,
        2 => 64,
        _ => 20,
    };

    let support_pts: Vec<(Point, f64)> = kernel.support(u);
    let rows: Vec<(f64, f64, f64)> = used
        .par_iter()
        .map(|&y| -> Result<(f64, f64, f64)> {
            let mass = kernel.lattice_mass(y)?;
            let mut sup = 0.0f64;
            let mut gsup = 0.0f64;
            for dir in &dirs {
                for k in 0..=rays {
                    let r = 3.0 * y * k as f64 / rays as f64;
                    let mut x = centroid;
                    for d in 0..dim {
                        x[d] += r * dir[d];
                    }
                    sup = sup.max(kernel.value_from(&support_pts, &x, y, mass).abs());
                    let g = kernel.gradient_from(&support_pts, &x, y, mass);
                    gsup = gsup.max((0..dim).map(|d| g[d] * g[d]).sum::<f64>().sqrt());
                }
            }
            let half = 8.0 * y + diameter;
            let step = 2.0 * half / cube as f64;
            let cell = step.powi(dim as i32);
            let total = cube.pow(dim as u32);
            let mut l2 = 0.0;
            for c in 0..total {
                let mut x = centroid;
                let mut rest = c;
                for d in 0..dim {
                    x[d] += -half + (rest % cube) as f64 * step + 0.5 * step;
                    rest /= cube;
                }
                let v = kernel.value_from(&support_pts, &x, y, mass);
                l2 += v * v * cell;
            }
            Ok((sup, gsup, l2.sqrt()))
        })
        .collect::<Result<_>>()?;
    let sup: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let gradient_sup: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let n = dim as f64;
    Ok(DecayReport {
        sup_slope: fit_slope(&used, &sup),
        gradient_slope: fit_slope(&used, &gradient_sup),
        l2_slope: fit_slope(&used, &l2),
        heights: used,
        sup,
        gradient_sup,
        l2,
        predicted_sup: -n,
        predicted_gradient: -n - 1.0,
        l2_bound_exponent: 0.0,
        l2_sharp: -n / 2.0,
        support_diameter: diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_tangential_grid, BoxRegion, GeometrySpec};

    fn grid(n: usize, dim: usize) -> Arc<TangentialGrid> {
        let (o, w) = if dim == 1 {
            (
                BoxRegion::new(vec![0.0], vec![1.0]),
                BoxRegion::new(vec![1.5], vec![2.0]),
            )
        } else {
            (
                BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]),
                BoxRegion::new(vec![1.5, 0.0], vec![2.0, 1.0]),
            )
        };
        Arc::new(
            build_tangential_grid(&GeometrySpec {
                omega: o,
                w,
                nodes_per_axis: n,
                padding: None,
            })
            .unwrap(),
        )
    }

    #[test]
    fn kernel_has_unit_mass() {
        // direct quadrature of the 1D kernel on a wide window plus closed-form tail
        for s in [0.25, 0.5, 0.75] {
            let g = grid(32, 1);
            let k = KernelExtension::new(g, s).unwrap();
            let y = 0.7;
            let (a, m) = (200.0, 400_000);
            let h = 2.0 * a / m as f64;
            let mut sum = 0.0;
            for i in 0..m {
                let x = -a + (i as f64 + 0.5) * h;
                sum += h * k.kernel(x * x, y);
            }
            let total = sum + kernel_tail_mass(1, s, a, y);
            assert!((total - 1.0).abs() < 1e-6, "s={s}: {total}");
        }
    }

    #[test]
    fn lattice_mass_is_close_to_one_and_exactly_one_when_smooth() {
        let g = grid(64, 1);
        let k = KernelExtension::new(g.clone(), 0.5).unwrap();
        let h = g.spacing()[0];
        let m = k.lattice_mass(0.3 * h).unwrap();
        assert!(m > 0.5 && m < 2.0);
        let smooth = k.lattice_mass(2.0 * h).unwrap();
        assert!((smooth - 1.0).abs() < 1e-5, "{smooth}");
        assert_eq!(k.lattice_mass(20.0 * h).unwrap(), 1.0);
    }

    #[test]
    fn constants_are_reproduced_up_to_mass_beyond_the_box() {
        let g = grid(200, 1);
        let k = KernelExtension::new(g.clone(), 0.75).unwrap();
        let ones = vec![1.0; g.len()];
        // the lattice normalisation is exact at nodes
        let c = g.coord(100);
        let y = 0.05;
        let v = k.value(&ones, &c, y).unwrap();
        let half = 0.5 * (g.computational_box().hi[0] - g.computational_box().lo[0]);
        let lost = kernel_tail_mass(1, 0.75, half - 2.0 * g.spacing()[0], y);
        assert!(v <= 1.0 + 1e-12 && v >= 1.0 - lost - 1e-9, "{v} vs lost {lost}");
    }

    #[test]
    fn point_mass_reproduces_kernel_shape() {
        let g = grid(41, 1);
        let k = KernelExtension::new(g.clone(), 0.3).unwrap();
        let mut u = vec![0.0; g.len()];
        u[20] = 1.0;
        let z = g.coord(20);
        let y = 0.4;
        let out = k.extend(&u, y).unwrap();
        let ratio0 = out[0] / k.kernel((g.coord(0)[0] - z[0]).powi(2), y);
        for i in [5, 20, 33] {
            let r = out[i] / k.kernel((g.coord(i)[0] - z[0]).powi(2), y);
            assert!((r - ratio0).abs() < 1e-12 * ratio0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = grid(24, 2);
        let k = KernelExtension::new(g.clone(), 0.4).unwrap();
        let u = g.sample(|x| (-(x[0] - 1.7).powi(2) - (x[1] - 0.5).powi(2)).exp());
        let x = [0.3, 0.2, 0.0];
        let y = 0.5;
        let grad = k.gradient(&u, &x, y).unwrap();
        let eps = 1e-6;
        for d in 0..2 {
            let (mut p, mut m) = (x, x);
            p[d] += eps;
            m[d] -= eps;
            let fd = (k.value(&u, &p, y).unwrap() - k.value(&u, &m, y).unwrap()) / (2.0 * eps);
            assert!((fd - grad[d]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn decay_needs_enough_decades() {
        let g = grid(64, 1);
        let k = KernelExtension::new(g.clone(), 0.5).unwrap();
        let u = g.sample(|x| if (x[0] - 1.75).abs() < 0.2 { 1.0 } else { 0.0 });
        assert!(matches!(
            decay_diagnostic(&k, &u, &[1.0, 2.0, 4.0]),
            Err(Error::Fit(_))
        ));
    }
}
