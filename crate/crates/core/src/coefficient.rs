//! Diagonal conductivity fields `a(x') = diag(a_1, …, a_n)` sampled on the
//! tangential grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, TangentialGrid, MAX_DIM};

/// `coeff · Π x_d^{powers[d]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    #[serde(default)]
    pub powers: Vec<u32>,
}

/// Scalar functions of `x'` available in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarExpr {
    Constant {
        value: f64,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `amplitude · exp(1 − 1/(1 − r²))` for `r = |x − center|/radius < 1`, zero outside;
    /// the peak value is `amplitude`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
    },
    Sum {
        terms: Vec<ScalarExpr>,
    },
}

impl ScalarExpr {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Polynomial { terms } => terms
                .iter()
                .map(|m| {
                    m.powers
                        .iter()
                        .enumerate()
                        .fold(m.coeff, |acc, (d, &p)| acc * x[d].powi(p as i32))
                })
                .sum(),
            Self::Bump {
                amplitude,
                center,
                radius,
            } => {
                let r2: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(d, c)| (x[d] - c).powi(2))
                    .sum::<f64>()
                    / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            Self::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Constant { value } if !value.is_finite() => {
                Err(Error::Param("constant must be finite".into()))
            }
            Self::Polynomial { terms } => {
                for m in terms {
                    if m.powers.len() > dim || !m.coeff.is_finite() {
                        return Err(Error::Param(format!(
                            "monomial needs a finite coefficient and at most {dim} powers"
                        )));
                    }
                }
                Ok(())
            }
            Self::Bump {
                amplitude,
                center,
                radius,
            } => {
                if center.len() != dim || !(*radius > 0.0) || !amplitude.is_finite() {
                    return Err(Error::Param(format!(
                        "bump needs a {dim}-dimensional center, radius > 0 and finite amplitude"
                    )));
                }
                Ok(())
            }
            Self::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientForm {
    Identity,
    Diagonal {
        axes: Vec<ScalarExpr>,
    },
    /// One row per grid node holding either the `n` diagonal entries or all
    /// `n·n` entries in row-major order.
    Table {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub form: CoefficientForm,
    #[serde(default)]
    pub identity_outside_omega: bool,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl CoefficientSpec {
    pub fn identity() -> Self {
        Self {
            form: CoefficientForm::Identity,
            identity_outside_omega: true,
        }
    }

    /// Isotropic `(1 + bump) I` inside Ω, identity outside.
    pub fn isotropic_bump(amplitude: f64, center: Vec<f64>, radius: f64) -> Self {
        let dim = center.len();
        let axis = ScalarExpr::Sum {
            terms: vec![
                ScalarExpr::Constant { value: 1.0 },
                ScalarExpr::Bump {
                    amplitude,
                    center,
                    radius,
                },
            ],
        };
        Self {
            form: CoefficientForm::Diagonal {
                axes: vec![axis; dim],
            },
            identity_outside_omega: true,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.form, CoefficientForm::Identity)
    }
}

/// Nodal diagonal coefficient on a specific grid.
#[derive(Clone, Debug)]
pub struct Coefficient {
    dim: usize,
    diag: Vec<[f64; MAX_DIM]>,
    lambda_min: f64,
    lambda_max: f64,
    identity_outside_omega: bool,
}

impl Coefficient {
    pub fn identity(grid: &TangentialGrid) -> Self {
        Self::from_spec(&CoefficientSpec::identity(), grid).expect("identity is elliptic")
    }

    pub fn from_spec(spec: &CoefficientSpec, grid: &TangentialGrid) -> Result<Self> {
        let dim = grid.dim();
        let n = grid.len();
        let mut diag = vec![[1.0; MAX_DIM]; n];
        match &spec.form {
            CoefficientForm::Identity => {}
            CoefficientForm::Diagonal { axes } => {
                if axes.len() != dim {
                    return Err(Error::Param(format!(
                        "diagonal coefficient needs {dim} axis expressions, got {}",
                        axes.len()
                    )));
                }
                axes.iter().try_for_each(|e| e.validate(dim))?;
                for (i, row) in diag.iter_mut().enumerate() {
                    let x = grid.coord(i);
                    for d in 0..dim {
                        row[d] = axes[d].eval(&x);
                    }
                }
            }
            CoefficientForm::Table { values } => {
                if values.len() != n {
                    return Err(Error::Param(format!(
                        "coefficient table has {} rows for {n} grid nodes",
                        values.len()
                    )));
                }
                for (i, row) in values.iter().enumerate() {
                    if row.len() == dim {
                        diag[i][..dim].copy_from_slice(row);
                    } else if row.len() == dim * dim {
                        for r in 0..dim {
                            for c in 0..dim {
                                let (v, vt) = (row[r * dim + c], row[c * dim + r]);
                                if (v - vt).abs() > 1e-14 * (v.abs() + vt.abs()) {
                                    return Err(Error::Param(format!(
                                        "coefficient at node {i} is not symmetric"
                                    )));
                                }
                                if r != c && v != 0.0 {
                                    return Err(Error::UnsupportedCoefficient(format!(
                                        "off-diagonal entry ({r},{c}) = {v} at node {i}; only diagonal fields are supported"
                                    )));
                                }
                            }
                            diag[i][r] = row[r * dim + r];
                        }
                    } else {
                        return Err(Error::Param(format!(
                            "coefficient row {i} must have {dim} or {} entries",
                            dim * dim
                        )));
                    }
                }
            }
        }
        if spec.identity_outside_omega {
            for (i, row) in diag.iter_mut().enumerate() {
                if !grid.in_omega(i) {
                    *row = [1.0; MAX_DIM];
                }
            }
        }
        let mut lambda_min = f64::INFINITY;
        let mut lambda_max = 0.0f64;
        for (i, row) in diag.iter().enumerate() {
            for &v in &row[..dim] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Ellipticity { node: i, value: v });
                }
                lambda_min = lambda_min.min(v);
                lambda_max = lambda_max.max(v);
            }
        }
        Ok(Self {
            dim,
            diag,
            lambda_min,
            lambda_max,
            identity_outside_omega: spec.identity_outside_omega,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Diagonal entry `a_d` at node `i`.
    pub fn axis(&self, i: usize, d: usize) -> f64 {
        self.diag[i][d]
    }

    pub fn diagonal(&self, i: usize) -> &[f64] {
        &self.diag[i][..self.dim]
    }

    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        (self.lambda_min, self.lambda_max)
    }

    pub fn identity_outside_omega(&self) -> bool {
        self.identity_outside_omega
    }

    /// True when every node carries exactly the identity.
    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|r| r[..self.dim].iter().all(|v| *v == 1.0))
    }

    /// True when every node outside Ω̄ carries exactly the identity.
    pub fn is_identity_outside_omega(&self, grid: &TangentialGrid) -> bool {
        (0..self.len())
            .filter(|&i| !grid.in_omega(i))
            .all(|i| self.diagonal(i).iter().all(|v| *v == 1.0))
    }

    pub fn max_abs_difference(&self, other: &Coefficient) -> f64 {
        self.diag
            .iter()
            .zip(&other.diag)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_tangential_grid, BoxRegion, GeometrySpec};

    fn grid2() -> TangentialGrid {
        build_tangential_grid(&GeometrySpec {
            omega: BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]),
            w: BoxRegion::new(vec![1.5, 0.0], vec![2.0, 1.0]),
            nodes_per_axis: 12,
            padding: Some(0.5),
        })
        .unwrap()
    }

    #[test]
    fn bump_peaks_at_amplitude_and_vanishes_outside() {
        let b = ScalarExpr::Bump {
            amplitude: 0.3,
            center: vec![0.5],
            radius: 0.2,
        };
        assert!((b.eval(&[0.5, 0.0, 0.0]) - 0.3).abs() < 1e-15);
        assert_eq!(b.eval(&[0.75, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn identity_flag_overrides_outside_omega() {
        let g = grid2();
        let spec = CoefficientSpec {
            form: CoefficientForm::Diagonal {
                axes: vec![
                    ScalarExpr::Constant { value: 2.0 },
                    ScalarExpr::Constant { value: 3.0 },
                ],
            },
            identity_outside_omega: true,
        };
        let a = Coefficient::from_spec(&spec, &g).unwrap();
        for i in 0..g.len() {
            let want = if g.in_omega(i) { [2.0, 3.0] } else { [1.0, 1.0] };
            assert_eq!(a.diagonal(i), &want);
        }
        assert_eq!(a.ellipticity_bounds(), (1.0, 3.0));
    }

    #[test]
    fn nonpositive_entries_are_rejected() {
        let g = grid2();
        let spec = CoefficientSpec {
            form: CoefficientForm::Diagonal {
                axes: vec![
                    ScalarExpr::Polynomial {
                        terms: vec![Monomial {
                            coeff: 1.0,
                            powers: vec![1],
                        }],
                    },
                    ScalarExpr::Constant { value: 1.0 },
                ],
            },
            identity_outside_omega: false,
        };
        assert!(matches!(
            Coefficient::from_spec(&spec, &g),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn off_diagonal_tables_are_unsupported() {
        let g = grid2();
        let mut values = vec![vec![1.0, 0.0, 0.0, 1.0]; g.len()];
        values[3] = vec![1.0, 0.1, 0.1, 1.0];
        let spec = CoefficientSpec {
            form: CoefficientForm::Table { values },
            identity_outside_omega: false,
        };
        assert!(matches!(
            Coefficient::from_spec(&spec, &g),
            Err(Error::UnsupportedCoefficient(_))
        ));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = CoefficientSpec::isotropic_bump(0.1, vec![0.5], 0.25);
        let text = serde_json::to_string(&spec).unwrap();
        let back: CoefficientSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let id: CoefficientSpec = serde_json::from_str(r#"{"kind":"identity"}"#).unwrap();
        assert!(id.is_identity());
    }
}
