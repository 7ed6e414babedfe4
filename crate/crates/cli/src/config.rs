//! Experiment configuration files.

use calderon_core::{CoefficientSpec, GeometrySpec, VerticalSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Tangential dimension; must match the geometry boxes when given.
    #[serde(default)]
    pub n: Option<usize>,
    pub s: f64,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub vertical: Option<VerticalSpec>,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Nodes per axis for refinement sweeps; `J` follows `N`.
    #[serde(default)]
    pub refinement_levels: Option<Vec<usize>>,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    /// Regularisation used for the closed-loop reconstruction.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub noise: Option<f64>,
    /// Generate Tikhonov data on the nested refinement.
    #[serde(default)]
    pub refine_data: Option<bool>,
    #[serde(default)]
    pub basis_size: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub probes: Option<usize>,
    #[serde(default)]
    pub heights: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
}

fn invalid(field: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {detail}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.geometry.omega.dim()
    }

    pub fn vertical(&self) -> VerticalSpec {
        self.vertical
            .clone()
            .unwrap_or_else(|| VerticalSpec::new(self.geometry.nodes_per_axis))
    }

    /// Vertical settings for a sweep level: explicit `height`/`grading` are
    /// kept and the cell count follows the tangential resolution.
    pub fn vertical_at(&self, nodes: usize) -> VerticalSpec {
        let mut v = self.vertical();
        v.levels = nodes;
        v
    }

    pub fn levels(&self) -> Vec<usize> {
        self.params.refinement_levels.clone().unwrap_or_else(|| {
            let n = self.geometry.nodes_per_axis;
            vec![n / 2, n, 2 * n]
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(invalid(&format!("s={}", self.s), "must lie in (0, 1)"));
        }
        let dim = self.dim();
        for (name, b) in [("geometry.omega", &self.geometry.omega), ("geometry.w", &self.geometry.w)] {
            b.validate(name).map_err(|e| match e {
                calderon_core::Error::Param(m) => CliError::Config(m),
                other => invalid(name, other),
            })?;
        }
        if self.geometry.w.dim() != dim {
            return Err(invalid("geometry.w", format!("has dimension {} but Ω has {dim}", self.geometry.w.dim())));
        }
        if !(1..=3).contains(&dim) {
            return Err(invalid("geometry.omega", format!("dimension {dim} outside 1..=3")));
        }
        if let Some(n) = self.n {
            if n != dim {
                return Err(invalid(&format!("n={n}"), format!("geometry boxes are {dim}-dimensional")));
            }
        }
        if self.geometry.nodes_per_axis < 4 {
            return Err(invalid(
                &format!("geometry.nodes_per_axis={}", self.geometry.nodes_per_axis),
                "need at least 4",
            ));
        }
        if let Some(p) = self.geometry.padding {
            if !(p > 0.0) {
                return Err(invalid(&format!("geometry.padding={p}"), "must be positive"));
            }
        }
        if let Some(v) = &self.vertical {
            if v.levels < 2 {
                return Err(invalid(&format!("vertical.levels={}", v.levels), "need at least 2"));
            }
            if let Some(m) = v.height.filter(|m| !(*m > 0.0)) {
                return Err(invalid(&format!("vertical.height={m}"), "must be positive"));
            }
            if let Some(g) = v.grading.filter(|g| !(*g >= 1.0)) {
                return Err(invalid(&format!("vertical.grading={g}"), "must be at least 1"));
            }
        }
        let p = &self.params;
        if let Some(levels) = &p.refinement_levels {
            if levels.is_empty() || levels.iter().any(|n| *n < 4) {
                return Err(invalid("params.refinement_levels", "need nonempty levels of at least 4 nodes"));
            }
            if levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("params.refinement_levels", "must be strictly increasing"));
            }
        }
        if let Some(alphas) = &p.alphas {
            if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(invalid("params.alphas", "must be positive and strictly decreasing"));
            }
        }
        if let Some(a) = p.alpha.filter(|a| !(*a > 0.0)) {
            return Err(invalid(&format!("params.alpha={a}"), "must be positive"));
        }
        if let Some(e) = p.epsilon.filter(|e| !(*e > 0.0 && *e < self.s)) {
            return Err(invalid(&format!("params.epsilon={e}"), format!("must lie in (0, s) = (0, {})", self.s)));
        }
        if let Some(x) = p.noise.filter(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(invalid(&format!("params.noise={x}"), "must be nonnegative"));
        }
        if let Some(0) = p.basis_size {
            return Err(invalid("params.basis_size=0", "must be positive"));
        }
        if let Some(0) = p.samples {
            return Err(invalid("params.samples=0", "must be positive"));
        }
        if let Some(h) = &p.heights {
            if h.iter().any(|y| !(*y > 0.0)) {
                return Err(invalid("params.heights", "must be positive"));
            }
        }
        Ok(())
    }
}

fn region_schema() -> Value {
    json!({
        "type": "object",
        "required": ["lo", "hi"],
        "properties": {
            "lo": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 3},
            "hi": {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 3}
        },
        "additionalProperties": false
    })
}

/// JSON schema of the configuration file.
pub fn schema() -> Value {
    let numbers = json!({"type": "array", "items": {"type": "number"}});
    let scalar = json!({
        "type": "object",
        "description": "scalar expression",
        "required": ["kind"],
        "properties": {
            "kind": {"enum": ["constant", "polynomial", "bump", "sum"]},
            "value": {"type": "number"},
            "terms": {"type": "array"},
            "amplitude": {"type": "number"},
            "center": numbers.clone(),
            "radius": {"type": "number", "exclusiveMinimum": 0}
        }
    });
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "calderon experiment configuration",
        "type": "object",
        "required": ["experiment", "s", "geometry"],
        "additionalProperties": false,
        "properties": {
            "experiment": {"enum": crate::experiments::NAMES},
            "n": {"type": "integer", "minimum": 1, "maximum": 3, "description": "tangential dimension"},
            "s": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "geometry": {
                "type": "object",
                "required": ["omega", "w", "nodes_per_axis"],
                "additionalProperties": false,
                "properties": {
                    "omega": region_schema(),
                    "w": region_schema(),
                    "nodes_per_axis": {"type": "integer", "minimum": 4, "description": "N"},
                    "padding": {"type": ["number", "null"], "exclusiveMinimum": 0}
                }
            },
            "vertical": {
                "type": "object",
                "required": ["levels"],
                "additionalProperties": false,
                "properties": {
                    "levels": {"type": "integer", "minimum": 2, "description": "J"},
                    "height": {"type": ["number", "null"], "description": "M"},
                    "grading": {"type": ["number", "null"], "minimum": 1, "description": "γ"}
                }
            },
            "coefficient": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["identity", "diagonal", "table"]},
                    "axes": {"type": "array", "items": scalar},
                    "values": {"type": "array", "items": numbers.clone()},
                    "identity_outside_omega": {"type": "boolean"}
                }
            },
            "seed": {"type": "integer", "minimum": 0},
            "output_dir": {"type": ["string", "null"]},
            "params": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "refinement_levels": {"type": "array", "items": {"type": "integer", "minimum": 4}},
                    "alphas": numbers.clone(),
                    "alpha": {"type": "number", "exclusiveMinimum": 0},
                    "epsilon": {"type": "number", "exclusiveMinimum": 0},
                    "noise": {"type": "number", "minimum": 0},
                    "refine_data": {"type": "boolean"},
                    "basis_size": {"type": "integer", "minimum": 1},
                    "samples": {"type": "integer", "minimum": 1},
                    "probes": {"type": "integer", "minimum": 0},
                    "heights": numbers.clone(),
                    "amplitudes": numbers
                }
            }
        }
    })
}

/// A one-dimensional configuration used by tests.
#[cfg(test)]
pub fn example(experiment: &str) -> ExperimentConfig {
    use calderon_core::BoxRegion;
    ExperimentConfig {
        experiment: experiment.into(),
        n: Some(1),
        s: 0.5,
        geometry: GeometrySpec {
            omega: BoxRegion::new(vec![0.0], vec![1.0]),
            w: BoxRegion::new(vec![1.5], vec![2.0]),
            nodes_per_axis: 32,
            padding: None,
        },
        vertical: None,
        coefficient: CoefficientSpec::identity(),
        seed: 1,
        params: Params::default(),
        output_dir: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: f64) -> String {
        let mut v = serde_json::to_value(example("duality")).unwrap();
        v["s"] = json!(s);
        v.to_string()
    }

    #[test]
    fn example_round_trips() {
        let cfg = ExperimentConfig::parse(&text(0.5)).unwrap();
        assert_eq!(cfg.dim(), 1);
        assert_eq!(cfg.levels(), vec![16, 32, 64]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::parse(&text(1.2)).unwrap_err().to_string();
        assert!(err.contains("s=1.2"), "{err}");
        let mut v = serde_json::to_value(example("duality")).unwrap();
        v["n"] = json!(2);
        let err = ExperimentConfig::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("n=2"), "{err}");
        v["n"] = json!(1);
        v["params"] = json!({"epsilon": 0.7});
        let err = ExperimentConfig::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("params.epsilon=0.7"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(example("duality")).unwrap();
        v["params"] = json!({"alfa": 1.0});
        let err = ExperimentConfig::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("alfa"), "{err}");
    }
}
