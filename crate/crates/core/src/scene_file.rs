//! JSON scene files: the constraint, the path, the weight strategy, an
//! optional analytic fiber angle and numerical settings.

use serde::{Deserialize, Serialize};

use crate::calc3::{OneForm, Vec3};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::gvf::WeightSpec;
use crate::scene::{ImplicitLoop, Numerics, PfaffianConstraint, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub constraint: ConstraintSpec,
    pub path: PathSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub beta: [String; 3],
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub f: String,
    pub g: String,
    pub seed: [f64; 3],
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Default,
    Custom,
    Robust,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub mode: WeightMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub fiber_angle: Option<String>,
}

/// A scene file turned into working objects.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub weights: WeightSpec,
    pub chart: Option<Expr>,
}

impl SceneFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("scene file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Parses every expression and checks the weight fields against the mode.
    pub fn weight_spec(&self) -> Result<WeightSpec> {
        let w = &self.weights;
        match w.mode {
            WeightMode::Default => {
                if w.a.is_some() || w.b.is_some() || w.eps0.is_some() {
                    return Err(Error::Invalid("default weights take no a, b or eps0".into()));
                }
                Ok(WeightSpec::Default)
            }
            WeightMode::Custom => {
                let (Some(a), Some(b)) = (&w.a, &w.b) else {
                    return Err(Error::Invalid("custom weights need both a and b".into()));
                };
                WeightSpec::custom(a, b)
            }
            WeightMode::Robust => {
                if w.a.is_some() {
                    return Err(Error::Invalid("robust weights derive a; give only b and eps0".into()));
                }
                let eps0 = w.eps0.ok_or_else(|| Error::Invalid("robust weights need eps0".into()))?;
                WeightSpec::robust(
                    w.b.as_deref().unwrap_or("H"),
                    eps0,
                    w.budget.unwrap_or(self.numerics.weight_samples),
                )
            }
        }
    }

    /// Builds the scene (tracing the path) with the parsed weights and chart.
    pub fn load(&self) -> Result<LoadedScene> {
        let [b1, b2, b3] = &self.constraint.beta;
        let beta = OneForm::parse([b1.as_str(), b2.as_str(), b3.as_str()])?;
        let path = ImplicitLoop {
            f: Expr::parse(&self.path.f)?,
            g: Expr::parse(&self.path.g)?,
            seed: Vec3::from(self.path.seed),
            tube_radius: self.path.delta,
        };
        let weights = self.weight_spec()?;
        let chart = match self.chart.as_ref().and_then(|c| c.fiber_angle.as_deref()) {
            Some(text) => Some(Expr::parse(text)?),
            None => None,
        };
        if !(self.path.delta > 0.0) {
            return Err(Error::Invalid(format!("path.delta must be positive, got {}", self.path.delta)));
        }
        if !matches!(self.numerics.integrator.as_str(), "rk4" | "rk45") {
            return Err(Error::Invalid(format!("unknown integrator {:?}", self.numerics.integrator)));
        }
        let constraint = PfaffianConstraint { beta, normalize: self.constraint.normalize };
        let scene = Scene::new(constraint, path, self.numerics.clone())?;
        Ok(LoadedScene { scene, weights, chart })
    }

    /// The reference scene: `beta = dx3 + x1 dx2 - x2 dx1` around the unit
    /// circle in the `x3 = 0` plane, tube radius `0.5`.
    pub fn heisenberg() -> Self {
        Self {
            constraint: ConstraintSpec { beta: ["-x2".into(), "x1".into(), "1".into()], normalize: false },
            path: PathSpec { f: "x1^2 + x2^2 - 1".into(), g: "x3".into(), seed: [1.0, 0.0, 0.0], delta: 0.5 },
            weights: WeightsSpec::default(),
            chart: Some(ChartSpec { fiber_angle: Some("atan2(x2, x1)".into()) }),
            numerics: Numerics::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_round_trips_and_loads() {
        let f = SceneFile::heisenberg();
        let back = SceneFile::from_json(&f.to_json()).unwrap();
        assert_eq!(f, back);
        let loaded = back.load().unwrap();
        assert_eq!(loaded.weights, WeightSpec::Default);
        assert!(loaded.chart.is_some());
    }

    #[test]
    fn unknown_keys_and_missing_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&SceneFile::heisenberg().to_json()).unwrap();
        v["path"]["radius"] = serde_json::json!(1.0);
        assert!(matches!(SceneFile::from_json(&v.to_string()), Err(Error::Invalid(_))));
        assert!(SceneFile::from_json(r#"{"constraint": {"beta": ["0","0","1"]}}"#).is_err());
        assert!(SceneFile::from_json("{ not json").is_err());
    }

    #[test]
    fn numerics_default_when_absent() {
        let text = r#"{
            "constraint": {"beta": ["-x2", "x1", "1"]},
            "path": {"f": "x1^2 + x2^2 - 1", "g": "x3", "seed": [1, 0, 0], "delta": 0.5},
            "numerics": {"max_time": 50}
        }"#;
        let f = SceneFile::from_json(text).unwrap();
        assert_eq!(f.numerics.max_time, 50.0);
        assert_eq!(f.numerics.trace_step, Numerics::default().trace_step);
    }

    #[test]
    fn weight_modes() {
        let mut f = SceneFile::heisenberg();
        f.weights = WeightsSpec { mode: WeightMode::Custom, a: Some("2".into()), b: None, eps0: None, budget: None };
        assert!(f.weight_spec().is_err());
        f.weights.b = Some("sqrt(H)".into());
        assert!(matches!(f.weight_spec().unwrap(), WeightSpec::Custom { .. }));
        f.weights = WeightsSpec { mode: WeightMode::Robust, eps0: Some(0.0), ..WeightsSpec::default() };
        assert!(f.weight_spec().is_err());
        f.weights.b = Some("nope(H)".into());
        f.weights.eps0 = Some(0.1);
        assert!(matches!(f.weight_spec(), Err(Error::Expr(_))));
    }
}
