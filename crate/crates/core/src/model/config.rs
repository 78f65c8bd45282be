//! JSON model configuration.
//!
//! ```json
//! {
//!   "K": 2,
//!   "horizon": 2.0,
//!   "example": "gl_excitatory",
//!   "params": { "mu": 1.0, "r": 1.0, "b": 1.0 },
//!   "init": { "kind": "constant", "value": 1.0 }
//! }
//! ```
//!
//! A `custom` block replaces `example`/`params` with expressions:
//! `h_matrix` (rows are sources, in `t`), `f` (in `x`), `g` and `sigma`
//! (per node, in `t` and `lam`), plus the declared bounds `h_bound` and
//! `lipschitz`.

use serde::{Deserialize, Serialize};

use super::{Builtin, CfiapSpec, InitLaw};
use crate::error::{FiapError, Result};
use crate::expr::Expr;

/// Interaction weights: one value for every off-diagonal pair, or a full
/// matrix with sources as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Weights {
    /// Expands to a `k×k` matrix; scalar weights leave the diagonal at zero.
    pub fn matrix(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Weights::Scalar(w) => Ok((0..k).map(|j| (0..k).map(|i| if i == j { 0.0 } else { *w }).collect()).collect()),
            Weights::Matrix(m) => {
                if m.len() != k || m.iter().any(|r| r.len() != k) {
                    return Err(FiapError::Config(format!("mu must be a {k}x{k} matrix")));
                }
                Ok(m.clone())
            }
        }
    }
}

/// A per-node parameter: shared scalar or explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeValues {
    Scalar(f64),
    PerNode(Vec<f64>),
}

impl NodeValues {
    pub fn expand(&self, k: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            NodeValues::Scalar(v) => Ok(vec![*v; k]),
            NodeValues::PerNode(v) if v.len() == k => Ok(v.clone()),
            NodeValues::PerNode(v) => Err(FiapError::Config(format!("{what} has {} entries, expected {k}", v.len()))),
        }
    }
}

/// Parameters of the builtin families. Gordon-Newell ignores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    pub mu: Weights,
    pub r: NodeValues,
    pub b: NodeValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<NodeValues>,
}

impl BuiltinParams {
    /// Homogeneous Galves-Löcherbach parameters without decay.
    pub fn gl(mu: f64, r: f64, b: f64) -> Self {
        Self { mu: Weights::Scalar(mu), r: NodeValues::Scalar(r), b: NodeValues::Scalar(b), tau: None }
    }
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self::gl(1.0, 1.0, 1.0)
    }
}

/// Initial laws: one law for every node or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    Single(InitLaw),
    PerNode(Vec<InitLaw>),
}

impl InitSpec {
    pub fn expand(self, k: usize) -> Result<Vec<InitLaw>> {
        match self {
            InitSpec::Single(law) => Ok(vec![law; k]),
            InitSpec::PerNode(v) if v.len() == k => Ok(v),
            InitSpec::PerNode(v) => Err(FiapError::Config(format!("init has {} entries, expected {k}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub h_matrix: Vec<Vec<Expr>>,
    pub f: Expr,
    pub g: Vec<Expr>,
    pub sigma: Vec<Expr>,
    pub h_bound: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BuiltinParams>,
    pub init: InitSpec,
}

impl ModelConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            FiapError::Config(format!("field `{path}`: {inner}"))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes")
    }

    pub fn build(&self) -> Result<CfiapSpec> {
        match (&self.example, &self.custom) {
            (Some(name), None) => {
                let name: Builtin = name.parse()?;
                let params = self.params.clone().unwrap_or_default();
                CfiapSpec::builtin(name, self.k, &params, self.horizon, self.init.clone())
            }
            (None, Some(c)) => {
                if c.h_matrix.len() != self.k {
                    return Err(FiapError::Config(format!("h_matrix has {} rows, K is {}", c.h_matrix.len(), self.k)));
                }
                if self.params.is_some() {
                    return Err(FiapError::Config("`params` only applies to builtin examples".into()));
                }
                CfiapSpec::custom(
                    self.horizon,
                    c.h_matrix.clone(),
                    c.h_bound,
                    c.f.clone(),
                    c.lipschitz,
                    c.g.clone(),
                    c.sigma.clone(),
                    self.init.clone().expand(self.k)?,
                )
            }
            _ => Err(FiapError::Config("exactly one of `example` and `custom` must be given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gl_desk;

    #[test]
    fn builtin_round_trip_is_exact() {
        let mut p = BuiltinParams::gl(0.1 + 0.2, 1.0 / 3.0, std::f64::consts::PI);
        p.tau = Some(NodeValues::PerNode(vec![0.7, 1e-3]));
        let spec = CfiapSpec::builtin(
            Builtin::GlInhibitory,
            2,
            &p,
            2.5,
            InitSpec::Single(InitLaw::TruncatedExponential { rate: 1.0 / 7.0, cap: 9.1 }),
        )
        .unwrap();
        let json = spec.to_config().to_json();
        let back = ModelConfig::from_json(&json).unwrap().build().unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.to_config().to_json(), json);
    }

    #[test]
    fn custom_round_trip_is_exact() {
        let spec = gl_desk(3, 2.0).into_custom();
        let json = spec.to_config().to_json();
        let back = ModelConfig::from_json(&json).unwrap().build().unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = r#"{"K": 2, "horizon": 1.0, "example": "gl_excitatory", "init": {"kind": "constant", "valu": 1}}"#;
        let err = ModelConfig::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("init"), "{err}");
        let both = r#"{"K": 2, "horizon": 1.0, "init": {"kind": "constant", "value": 1}}"#;
        assert!(ModelConfig::from_json(both).unwrap().build().is_err());
        let ex = r#"{"K": 2, "horizon": 1.0, "example": "hawkes", "init": {"kind": "constant", "value": 1}}"#;
        assert!(matches!(ModelConfig::from_json(ex).unwrap().build(), Err(FiapError::UnknownModel(_))));
    }

    #[test]
    fn custom_expressions_parse() {
        let src = r#"{
            "K": 2, "horizon": 1.0,
            "custom": {
                "h_matrix": [["0", "1 + 0*t"], ["2", "0"]],
                "f": "abs(x)", "g": ["1", "1"], "sigma": ["lam", "max(lam, 1)"],
                "h_bound": 2, "lipschitz": 1
            },
            "init": [{"kind": "constant", "value": 1}, {"kind": "uniform", "low": 0, "high": 2}]
        }"#;
        let spec = ModelConfig::from_json(src).unwrap().build().unwrap();
        assert_eq!(spec.h(1, 0, 0.3), 2.0);
        assert_eq!(spec.sigma(1, 0.0, 0.5), 1.0);
    }
}
