//! JSON group configuration.
//!
//! Schema:
//! ```json
//! {"generators": [
//!   {"name": "f", "type": "mobius", "matrix": [1.0, 1.0, 0.0, 1.0]},
//!   {"name": "r", "type": "rotation", "alpha": 0.25},
//!   {"name": "p", "type": "perturbed_rotation", "alpha": 0.3, "eps": 0.05, "k": 1},
//!   {"name": "u", "type": "bump_flow", "support": [0.4, 0.6], "time": 1.0, "amplitude": 0.005}
//! ]}
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{BumpField, CircleMapExpr, ExprError};
use crate::word::GroupPresentation;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid generator `{name}`: {source}")]
    BadGenerator { name: String, source: ExprError },
    #[error("duplicate generator name `{0}`")]
    DuplicateName(String),
    #[error("bump flow support must satisfy start != end")]
    EmptySupport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupConfig {
    pub generators: Vec<GeneratorConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum GeneratorConfig {
    #[serde(rename = "mobius")]
    Mobius {
        #[serde(default)]
        name: Option<String>,
        matrix: [f64; 4],
    },
    #[serde(rename = "rotation")]
    Rotation {
        #[serde(default)]
        name: Option<String>,
        alpha: f64,
    },
    #[serde(rename = "perturbed_rotation")]
    PerturbedRotation {
        #[serde(default)]
        name: Option<String>,
        alpha: f64,
        eps: f64,
        k: u32,
    },
    #[serde(rename = "bump_flow")]
    BumpFlow {
        #[serde(default)]
        name: Option<String>,
        support: [f64; 2],
        time: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

fn default_amplitude() -> f64 {
    1.0
}

impl GeneratorConfig {
    fn name(&self) -> Option<&str> {
        match self {
            GeneratorConfig::Mobius { name, .. }
            | GeneratorConfig::Rotation { name, .. }
            | GeneratorConfig::PerturbedRotation { name, .. }
            | GeneratorConfig::BumpFlow { name, .. } => name.as_deref(),
        }
    }
}

/// Build the group, interning bump fields so that generators sharing a
/// support share one field (and its flow tables).
pub fn build_group(cfg: &GroupConfig) -> Result<GroupPresentation, ConfigError> {
    let mut fields: HashMap<(u64, u64, u64), Arc<BumpField>> = HashMap::new();
    let mut gens = Vec::with_capacity(cfg.generators.len());
    let mut names = Vec::new();
    for (i, g) in cfg.generators.iter().enumerate() {
        let name = g
            .name()
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("g{i}"));
        if names.contains(&name) {
            return Err(ConfigError::DuplicateName(name));
        }
        let wrap = |source: ExprError| ConfigError::BadGenerator {
            name: name.clone(),
            source,
        };
        let expr = match g {
            GeneratorConfig::Mobius { matrix, .. } => {
                CircleMapExpr::mobius(*matrix).map_err(wrap)?
            }
            GeneratorConfig::Rotation { alpha, .. } => CircleMapExpr::rotation(*alpha),
            GeneratorConfig::PerturbedRotation { alpha, eps, k, .. } => {
                CircleMapExpr::perturbed_rotation(*alpha, *eps, *k).map_err(wrap)?
            }
            GeneratorConfig::BumpFlow {
                support,
                time,
                amplitude,
                ..
            } => {
                let len = support[1] - support[0];
                if len == 0.0 {
                    return Err(ConfigError::EmptySupport);
                }
                let key = (
                    support[0].to_bits(),
                    support[1].to_bits(),
                    amplitude.to_bits(),
                );
                let field = match fields.get(&key) {
                    Some(f) => f.clone(),
                    None => {
                        let len = if len > 0.0 { len } else { len + 1.0 };
                        let f = Arc::new(
                            BumpField::new(support[0], len, *amplitude).map_err(wrap)?,
                        );
                        fields.insert(key, f.clone());
                        f
                    }
                };
                CircleMapExpr::bump_flow(field, *time).map_err(wrap)?
            }
        };
        names.push(name.clone());
        gens.push((name, expr));
    }
    Ok(GroupPresentation::new(gens))
}

pub fn parse_group(json: &str) -> Result<GroupPresentation, ConfigError> {
    let cfg: GroupConfig = serde_json::from_str(json)?;
    build_group(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_full_schema() {
        let json = r#"{"generators":[
            {"name":"f","type":"mobius","matrix":[1.0,1.0,0.0,1.0]},
            {"type":"rotation","alpha":0.25},
            {"type":"perturbed_rotation","alpha":0.3,"eps":0.05,"k":1},
            {"name":"u","type":"bump_flow","support":[0.4,0.6],"time":1.0,"amplitude":0.005}
        ]}"#;
        let g = parse_group(json).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.name(0), "f");
        assert_eq!(g.name(1), "g1");
        assert_eq!(g.index_of("u"), Some(3));
    }

    #[test]
    fn reject_bad_mobius() {
        let json = r#"{"generators":[{"type":"mobius","matrix":[1.0,0.0,0.0,-1.0]}]}"#;
        assert!(parse_group(json).is_err());
    }

    #[test]
    fn shared_bump_support_is_interned() {
        let json = r#"{"generators":[
            {"name":"u1","type":"bump_flow","support":[0.4,0.6],"time":1.0,"amplitude":0.01},
            {"name":"u2","type":"bump_flow","support":[0.4,0.6],"time":1.4142135623730951,"amplitude":0.01}
        ]}"#;
        let g = parse_group(json).unwrap();
        let f1 = match &**g.expr(0) {
            CircleMapExpr::BumpFlowTime(node) => Arc::as_ptr(&node.field),
            _ => panic!(),
        };
        let f2 = match &**g.expr(1) {
            CircleMapExpr::BumpFlowTime(node) => Arc::as_ptr(&node.field),
            _ => panic!(),
        };
        assert_eq!(f1, f2);
    }
}
