//! Scenario persistence: a self-describing, versioned JSON layout.
//!
//! The top level is flat (`version`, `vertices`, `edges`, `out_order`,
//! `messages`, `timeout`, `guarantee`, `fault_model`, `scheme`). Assertions
//! inside the scheme are stored as s-expression strings (see
//! [`crate::scheme`]). Unknown fields are rejected so that typos fail loudly,
//! and serialization is deterministic: saving the same scenario twice yields
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, FaultModel, MessageSpec, Network, Scenario, Violation};
use crate::scheme::ForwardingScheme;

/// Current file format version.
pub const FORMAT_VERSION: u32 = 1;

/// Why a scenario file could not be loaded.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    vertices: Vec<String>,
    edges: Vec<Edge>,
    out_order: BTreeMap<String, Vec<String>>,
    messages: Vec<MessageSpec>,
    timeout: u32,
    guarantee: u32,
    fault_model: FaultModel,
    scheme: ForwardingScheme,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            version: FORMAT_VERSION,
            vertices: s.network.vertices.clone(),
            edges: s.network.edges.clone(),
            out_order: s.network.out_order.clone(),
            messages: s.messages.clone(),
            timeout: s.timeout,
            guarantee: s.guarantee,
            fault_model: s.fault_model,
            scheme: s.scheme.clone(),
        }
    }
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        Scenario {
            network: Network {
                vertices: f.vertices,
                edges: f.edges,
                out_order: f.out_order,
            },
            messages: f.messages,
            scheme: f.scheme,
            timeout: f.timeout,
            guarantee: f.guarantee,
            fault_model: f.fault_model,
        }
    }
}

/// Renders a scenario as canonical JSON (pretty-printed, trailing newline).
pub fn scenario_to_json(s: &Scenario) -> String {
    let file = ScenarioFile::from(s);
    let mut out = serde_json::to_string_pretty(&file).expect("scenario serialization");
    out.push('\n');
    out
}

/// Writes the canonical JSON form of `s` to `path`.
pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), LoadError> {
    std::fs::write(path, scenario_to_json(s))?;
    Ok(())
}

/// Parses scenario JSON without semantic validation.
///
/// Structural problems (missing fields, unknown fields, wrong version) are
/// errors; referential and scheme-level problems are left for
/// [`super::validate_scenario`].
pub fn parse_scenario(json: &str) -> Result<Scenario, LoadError> {
    let file: ScenarioFile = serde_json::from_str(json)?;
    if file.version != FORMAT_VERSION {
        return Err(LoadError::Version(file.version));
    }
    Ok(file.into())
}

/// Reads and fully validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, LoadError> {
    let json = std::fs::read_to_string(path)?;
    let s = parse_scenario(&json)?;
    let violations = super::validate_scenario(&s);
    if violations.is_empty() {
        Ok(s)
    } else {
        Err(LoadError::Invalid(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;

    #[test]
    fn round_trip_preserves_every_field() {
        let s = fixtures::unit_link();
        let json = scenario_to_json(&s);
        let back = parse_scenario(&json).unwrap();
        assert_eq!(s, back);
        // And serialization is stable.
        assert_eq!(json, scenario_to_json(&back));
    }

    #[test]
    fn missing_timeout_names_the_field() {
        let s = fixtures::unit_link();
        let mut value: serde_json::Value = serde_json::from_str(&scenario_to_json(&s)).unwrap();
        value.as_object_mut().unwrap().remove("timeout");
        let err = parse_scenario(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("timeout"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let s = fixtures::unit_link();
        let mut value: serde_json::Value = serde_json::from_str(&scenario_to_json(&s)).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        assert!(parse_scenario(&value.to_string()).is_err());
    }

    #[test]
    fn undeclared_edge_endpoint_is_a_validation_error() {
        let mut s = fixtures::unit_link();
        s.network.edges[0].to = "ghost".into();
        // out_order still lists e1 under u, so only the endpoint is broken.
        let json = scenario_to_json(&s);
        let dir = std::env::temp_dir().join(format!("ttscore-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(&path, json).unwrap();
        match load_scenario(&path) {
            Err(LoadError::Invalid(v)) => {
                assert!(v.iter().any(|x| x.message.contains("ghost")), "{v:?}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
