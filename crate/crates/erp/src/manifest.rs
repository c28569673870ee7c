use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Provenance record embedded in every JSON artifact a subcommand writes.
/// Output paths are relative to the output directory so that reruns into a
/// different directory produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.into(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed,
            hyperparameters: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, path: &std::path::Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    pub fn param(mut self, name: &str, value: impl Serialize) -> Self {
        self.hyperparameters.insert(name.into(), serde_json::to_value(value).expect("serializable"));
        self
    }

    pub fn output(mut self, name: impl Into<String>) -> Self {
        self.outputs.push(name.into());
        self
    }
}
