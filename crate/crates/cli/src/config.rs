//! Experiment configuration echoed next to every output for
//! reproducibility. Parsing rejects unknown keys and round-trips to
//! identical JSON.

use adiawalk::Family;
use serde::{Deserialize, Serialize};

/// Where the chain came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ChainSource {
    File { path: String },
    Generator { family: Family, lazy: bool },
}

/// The effective parameters of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub chain: ChainSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marked: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub out_dir: String,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
