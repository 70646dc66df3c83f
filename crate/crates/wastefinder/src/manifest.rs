//! Run manifest echoed into every output file so results are reproducible
//! from the manifest plus the trace.

use serde::{Deserialize, Serialize};

use crate::classify::PairKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<PairKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fp_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<usize>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "wastefinder".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mode: None,
            pattern: None,
            n: None,
            trace: None,
            period: None,
            phase: None,
            registers: None,
            seed: None,
            fp_threshold: None,
            exact: None,
            runs: None,
            top: None,
        }
    }

    /// One-line rendering used at the head of text outputs.
    pub fn text_line(&self) -> String {
        format!(
            "# {}",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}
