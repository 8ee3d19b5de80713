//! Optional JSON configuration file supplying command defaults. Every
//! field is optional; command-line flags always win.

use std::path::Path;

use serde::Deserialize;

use crate::Failure;

/// Partial training-parameter overrides from the config file. Flags
/// override these; these override the preset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub seq_len: Option<usize>,
    pub frame_stride: Option<usize>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub base_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenarios: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<String>,
    pub dataset: Option<String>,
    pub kind: Option<String>,
    pub preset: Option<String>,
    pub policy: Option<String>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub train: Option<TrainOverrides>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }

    /// Flag-supplied scenarios win over the config file's list.
    pub fn merge_scenarios(&self, from_flags: Vec<String>) -> Vec<String> {
        if !from_flags.is_empty() {
            return from_flags;
        }
        self.scenarios.clone().unwrap_or_default()
    }

    pub fn merge_seeds(&self, from_flags: Vec<u64>) -> Vec<u64> {
        if !from_flags.is_empty() {
            return from_flags;
        }
        self.seeds.clone().unwrap_or_else(|| vec![0])
    }
}
