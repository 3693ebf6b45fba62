//! Optional TOML defaults. Command-line flags win over the file.

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub response: Option<String>,
    pub model: Option<String>,
    pub grid: Option<String>,
    pub sample: Option<String>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub pinch: Option<String>,
    pub bass: Option<f64>,
    pub k: Option<usize>,
    pub resample: Option<String>,
    pub columns: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
