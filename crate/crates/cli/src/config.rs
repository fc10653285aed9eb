//! TOML run configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! [run]
//! experiment = "ms-wave"
//! model = "msmp-pde"
//! seed = 0
//!
//! [data]
//! train = 256
//! valid = 64
//! test = 64
//!
//! [model]
//! n_hid = 64
//! n_layers = 6
//! window = 25
//!
//! [train]
//! epochs = 10
//! lr0 = 1e-3
//! precision = "f32"
//! ```

use std::path::Path;

use serde::Deserialize;

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Option<String>,
    pub model: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<usize>,
    pub valid: Option<usize>,
    pub test: Option<usize>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_hid: Option<usize>,
    pub n_layers: Option<usize>,
    pub window: Option<usize>,
    pub lem_dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr0: Option<f64>,
    pub lr_decay: Option<f64>,
    pub decay_every: Option<usize>,
    pub max_unroll: Option<usize>,
    pub weight_decay: Option<f64>,
    pub samples_per_trajectory: Option<usize>,
    pub precision: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
