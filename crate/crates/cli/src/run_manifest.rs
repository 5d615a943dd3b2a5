use std::path::{Path, PathBuf};

use pennet::nn::ModelSpec;
use pennet::preprocess::PreprocConfig;
use pennet::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::args::Precision;
use crate::exit::{Failure, CONFIG, IO};

pub const FILE_NAME: &str = "run_manifest.json";

/// Fully resolved configuration of a `train` run. Replaying it reproduces
/// the run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub calibration: Option<PathBuf>,
    pub train_fraction: f64,
    pub preprocess: PreprocConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(IO, format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::new(CONFIG, format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Failure::new(IO, format!("{}: {e}", path.display())))
    }
}
