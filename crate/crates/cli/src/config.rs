use std::path::{Path, PathBuf};

use landscape_recon::gauge_recon::GaugeStudyConfig;
use landscape_recon::recon_pipeline::{HorizonStudyConfig, InterfaceStudyConfig, PipelineConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a run depends on; the output directory and stage name never
/// enter the hash.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<String>,
    pub pipeline: PipelineConfig,
    pub gauge: GaugeStudyConfig,
    pub horizon: HorizonStudyConfig,
    pub interface: InterfaceStudyConfig,
    /// KS tests pass above this p-value.
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Replaces every seed with `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.pipeline.seed = seed;
        self.gauge.seed = seed;
        self.horizon.seed = seed;
        self.interface.first_seed = seed;
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.01)
    }

    pub fn seed(&self) -> u64 {
        self.pipeline.seed
    }

    /// SHA-256 of the canonical JSON with stage name and output directory cleared.
    pub fn hash(&self) -> String {
        let canonical = Self { subcommand: None, out: None, ..self.clone() };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
