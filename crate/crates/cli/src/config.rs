use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emdm::emloop::EmConfig;
use emdm::operators::OperatorSpec;
use emdm::samplers::DpsConfig;
use emdm::schedule::ScheduleConfig;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Gmm2d {
        n: usize,
        means: Vec<[f64; 2]>,
        std: f64,
        weights: Option<Vec<f64>>,
    },
    Rings2d {
        n: usize,
        /// Annuli as (inner radius, outer radius) pairs.
        rings: Vec<[f64; 2]>,
    },
    ToyImages {
        n: usize,
        size: usize,
    },
}

impl DatasetSpec {
    pub fn n(&self) -> usize {
        match self {
            DatasetSpec::Gmm2d { n, .. }
            | DatasetSpec::Rings2d { n, .. }
            | DatasetSpec::ToyImages { n, .. } => *n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::Gmm2d { .. } | DatasetSpec::Rings2d { .. } => 2,
            DatasetSpec::ToyImages { size, .. } => size * size,
        }
    }

    pub fn is_images(&self) -> bool {
        matches!(self, DatasetSpec::ToyImages { .. })
    }

    pub fn image_size(&self) -> Option<usize> {
        match self {
            DatasetSpec::ToyImages { size, .. } => Some(*size),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Measurements reconstructed during evaluation (caps the set).
    pub n_recon: usize,
    pub gen_samples: usize,
    pub sw_projections: usize,
    pub run_dps_baseline: bool,
    /// Dump the first reconstruction chain's per-step diagnostics as CSV.
    #[serde(default)]
    pub trace_chain: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_recon: 32,
            gen_samples: 1024,
            sw_projections: 64,
            run_dps_baseline: false,
            trace_chain: false,
        }
    }
}

/// One experiment, end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub operator: OperatorSpec,
    pub schedule: ScheduleConfig,
    pub em: EmConfig,
    #[serde(default)]
    pub dps: Option<DpsConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub metrics: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {}", path.display(), e)))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("cannot parse {}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.dataset {
            DatasetSpec::Gmm2d {
                n, means, std, weights,
            } => {
                if *n == 0 || means.is_empty() || *std <= 0.0 {
                    return Err(CliError::config("gmm2d needs n > 0, means, std > 0"));
                }
                if let Some(w) = weights {
                    if w.len() != means.len() {
                        return Err(CliError::config("gmm2d weights must match means"));
                    }
                }
            }
            DatasetSpec::Rings2d { n, rings } => {
                if *n == 0 || rings.is_empty() {
                    return Err(CliError::config("rings2d needs n > 0 and rings"));
                }
                for r in rings {
                    if !(0.0 <= r[0] && r[0] < r[1]) {
                        return Err(CliError::config("ring radii must satisfy 0 <= r0 < r1"));
                    }
                }
            }
            DatasetSpec::ToyImages { n, size } => {
                if *n == 0 || *size < 4 {
                    return Err(CliError::config("toy_images needs n > 0 and size >= 4"));
                }
            }
        }
        match &self.operator {
            OperatorSpec::Awgn { noise_std } => {
                if !(noise_std > &0.0) {
                    return Err(CliError::config("awgn noise_std must be positive"));
                }
            }
            OperatorSpec::Inpaint {
                noise_std,
                keep_fraction,
                ..
            } => {
                // The likelihood needs a strictly positive noise scale even
                // for nominally noiseless masking; 0.01 is the floor.
                if !(*noise_std >= 0.01) || !(*keep_fraction > 0.0 && *keep_fraction <= 1.0) {
                    return Err(CliError::config(
                        "inpaint needs noise_std >= 0.01 and keep_fraction in (0, 1]",
                    ));
                }
            }
            OperatorSpec::Blur {
                noise_std,
                kernel_size,
                kernel_std,
            } => {
                if !(noise_std > &0.0) || kernel_size % 2 == 0 || !(kernel_std > &0.0) {
                    return Err(CliError::config(
                        "blur needs noise_std > 0, odd kernel_size, kernel_std > 0",
                    ));
                }
            }
        }
        emdm::schedule::NoiseSchedule::from_config(&self.schedule)
            .map_err(|e| CliError::config(e.to_string()))?;
        self.em
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn measurements_dir(&self) -> PathBuf {
        self.output_dir.join("measurements")
    }
}
