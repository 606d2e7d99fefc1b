//! TOML run configuration. Every section is optional; command-line flags
//! override whatever the file sets.

use std::fs;
use std::path::Path;

use ktfield::cluster::ClusterConfig;
use ktfield::fem::{Material, SolveConfig};
use ktfield::life::{LifeModelParams, TestCondition};
use ktfield::surrogate::{Architecture, DatasetConfig, TrainConfig};
use ktfield::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub rows: usize,
    pub cols: usize,
    pub pixel_pitch_um: f64,
    pub r_inner_nominal_um: f64,
    pub rms_um: f64,
    pub correlation_um: f64,
    pub mean_offset_um: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 128,
            pixel_pitch_um: 3.0,
            r_inner_nominal_um: 1500.0,
            rms_um: 10.0,
            correlation_um: 20.0,
            mean_offset_um: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FemConfig {
    pub material: Material,
    pub solve: SolveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifeConfig {
    pub params: LifeModelParams,
    pub condition: TestCondition,
}

impl Default for LifeConfig {
    fn default() -> Self {
        Self {
            params: LifeModelParams::default(),
            condition: TestCondition {
                nominal_stress_amplitude: 400.0,
                stress_ratio: 0.1,
                temperature: "ambient".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sections: usize,
    /// FE-labelled patches generated for training.
    pub dataset_samples: usize,
    pub epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sections: 720,
            dataset_samples: 16,
            epochs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime choose.
    pub threads: usize,
    pub surface: SurfaceConfig,
    pub fem: FemConfig,
    pub dataset: DatasetConfig,
    pub surrogate: SurrogateConfig,
    pub cluster: ClusterConfig,
    pub life: LifeConfig,
    pub pipeline: PipelineConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
