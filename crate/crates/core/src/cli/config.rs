use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::conformal::AssignmentMode;
use crate::dataset::SyntheticConfig;
use crate::evalreport::{validate_grid, BaselineConfig};
use crate::graphbuild::GraphConfig;
use crate::gtmodel::{ModelConfig, TrainConfig};
use crate::regions::KMeansConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Labelled pool split into training and calibration samples.
    pub fingerprints: PathBuf,
    pub inventory: PathBuf,
    /// Held-out evaluation samples.
    pub test: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self::in_dir(Path::new("data"))
    }
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            fingerprints: dir.join("fingerprints.csv"),
            inventory: dir.join("inventory.csv"),
            test: dir.join("test.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub environment: SyntheticConfig,
    pub test_samples: usize,
    pub test_seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            environment: SyntheticConfig::default(),
            test_samples: 250,
            test_seed: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: 500,
            heads: 4,
            layers: 2,
            init_seed: 0,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, ap_count: usize) -> ModelConfig {
        ModelConfig {
            ap_count,
            hidden: self.hidden,
            heads: self.heads,
            layers: self.layers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalSection {
    pub alpha: f64,
    pub k: usize,
    pub assignment: AssignmentMode,
    pub region_seed: u64,
    pub restarts: usize,
    pub alpha_grid: Vec<f64>,
}

impl Default for ConformalSection {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k: 5,
            assignment: AssignmentMode::Mixed,
            region_seed: 0,
            restarts: 1,
            alpha_grid: vec![0.01, 0.05, 0.10, 0.15, 0.20],
        }
    }
}

impl ConformalSection {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.region_seed,
            restarts: self.restarts,
            ..KMeansConfig::default()
        }
    }
}

/// Whole-pipeline configuration. Every field has a default, so `{}` is a
/// valid file; command-line flags override values read from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub synthetic: SynthSection,
    pub graph: GraphConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitSection,
    pub conformal: ConformalSection,
    pub baseline: BaselineConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            synthetic: SynthSection::default(),
            graph: GraphConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            split: SplitSection::default(),
            conformal: ConformalSection::default(),
            baseline: BaselineConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.synthetic.environment.validate().map_err(|e| cfg(&e))?;
        self.graph.validate().map_err(|e| cfg(&e))?;
        self.model.model_config(1).validate().map_err(|e| cfg(&e))?;
        self.train.validate().map_err(|e| cfg(&e))?;
        self.conformal.kmeans().validate().map_err(|e| cfg(&e))?;
        validate_grid(&self.conformal.alpha_grid).map_err(|e| cfg(&e))?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "train fraction {} outside (0, 1)",
                self.split.train_fraction
            )));
        }
        if !(self.conformal.alpha > 0.0 && self.conformal.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha {} outside (0, 1)", self.conformal.alpha)));
        }
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join("checkpoint.json")
    }

    pub fn loss_log_path(&self) -> PathBuf {
        self.output_dir.join("loss_log.csv")
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.output_dir.join("calibration.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.clone()
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.output_dir.join("sweep")
    }
}
