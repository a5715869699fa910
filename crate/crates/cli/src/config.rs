//! TOML pipeline configuration. Every section and field is optional.

use std::path::Path;

use icoclust_core::cluster::ClusterParams;
use icoclust_core::experiment::ExperimentConfig;
use icoclust_core::AeConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub ae: u64,
    pub clustering: u64,
    pub split: u64,
    pub cv: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let d = AeConfig::default();
        Self { learning_rate: d.learning_rate, batch_size: d.batch_size, epochs: d.epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub knn_k: usize,
    pub outlier_k_candidates: Option<Vec<usize>>,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let d = ClusterParams::default();
        Self {
            min_cluster_size: d.min_cluster_size,
            min_samples: d.min_samples,
            knn_k: d.knn_k,
            outlier_k_candidates: d.outlier_k_candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub alpha_grid: Vec<f64>,
    pub k_folds: usize,
    pub test_fraction: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Self {
            alpha_grid: d.alpha_grid,
            k_folds: d.k_folds,
            test_fraction: d.test_fraction,
            tolerance: d.tolerance,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seeds: Seeds,
    pub autoencoder: AutoencoderSection,
    pub clustering: ClusteringSection,
    pub experiment: ExperimentSection,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::input(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::input(format!("bad config {}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seeds = Seeds { ae: s, clustering: s, split: s, cv: s };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let a = &self.autoencoder;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) || a.batch_size == 0 || a.epochs == 0 {
            return Err(CliError::input("autoencoder: learning_rate, batch_size and epochs must be positive"));
        }
        let c = &self.clustering;
        if c.min_cluster_size < 2 || c.knn_k == 0 || c.min_samples == Some(0) {
            return Err(CliError::input("clustering: need min_cluster_size >= 2, knn_k >= 1, min_samples >= 1"));
        }
        self.experiment_config().validate().map_err(|e| CliError::input(e.to_string()))
    }

    pub fn ae_config(&self) -> AeConfig {
        let a = &self.autoencoder;
        AeConfig { seed: self.seeds.ae, learning_rate: a.learning_rate, batch_size: a.batch_size, epochs: a.epochs }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        let c = &self.clustering;
        ClusterParams {
            min_cluster_size: c.min_cluster_size,
            min_samples: c.min_samples,
            knn_k: c.knn_k,
            outlier_k_candidates: c.outlier_k_candidates.clone(),
            seed: self.seeds.clustering,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            alpha_grid: e.alpha_grid.clone(),
            k_folds: e.k_folds,
            test_fraction: e.test_fraction,
            split_seed: self.seeds.split,
            cv_seed: self.seeds.cv,
            tolerance: e.tolerance,
            max_iter: e.max_iter,
        }
    }
}
