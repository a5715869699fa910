//! The with/without-icon comparison: one stratified split shared by every
//! arm, α tuned by stratified k-fold CV on the training side, final fit on
//! the whole training side, metrics on the held-out side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    assemble_design, default_alpha_grid, evaluate, fit, stratified_split, tune_alpha, ClassifierConfig, ClassifierKind,
    ClassifyError, CvPoint, EvaluationReport,
};
use crate::pe::PefileFeatureVector;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub alpha_grid: Vec<f64>,
    pub k_folds: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub cv_seed: u64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha_grid: default_alpha_grid(),
            k_folds: 4,
            test_fraction: 0.2,
            split_seed: 0,
            cv_seed: 0,
            tolerance: 1e-8,
            max_iter: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(ExperimentError::Config("alpha grid must be non-empty and positive".into()));
        }
        if self.k_folds < 2 {
            return Err(ExperimentError::Config("k_folds must be at least 2".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ExperimentError::Config("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One fitted model kind with or without the icon-cluster block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub model: ClassifierKind,
    pub icon: bool,
    pub alpha: f64,
    /// CV statistics at the chosen α.
    pub cv: CvPoint,
    pub test: EvaluationReport,
    pub cv_curve: Vec<CvPoint>,
    pub n_features: usize,
    pub converged: bool,
}

impl ArmResult {
    pub fn icon_label(&self) -> &'static str {
        if self.icon {
            "yes"
        } else {
            "no"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_train: usize,
    pub n_test: usize,
    pub n_positive: usize,
    pub num_cluster_ids: usize,
    pub arms: Vec<ArmResult>,
}

/// Runs the six fits (3 model kinds × with/without icon clusters).
pub fn run_experiment(
    pefile: &BTreeMap<String, PefileFeatureVector>,
    labels: &BTreeMap<String, i8>,
    assignments: &BTreeMap<String, usize>,
    num_ids: usize,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let base = assemble_design(pefile, labels, assignments, num_ids, false)?;
    let (train_idx, test_idx) = stratified_split(&base.y, config.test_fraction, config.split_seed)?;
    let mut arms = Vec::new();
    for kind in ClassifierKind::ALL {
        for icon in [false, true] {
            let design = if icon { assemble_design(pefile, labels, assignments, num_ids, true)? } else { base.clone() };
            let train = design.subset(&train_idx);
            let test = design.subset(&test_idx);
            let cfg = ClassifierConfig {
                tolerance: config.tolerance,
                max_iter: config.max_iter,
                ..ClassifierConfig::new(kind, 1.0)
            };
            let tuned = tune_alpha(&cfg, &train, &config.alpha_grid, config.k_folds, config.cv_seed)?;
            let model = fit(&train, &ClassifierConfig { alpha: tuned.best_alpha, ..cfg })?;
            let report = evaluate(&model, &test)?;
            arms.push(ArmResult {
                model: kind,
                icon,
                alpha: tuned.best_alpha,
                cv: tuned.curve[tuned.best_index].clone(),
                test: report,
                cv_curve: tuned.curve,
                n_features: design.n_cols(),
                converged: model.converged,
            });
        }
    }
    Ok(ExperimentReport {
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        n_positive: base.y.iter().filter(|&&v| v > 0).count(),
        num_cluster_ids: num_ids,
        arms,
    })
}
