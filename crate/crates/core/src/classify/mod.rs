//! Design matrices, stratified resampling, linear classifiers, α tuning and
//! test-set evaluation.

mod solvers;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Points, Scaler};
use crate::pe::PefileFeatureVector;
use crate::rng::SeededRng;
use solvers::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("cluster id {id} out of range for {num_ids} ids")]
    OutOfRange { id: usize, num_ids: usize },
    #[error("labelled key {0} has no PE feature row")]
    KeyMismatch(String),
    #[error("only one class present")]
    SingleClass,
    #[error("class {class} has {count} rows, fewer than {k} folds")]
    TooFewPerClass { class: i8, count: usize, k: usize },
    #[error("matrix has {got} columns, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value during fitting")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogregL1,
    LogregL2,
    LinearSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] =
        [ClassifierKind::LogregL1, ClassifierKind::LogregL2, ClassifierKind::LinearSvm];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::LogregL1 => "logreg_l1",
            ClassifierKind::LogregL2 => "logreg_l2",
            ClassifierKind::LinearSvm => "linear_svm",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl ClassifierConfig {
    pub fn new(kind: ClassifierKind, alpha: f64) -> Self {
        Self { kind, alpha, tolerance: 1e-8, max_iter: 10_000 }
    }

    fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ClassifyError::InvalidParam(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_iter == 0 {
            return Err(ClassifyError::InvalidParam("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Rows of features with ±1 labels (+1 = malware). The first `n_continuous`
/// columns are rescaled inside every fit; the rest (one-hot) are used as is.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub keys: Vec<String>,
    pub names: Vec<String>,
    pub data: Vec<f64>,
    pub n_continuous: usize,
    pub y: Vec<i8>,
}

impl DesignMatrix {
    pub fn new(keys: Vec<String>, names: Vec<String>, data: Vec<f64>, n_continuous: usize, y: Vec<i8>) -> Self {
        assert_eq!(keys.len(), y.len());
        assert_eq!(data.len(), y.len() * names.len());
        assert!(n_continuous <= names.len());
        assert!(y.iter().all(|&v| v == 1 || v == -1), "labels must be ±1");
        Self { keys, names, data, n_continuous, y }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols()..(i + 1) * self.n_cols()]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            names: self.names.clone(),
            data: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            n_continuous: self.n_continuous,
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

pub fn one_hot(cluster_id: usize, num_ids: usize) -> Result<Vec<f64>, ClassifyError> {
    if cluster_id >= num_ids {
        return Err(ClassifyError::OutOfRange { id: cluster_id, num_ids });
    }
    let mut v = vec![0.0; num_ids];
    v[cluster_id] = 1.0;
    Ok(v)
}

/// One row per labelled key (sorted by key). Keys without a cluster
/// assignment get an all-zero one-hot block.
pub fn assemble_design(
    pefile: &BTreeMap<String, PefileFeatureVector>,
    labels: &BTreeMap<String, i8>,
    assignments: &BTreeMap<String, usize>,
    num_ids: usize,
    use_icon: bool,
) -> Result<DesignMatrix, ClassifyError> {
    let mut names: Vec<String> = PefileFeatureVector::COLUMNS.iter().map(|s| s.to_string()).collect();
    if use_icon {
        names.extend((0..num_ids).map(|i| format!("icon_cluster_{i}")));
    }
    let mut data = Vec::with_capacity(labels.len() * names.len());
    let mut keys = Vec::with_capacity(labels.len());
    let mut y = Vec::with_capacity(labels.len());
    for (key, &label) in labels {
        let row = pefile.get(key).ok_or_else(|| ClassifyError::KeyMismatch(key.clone()))?;
        data.extend_from_slice(row.as_slice());
        if use_icon {
            match assignments.get(key) {
                Some(&id) => data.extend(one_hot(id, num_ids)?),
                None => data.extend(std::iter::repeat_n(0.0, num_ids)),
            }
        }
        keys.push(key.clone());
        y.push(label);
    }
    Ok(DesignMatrix::new(keys, names, data, PefileFeatureVector::COLUMNS.len(), y))
}

fn class_indices(y: &[i8]) -> Result<[Vec<usize>; 2], ClassifyError> {
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] < 0).collect();
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0).collect();
    if neg.is_empty() || pos.is_empty() {
        return Err(ClassifyError::SingleClass);
    }
    Ok([neg, pos])
}

/// Per-class shuffle; `round(n_class · test_fraction)` of each class go to
/// the test side. Both index lists are returned sorted.
pub fn stratified_split(y: &[i8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), ClassifyError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(ClassifyError::InvalidParam(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let mut rng = SeededRng::new(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut idx in class_indices(y)? {
        rng.shuffle(&mut idx);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-class shuffle, then deal round-robin into `k` folds, continuing the
/// deal position from one class to the next. Folds are returned sorted.
pub fn stratified_kfold(y: &[i8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifyError> {
    if k < 2 {
        return Err(ClassifyError::InvalidParam("k must be at least 2".into()));
    }
    let classes = class_indices(y)?;
    for (idx, class) in classes.iter().zip([-1i8, 1]) {
        if idx.len() < k {
            return Err(ClassifyError::TooFewPerClass { class, count: idx.len(), k });
        }
    }
    let mut rng = SeededRng::new(seed);
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0;
    for mut idx in classes {
        rng.shuffle(&mut idx);
        for i in idx {
            folds[pos % k].push(i);
            pos += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    /// Weights act on scaled continuous columns followed by raw one-hot columns.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
    pub n_continuous: usize,
    /// Training objective at the returned parameters.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ClassifierModel {
    fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = self.scaler.transform_row(&row[..self.n_continuous]);
        out.extend_from_slice(&row[self.n_continuous..]);
        out
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        self.transform(row).iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }
}

fn fit_scaler(x: &DesignMatrix) -> Scaler {
    let block: Vec<f64> = (0..x.n_rows()).flat_map(|i| x.row(i)[..x.n_continuous].iter().copied()).collect();
    if x.n_continuous == 0 {
        return Scaler { mean: Vec::new(), std: Vec::new() };
    }
    Scaler::fit(Points::new(&block, x.n_continuous))
}

/// Fits the configured model; the continuous-column scaler is fit on `x`.
pub fn fit(x: &DesignMatrix, config: &ClassifierConfig) -> Result<ClassifierModel, ClassifyError> {
    config.validate()?;
    class_indices(&x.y)?;
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(ClassifyError::NonFinite);
    }
    let scaler = fit_scaler(x);
    let mut model = ClassifierModel {
        config: config.clone(),
        weights: Vec::new(),
        bias: 0.0,
        scaler,
        n_continuous: x.n_continuous,
        objective: f64::NAN,
        iterations: 0,
        converged: false,
    };
    let scaled: Vec<f64> = (0..x.n_rows()).flat_map(|i| model.transform(x.row(i))).collect();
    let prob = Problem { x: &scaled, y: &x.y, p: x.n_cols() };
    let sol = match config.kind {
        ClassifierKind::LinearSvm => solvers::fit_svm(&prob, config.alpha, config.tolerance, config.max_iter)?,
        kind => solvers::fit_logistic(kind, &prob, config.alpha, config.tolerance, config.max_iter)?,
    };
    model.weights = sol.weights;
    model.bias = sol.bias;
    model.objective = sol.objective;
    model.iterations = sol.iterations;
    model.converged = sol.converged;
    Ok(model)
}

pub fn fit_logreg(x: &DesignMatrix, l1: bool, alpha: f64) -> Result<ClassifierModel, ClassifyError> {
    let kind = if l1 { ClassifierKind::LogregL1 } else { ClassifierKind::LogregL2 };
    fit(x, &ClassifierConfig::new(kind, alpha))
}

pub fn fit_linear_svm(x: &DesignMatrix, alpha: f64) -> Result<ClassifierModel, ClassifyError> {
    fit(x, &ClassifierConfig::new(ClassifierKind::LinearSvm, alpha))
}

/// Training objective of arbitrary parameters, in the model's scaled space.
pub fn training_objective(x: &DesignMatrix, model: &ClassifierModel, weights: &[f64], bias: f64) -> f64 {
    let scaled: Vec<f64> = (0..x.n_rows()).flat_map(|i| model.transform(x.row(i))).collect();
    let prob = Problem { x: &scaled, y: &x.y, p: x.n_cols() };
    match model.config.kind {
        ClassifierKind::LinearSvm => solvers::svm_objective(&prob, model.config.alpha, weights, bias),
        kind => solvers::logistic_objective(kind, &prob, model.config.alpha, weights, bias),
    }
}

pub fn predict_scores(model: &ClassifierModel, x: &DesignMatrix) -> Result<Vec<f64>, ClassifyError> {
    if x.n_cols() != model.weights.len() {
        return Err(ClassifyError::ShapeMismatch { expected: model.weights.len(), got: x.n_cols() });
    }
    Ok((0..x.n_rows()).map(|i| model.score(x.row(i))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one step per distinct score.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC sweep over distinct scores (descending). The AUC is the
/// Mann–Whitney statistic with ties counted ½, computed from integer counts.
pub fn roc_auc(scores: &[f64], y: &[i8]) -> Result<RocCurve, ClassifyError> {
    assert_eq!(scores.len(), y.len());
    let [neg, pos] = class_indices(y)?;
    let (n_pos, n_neg) = (pos.len() as u64, neg.len() as u64);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the number of (pos, neg) pairs ranked correctly, ties counting 1.
    let mut twice_pairs: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] > 0 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        let neg_below = n_neg - fp - gn;
        twice_pairs += u128::from(gp) * u128::from(2 * neg_below + gn);
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = twice_pairs as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64;
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
}

/// Rates for the decision `score > 0 ⇒ +1`.
pub fn rates(scores: &[f64], y: &[i8]) -> (f64, f64, f64) {
    let (mut tp, mut tn, mut np, mut nn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &t) in scores.iter().zip(y) {
        let pred = if s > 0.0 { 1 } else { -1 };
        if t > 0 {
            np += 1;
            tp += usize::from(pred == 1);
        } else {
            nn += 1;
            tn += usize::from(pred == -1);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(tp + tn, np + nn), ratio(tp, np), ratio(tn, nn))
}

pub fn evaluate(model: &ClassifierModel, x: &DesignMatrix) -> Result<EvaluationReport, ClassifyError> {
    let scores = predict_scores(model, x)?;
    let roc = roc_auc(&scores, &x.y)?;
    let (accuracy, tpr, tnr) = rates(&scores, &x.y);
    Ok(EvaluationReport { accuracy, tpr, tnr, auc: roc.auc, roc: roc.points })
}

/// `10^(-5 + i/6)` for `i = 0..=30`: 31 points over `[1e-5, 1]`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=30).map(|i| 10f64.powf(-5.0 + i as f64 / 6.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub alpha: f64,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub tpr: f64,
    pub tpr_std: f64,
    pub tnr: f64,
    pub tnr_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_alpha: f64,
    pub best_index: usize,
    pub curve: Vec<CvPoint>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Stratified k-fold CV over `grid`. Best = highest mean accuracy; ties go
/// to the larger α. Fits run in parallel and are reduced in grid order.
pub fn tune_alpha(
    base: &ClassifierConfig,
    x: &DesignMatrix,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<TuneResult, ClassifyError> {
    if grid.is_empty() {
        return Err(ClassifyError::InvalidParam("empty alpha grid".into()));
    }
    let folds = stratified_kfold(&x.y, k, seed)?;
    let splits: Vec<(DesignMatrix, DesignMatrix)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
            (x.subset(&train), x.subset(&folds[f]))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|a| (0..k).map(move |f| (a, f))).collect();
    let results: Vec<(f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(a, f)| {
            let cfg = ClassifierConfig { alpha: grid[a], ..base.clone() };
            let model = fit(&splits[f].0, &cfg)?;
            let scores = predict_scores(&model, &splits[f].1)?;
            Ok(rates(&scores, &splits[f].1.y))
        })
        .collect::<Result<_, ClassifyError>>()?;

    let mut curve = Vec::with_capacity(grid.len());
    for (a, &alpha) in grid.iter().enumerate() {
        let r = &results[a * k..(a + 1) * k];
        let (accuracy, accuracy_std) = mean_std(&r.iter().map(|v| v.0).collect::<Vec<_>>());
        let (tpr, tpr_std) = mean_std(&r.iter().map(|v| v.1).collect::<Vec<_>>());
        let (tnr, tnr_std) = mean_std(&r.iter().map(|v| v.2).collect::<Vec<_>>());
        curve.push(CvPoint { alpha, accuracy, accuracy_std, tpr, tpr_std, tnr, tnr_std });
    }
    let mut best_index = 0;
    for (i, p) in curve.iter().enumerate() {
        let b = &curve[best_index];
        if p.accuracy > b.accuracy || (p.accuracy == b.accuracy && p.alpha > b.alpha) {
            best_index = i;
        }
    }
    Ok(TuneResult { best_alpha: curve[best_index].alpha, best_index, curve })
}
