//! Icon clustering: standardize, HDBSCAN for dense clusters, k-means over
//! the HDBSCAN outliers, and KNN assignment of new vectors.

pub mod hdbscan;
pub mod kmeans;
pub mod scaler;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use hdbscan::{hdbscan_fit, CondensedTree, HdbscanResult, MstEdge};
pub use kmeans::{
    default_outlier_candidates, kmeans_fit, kmeans_fit_with, nearest_centroid, select_outlier_k, silhouette,
    KMeansOptions, KMeansResult,
};
pub use scaler::{standardize_fit, Scaler};

pub const MODEL_FORMAT: &str = "icoclust-cluster-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("k = {k} is out of range for {n} rows")]
    KOutOfRange { k: usize, n: usize },
    #[error("silhouette needs between 2 and n-1 clusters, got {0}")]
    DegenerateLabels(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("vector has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid cluster model: {0}")]
    InvalidModel(String),
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Borrowed row-major view.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "data length must be a multiple of dim");
        Self { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j)).sqrt()
    }
}

/// Keyed feature rows, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub keys: Vec<String>,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(keys: Vec<String>, n_cols: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        if n_cols == 0 || data.len() != keys.len() * n_cols {
            return Err(ClusterError::DimensionMismatch { expected: keys.len() * n_cols, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::InvalidParams("feature matrix contains non-finite values".into()));
        }
        Ok(Self { keys, n_cols, data })
    }

    pub fn from_rows(keys: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(ClusterError::DimensionMismatch { expected: n_cols, got: bad.len() });
        }
        Self::new(keys, n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn points(&self) -> Points<'_> {
        Points::new(&self.data, self.n_cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points().row(i)
    }

    /// SHA-256 over keys and the little-endian bytes of every value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for k in &self.keys {
            h.update(k.as_bytes());
            h.update([0]);
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    pub knn_k: usize,
    /// Defaults to [`default_outlier_candidates`].
    pub outlier_k_candidates: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { min_cluster_size: 15, min_samples: None, knn_k: 5, outlier_k_candidates: None, seed: 0 }
    }
}

impl ClusterParams {
    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub cluster_id: usize,
    pub outlier: bool,
}

/// Everything needed to reproduce training assignments and place new vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub format: String,
    pub version: u32,
    pub params: ClusterParams,
    pub corpus_sha256: String,
    pub scaler: Scaler,
    /// Standardized training rows.
    pub reference: FeatureMatrix,
    pub hdbscan_labels: Vec<i64>,
    pub num_dense_clusters: usize,
    /// Row-major `num_outlier_clusters × dim`, in standardized space.
    pub outlier_centroids: Vec<f64>,
    pub num_outlier_clusters: usize,
    pub outlier_k_scores: Vec<(usize, f64)>,
    pub assignments: Vec<Assignment>,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.reference.n_cols
    }

    pub fn num_ids(&self) -> usize {
        self.num_dense_clusters + self.num_outlier_clusters
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ClusterError> {
        let m: ClusterModel = serde_json::from_str(s).map_err(|e| ClusterError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), ClusterError> {
        let bad = |msg: &str| Err(ClusterError::InvalidModel(msg.to_string()));
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return bad("unknown format or version");
        }
        let (n, d) = (self.reference.n_rows(), self.dim());
        if self.reference.data.len() != n * d || self.scaler.mean.len() != d || self.scaler.std.len() != d {
            return bad("dimension mismatch");
        }
        if self.hdbscan_labels.len() != n || self.assignments.len() != n {
            return bad("label count mismatch");
        }
        if self.outlier_centroids.len() != self.num_outlier_clusters * d {
            return bad("centroid shape mismatch");
        }
        if self.hdbscan_labels.iter().any(|&l| l < -1 || l >= self.num_dense_clusters as i64) {
            return bad("label out of range");
        }
        if self.params.knn_k == 0 {
            return bad("knn_k must be positive");
        }
        Ok(())
    }

    /// Places a raw (unstandardized) vector: KNN vote over the training rows,
    /// and a noise vote goes to the nearest outlier centroid.
    pub fn assign(&self, x: &[f64]) -> Result<Assignment, ClusterError> {
        if x.len() != self.dim() {
            return Err(ClusterError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let z = self.scaler.transform_row(x);
        let label = knn_vote(self.reference.points(), &self.hdbscan_labels, &z, self.params.knn_k);
        if label >= 0 {
            return Ok(Assignment { cluster_id: label as usize, outlier: false });
        }
        if self.num_outlier_clusters == 0 {
            return Err(ClusterError::InvalidModel("noise vote but no outlier centroids".into()));
        }
        let (j, _) = nearest_centroid(&z, &self.outlier_centroids, self.dim());
        Ok(Assignment { cluster_id: self.num_dense_clusters + j, outlier: true })
    }
}

/// Majority label among the `k` nearest reference rows (ties in distance go
/// to the lower row index). A tie in votes goes to the tied label whose
/// nearest member ranks first.
pub fn knn_vote(reference: Points<'_>, labels: &[i64], z: &[f64], k: usize) -> i64 {
    let mut order: Vec<(f64, usize)> = (0..reference.len()).map(|i| (sq_dist(reference.row(i), z), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &order[..k.min(order.len())];
    let mut votes: Vec<(i64, usize, usize)> = Vec::new(); // (label, count, first rank)
    for (rank, &(_, i)) in nearest.iter().enumerate() {
        match votes.iter_mut().find(|v| v.0 == labels[i]) {
            Some(v) => v.1 += 1,
            None => votes.push((labels[i], 1, rank)),
        }
    }
    votes.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2))).map(|v| v.0).expect("k >= 1 and non-empty reference")
}

/// Fits the full clustering model on `features`.
pub fn build_cluster_model(features: &FeatureMatrix, params: &ClusterParams) -> Result<ClusterModel, ClusterError> {
    if params.knn_k == 0 {
        return Err(ClusterError::InvalidParams("knn_k must be positive".into()));
    }
    let n = features.n_rows();
    if n < params.min_cluster_size.max(2) {
        return Err(ClusterError::TooFewRows { need: params.min_cluster_size.max(2), got: n });
    }
    let (scaler, z) = standardize_fit(features.points())?;
    let zp = Points::new(&z, features.n_cols);
    let hdb = hdbscan_fit(zp, params.min_cluster_size, params.effective_min_samples())?;

    let outliers: Vec<usize> = (0..n).filter(|&i| hdb.labels[i] < 0).collect();
    let (centroids, k, scores, outlier_labels) = if outliers.is_empty() {
        (Vec::new(), 0, Vec::new(), Vec::new())
    } else {
        let sub: Vec<f64> = outliers.iter().flat_map(|&i| zp.row(i).iter().copied()).collect();
        let sp = Points::new(&sub, features.n_cols);
        let candidates =
            params.outlier_k_candidates.clone().unwrap_or_else(|| default_outlier_candidates(outliers.len()));
        let (k, scores) = select_outlier_k(sp, &candidates, params.seed)?;
        let fit = kmeans_fit(sp, k, params.seed)?;
        (fit.centroids, k, scores, fit.labels)
    };

    let c = hdb.num_clusters;
    let mut next_outlier = outlier_labels.iter();
    let assignments = hdb
        .labels
        .iter()
        .map(|&l| {
            if l >= 0 {
                Assignment { cluster_id: l as usize, outlier: false }
            } else {
                Assignment { cluster_id: c + next_outlier.next().expect("one label per outlier"), outlier: true }
            }
        })
        .collect();

    Ok(ClusterModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        params: params.clone(),
        corpus_sha256: features.content_hash(),
        scaler,
        reference: FeatureMatrix { keys: features.keys.clone(), n_cols: features.n_cols, data: z },
        hdbscan_labels: hdb.labels,
        num_dense_clusters: c,
        outlier_centroids: centroids,
        num_outlier_clusters: k,
        outlier_k_scores: scores,
        assignments,
    })
}
