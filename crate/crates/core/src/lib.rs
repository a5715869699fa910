//! Core algorithms for icon-assisted malware detection.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`pe`] parses PE files, computes the nine section features
//!    (entropy, `Misc_VirtualSize`, `SizeOfRawData` of `.text`, `.data`,
//!    `.rsrc`) and decodes embedded icons.
//! 2. [`raster`], [`mc`], [`hog`] and [`autoencoder`] turn an icon into a
//!    1114-dimensional feature vector (26 + 576 + 512), see [`features`].
//! 3. [`cluster`] groups icons with HDBSCAN, re-clusters HDBSCAN's outliers
//!    with k-means and assigns new icons through a KNN vote.
//! 4. [`classify`] fits L1/L2 logistic regression and a linear SVM on the
//!    PE features with and without a one-hot icon-cluster block, and
//!    [`experiment`] runs the full comparison.

pub mod autoencoder;
pub mod classify;
pub mod cluster;
pub mod experiment;
pub mod features;
pub mod fixtures;
pub mod hog;
pub mod mc;
pub mod pe;
pub mod raster;
pub mod rng;
pub mod synth;

pub use autoencoder::{AeConfig, AeModel, TrainingTrace};
pub use classify::{ClassifierConfig, ClassifierKind, ClassifierModel, DesignMatrix, EvaluationReport};
pub use cluster::{ClusterModel, ClusterParams, FeatureMatrix};
pub use features::{IconFeatureVector, FEATURE_DIM};
pub use pe::{IconRaster, PeSummary, PefileFeatureVector, SectionRecord};
pub use raster::{GrayImage, RgbImage};

/// Lowercase hex SHA-256 of `bytes`; the key that joins every pipeline stage.
pub fn content_key(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
