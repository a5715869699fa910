//! One function per subcommand. Each reads its inputs from files, writes
//! its outputs to files and returns a one-line summary for stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use icoclust_core::autoencoder::ae_init;
use icoclust_core::cluster::{build_cluster_model, Assignment, ClusterError};
use icoclust_core::experiment::{run_experiment, ExperimentError};
use icoclust_core::features::{ae_input, feature_column_names, icon_features};
use icoclust_core::fixtures::encode_png;
use icoclust_core::pe::{
    decode_ico_file, decode_icon_image, extract_icons, parse_pe, pefile_features, select_primary_icon,
};
use icoclust_core::raster::DEFAULT_BACKGROUND;
use icoclust_core::synth::synth_corpus;
use icoclust_core::{content_key, AeModel, ClusterModel, IconRaster, PefileFeatureVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::io::{self, fmt_f64};
use crate::CliError;

#[derive(Debug, Serialize)]
struct FileNote {
    file: String,
    sha256: String,
    reason: String,
}

#[derive(Debug, Serialize)]
struct ExtractManifest {
    files_seen: usize,
    pe_rows: usize,
    icons_stored: usize,
    failures: Vec<FileNote>,
    icon_notes: Vec<FileNote>,
    duplicates: Vec<FileNote>,
}

enum Extracted {
    Pe { features: PefileFeatureVector, icon: Option<IconRaster>, notes: Vec<String> },
    Ico { icon: Option<IconRaster>, notes: Vec<String> },
    Failed(String),
}

const ICO_MAGIC: [u8; 4] = [0, 0, 1, 0];

fn extract_one(bytes: &[u8]) -> Extracted {
    if bytes.starts_with(b"MZ") {
        let pe = match parse_pe(bytes) {
            Ok(pe) => pe,
            Err(e) => return Extracted::Failed(e.to_string()),
        };
        let found = extract_icons(&pe);
        let mut notes = found.failure_reasons.clone();
        let icon = select_primary_icon(&found.icons).ok().cloned();
        if icon.is_none() && notes.is_empty() {
            notes.push("no icon resource".into());
        }
        Extracted::Pe { features: pefile_features(&pe), icon, notes }
    } else if bytes.starts_with(&ICO_MAGIC) {
        match decode_ico_file(bytes) {
            Ok(entries) => {
                let mut notes = Vec::new();
                let mut icons = Vec::new();
                for entry in entries {
                    match entry {
                        Ok(icon) => icons.push(icon),
                        Err(e) => notes.push(e.to_string()),
                    }
                }
                let icon = select_primary_icon(&icons).ok().cloned();
                if icon.is_none() {
                    return Extracted::Failed(format!("no decodable icon entry ({})", notes.join("; ")));
                }
                Extracted::Ico { icon, notes }
            }
            Err(e) => Extracted::Failed(e.to_string()),
        }
    } else {
        Extracted::Failed("neither a PE (MZ) nor an ICO file".into())
    }
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::input(e.to_string()))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn extract(input: &Path, out: &Path) -> Result<String, CliError> {
    let files = list_files(input)?;
    if files.is_empty() {
        return Err(CliError::input(format!("no files in {}", input.display())));
    }
    let results: Vec<(String, String, Extracted)> = files
        .par_iter()
        .map(|path| match fs::read(path) {
            Ok(bytes) => (file_name(path), content_key(&bytes), extract_one(&bytes)),
            Err(e) => (file_name(path), String::new(), Extracted::Failed(format!("unreadable: {e}"))),
        })
        .collect();

    let mut manifest = ExtractManifest {
        files_seen: files.len(),
        pe_rows: 0,
        icons_stored: 0,
        failures: vec![],
        icon_notes: vec![],
        duplicates: vec![],
    };
    let mut pefile = BTreeMap::new();
    let mut icons: BTreeMap<String, IconRaster> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let note = |file: &str, key: &str, reason: String| FileNote { file: file.into(), sha256: key.into(), reason };
    for (file, key, result) in results {
        if let Extracted::Failed(reason) = result {
            manifest.failures.push(note(&file, &key, reason));
            continue;
        }
        if !seen.insert(key.clone()) {
            manifest.duplicates.push(note(&file, &key, "same content as an earlier file".into()));
            continue;
        }
        let (icon, notes) = match result {
            Extracted::Pe { features, icon, notes } => {
                pefile.insert(key.clone(), features);
                (icon, notes)
            }
            Extracted::Ico { icon, notes } => (icon, notes),
            Extracted::Failed(_) => unreachable!(),
        };
        manifest.icon_notes.extend(notes.into_iter().map(|r| note(&file, &key, r)));
        if let Some(icon) = icon {
            icons.insert(key, icon);
        }
    }
    manifest.pe_rows = pefile.len();
    manifest.icons_stored = icons.len();

    io::create_dir(out)?;
    io::write_pefile_csv(&out.join(io::PEFILE_CSV), &pefile)?;
    let icon_dir = out.join(io::ICON_DIR);
    io::create_dir(&icon_dir)?;
    icons
        .par_iter()
        .map(|(key, icon)| io::write_bytes(&icon_dir.join(format!("{key}.png")), &encode_png(icon)))
        .collect::<Result<Vec<()>, CliError>>()?;
    io::write_json(&out.join(io::MANIFEST), &manifest)?;
    if seen.is_empty() {
        return Err(CliError::input(format!("none of the {} files could be processed", files.len())));
    }
    Ok(format!(
        "extract: {} files, {} PE rows, {} icons, {} failures",
        files.len(),
        manifest.pe_rows,
        manifest.icons_stored,
        manifest.failures.len()
    ))
}

/// `(key, file bytes, decoded icon)`
type StoreEntry = (String, Vec<u8>, IconRaster);
/// `(key, reason)`
type Skip = (String, String);

/// Decoded icon store entries plus the entries that failed to decode.
fn load_icon_store(dir: &Path) -> Result<(Vec<StoreEntry>, Vec<Skip>), CliError> {
    let listed = io::list_icon_store(dir)?;
    let loaded: Vec<Result<StoreEntry, Skip>> = listed
        .par_iter()
        .map(|(key, path)| {
            let bytes = fs::read(path).map_err(|e| (key.clone(), e.to_string()))?;
            let icon = decode_icon_image(&bytes).map_err(|e| (key.clone(), e.to_string()))?;
            Ok((key.clone(), bytes, icon))
        })
        .collect();
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for r in loaded {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => bad.push(e),
        }
    }
    Ok((ok, bad))
}

/// Default trace location: `<model>.trace.csv` next to the model.
pub fn default_trace_path(model: &Path) -> PathBuf {
    let mut name = model.file_stem().unwrap_or_default().to_os_string();
    name.push(".trace.csv");
    model.with_file_name(name)
}

pub fn train_ae(icons: &Path, out: &Path, trace: Option<&Path>, cfg: &PipelineConfig) -> Result<String, CliError> {
    let (store, bad) = load_icon_store(icons)?;
    for (key, reason) in &bad {
        eprintln!("train-ae: skipping {key}: {reason}");
    }
    if store.is_empty() {
        return Err(CliError::input(format!("icon store {} has no usable icons", icons.display())));
    }
    let mut corpus = Vec::new();
    for (key, bytes, _) in &store {
        corpus.extend_from_slice(key.as_bytes());
        corpus.extend_from_slice(&content_key(bytes).into_bytes());
    }
    let dataset: Vec<Vec<f64>> = store.par_iter().map(|(_, _, icon)| ae_input(icon, DEFAULT_BACKGROUND)).collect();
    let ae_cfg = cfg.ae_config();
    let (mut model, history) = icoclust_core::autoencoder::ae_train(&ae_init(&ae_cfg), &dataset, &ae_cfg)
        .map_err(|e| CliError::internal(e.to_string()))?;
    model.corpus_sha256 = Some(content_key(&corpus));
    io::write_bytes(out, model.to_json().as_bytes())?;
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| default_trace_path(out));
    let rows = history.epoch_mse.iter().enumerate().map(|(i, m)| vec![i.to_string(), fmt_f64(*m)]);
    io::write_csv(&trace_path, &["epoch", "mse"], rows)?;
    Ok(format!(
        "train-ae: {} icons, {} epochs, final mse {}",
        dataset.len(),
        history.epoch_mse.len(),
        history.epoch_mse.last().copied().unwrap_or(f64::NAN)
    ))
}

fn load_ae(path: &Path) -> Result<AeModel, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read model {}: {e}", path.display())))?;
    AeModel::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Sidecar listing skipped icons: `<out>.manifest.json`.
pub fn featurize_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct FeaturizeManifest {
    rows: usize,
    skipped: Vec<Skipped>,
}

#[derive(Serialize)]
struct Skipped {
    key: String,
    reason: String,
}

pub fn featurize(icons: &Path, model: &Path, out: &Path) -> Result<String, CliError> {
    let ae = load_ae(model)?;
    let (store, mut bad) = load_icon_store(icons)?;
    let computed: Vec<Result<(String, Vec<f64>), Skip>> = store
        .par_iter()
        .map(|(key, _, icon)| {
            icon_features(icon, &ae, DEFAULT_BACKGROUND)
                .map(|v| (key.clone(), v.0))
                .map_err(|e| (key.clone(), e.to_string()))
        })
        .collect();
    let mut rows = Vec::new();
    for r in computed {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => bad.push(e),
        }
    }
    bad.sort();
    io::write_feature_csv(out, &feature_column_names(), &rows)?;
    let manifest = FeaturizeManifest {
        rows: rows.len(),
        skipped: bad.into_iter().map(|(key, reason)| Skipped { key, reason }).collect(),
    };
    io::write_json(&featurize_manifest_path(out), &manifest)?;
    Ok(format!("featurize: {} rows, {} skipped", manifest.rows, manifest.skipped.len()))
}

fn cluster_error(e: ClusterError) -> CliError {
    match e {
        ClusterError::TooFewRows { .. }
        | ClusterError::InvalidParams(_)
        | ClusterError::KOutOfRange { .. }
        | ClusterError::DimensionMismatch { .. }
        | ClusterError::InvalidModel(_) => CliError::input(e.to_string()),
        ClusterError::DegenerateLabels(_) => CliError::internal(e.to_string()),
    }
}

pub const CLUSTER_MODEL: &str = "cluster_model.json";
pub const ASSIGNMENTS: &str = "assignments.csv";

pub fn cluster(features: &Path, out: &Path, cfg: &PipelineConfig) -> Result<String, CliError> {
    let matrix = io::read_feature_csv(features)?;
    let model = build_cluster_model(&matrix, &cfg.cluster_params()).map_err(cluster_error)?;
    io::create_dir(out)?;
    io::write_bytes(&out.join(CLUSTER_MODEL), model.to_json().as_bytes())?;
    let rows: Vec<(String, Assignment)> = matrix.keys.iter().cloned().zip(model.assignments.iter().copied()).collect();
    io::write_assignments(&out.join(ASSIGNMENTS), &rows)?;
    Ok(format!(
        "cluster: {} rows, {} dense clusters, {} outlier clusters",
        matrix.n_rows(),
        model.num_dense_clusters,
        model.num_outlier_clusters
    ))
}

pub fn assign(model: &Path, features: &Path, out: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(model)
        .map_err(|e| CliError::input(format!("cannot read model {}: {e}", model.display())))?;
    let model = ClusterModel::from_json(&text).map_err(cluster_error)?;
    let matrix = io::read_feature_csv(features)?;
    let assigned: Vec<Assignment> = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| model.assign(matrix.row(i)))
        .collect::<Result<_, _>>()
        .map_err(cluster_error)?;
    let rows: Vec<(String, Assignment)> = matrix.keys.iter().cloned().zip(assigned).collect();
    io::write_assignments(out, &rows)?;
    Ok(format!("assign: {} rows", rows.len()))
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "model",
    "icon",
    "alpha",
    "cv_accuracy",
    "cv_accuracy_std",
    "cv_tpr",
    "cv_tpr_std",
    "cv_tnr",
    "cv_tnr_std",
    "test_accuracy",
    "test_tpr",
    "test_tnr",
    "test_auc",
];

pub struct ExperimentInputs<'a> {
    pub pefile: &'a Path,
    pub assignments: &'a Path,
    pub labels: &'a Path,
    pub cluster_model: Option<&'a Path>,
}

pub fn experiment(inputs: &ExperimentInputs<'_>, out: &Path, cfg: &PipelineConfig) -> Result<String, CliError> {
    let pefile = io::read_pefile_csv(inputs.pefile)?;
    let assignments = io::read_assignments(inputs.assignments)?;
    let labels = io::read_labels(inputs.labels)?;
    if labels.is_empty() {
        return Err(CliError::input("labels file has no rows"));
    }
    let missing: Vec<&String> = labels.keys().filter(|k| !pefile.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(CliError::input(format!(
            "{} labeled keys have no PE feature row (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    let max_id = assignments.values().map(|a| a.cluster_id + 1).max().unwrap_or(0);
    let num_ids = match inputs.cluster_model {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            let n = ClusterModel::from_json(&text).map_err(cluster_error)?.num_ids();
            if max_id > n {
                return Err(CliError::input(format!("assignment id {} outside the model's {n} ids", max_id - 1)));
            }
            n
        }
        None => max_id,
    };
    let ids: BTreeMap<String, usize> = assignments.iter().map(|(k, a)| (k.clone(), a.cluster_id)).collect();
    let report = run_experiment(&pefile, &labels, &ids, num_ids, &cfg.experiment_config()).map_err(|e| match e {
        ExperimentError::Config(_) => CliError::input(e.to_string()),
        ExperimentError::Classify(ref inner) => match inner {
            icoclust_core::classify::ClassifyError::NonFinite => CliError::internal(e.to_string()),
            _ => CliError::input(e.to_string()),
        },
    })?;

    io::create_dir(out)?;
    let rows = report.arms.iter().map(|arm| {
        let mut row = vec![arm.model.name().to_string(), arm.icon_label().to_string()];
        let cv = &arm.cv;
        let t = &arm.test;
        row.extend(
            [
                arm.alpha,
                cv.accuracy,
                cv.accuracy_std,
                cv.tpr,
                cv.tpr_std,
                cv.tnr,
                cv.tnr_std,
                t.accuracy,
                t.tpr,
                t.tnr,
                t.auc,
            ]
            .map(fmt_f64),
        );
        row
    });
    io::write_csv(&out.join("report.csv"), &REPORT_COLUMNS, rows)?;
    io::write_json(&out.join("report.json"), &report)?;
    for arm in &report.arms {
        let tag = format!("{}_{}", arm.model.name(), arm.icon_label());
        let roc = arm.test.roc.iter().map(|(f, t)| vec![fmt_f64(*f), fmt_f64(*t)]);
        io::write_csv(&out.join(format!("roc_{tag}.csv")), &["fpr", "tpr"], roc)?;
        let curve = arm
            .cv_curve
            .iter()
            .map(|p| [p.alpha, p.accuracy, p.accuracy_std, p.tpr, p.tpr_std, p.tnr, p.tnr_std].map(fmt_f64).to_vec());
        io::write_csv(
            &out.join(format!("cv_{tag}.csv")),
            &["alpha", "accuracy", "accuracy_std", "tpr", "tpr_std", "tnr", "tnr_std"],
            curve,
        )?;
    }
    let summary: Vec<String> = report
        .arms
        .iter()
        .map(|a| format!("{}/{} acc {:.3} auc {:.3}", a.model.name(), a.icon_label(), a.test.accuracy, a.test.auc))
        .collect();
    Ok(format!("experiment: {} train, {} test; {}", report.n_train, report.n_test, summary.join(", ")))
}

pub fn synth(n: usize, seed: u64, out: &Path) -> Result<String, CliError> {
    if n == 0 {
        return Err(CliError::input("--count must be positive"));
    }
    let samples = synth_corpus(n, seed);
    let dir = out.join("samples");
    io::create_dir(&dir)?;
    samples
        .par_iter()
        .map(|s| io::write_bytes(&dir.join(&s.file_name), &s.bytes))
        .collect::<Result<Vec<()>, CliError>>()?;
    let mut labels: Vec<(String, i8)> = samples.iter().map(|s| (content_key(&s.bytes), s.label)).collect();
    labels.sort();
    labels.dedup_by(|a, b| a.0 == b.0);
    let rows = labels.iter().map(|(k, y)| vec![k.clone(), y.to_string()]);
    io::write_csv(&out.join("labels.csv"), &["sha256", "label"], rows)?;
    Ok(format!("synth: {} samples in {}", samples.len(), dir.display()))
}
