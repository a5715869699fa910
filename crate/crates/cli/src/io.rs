//! File formats shared by the subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use icoclust_core::cluster::{Assignment, FeatureMatrix};
use icoclust_core::PefileFeatureVector;
use serde::Serialize;

use crate::CliError;

pub const PEFILE_CSV: &str = "pefile_features.csv";
pub const ICON_DIR: &str = "icons";
pub const MANIFEST: &str = "manifest.json";

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Writes a CSV from a header and string rows.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::internal(e.to_string());
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::internal(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Header plus rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let bad = |e: csv::Error| CliError::input(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(bad)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::input(format!("{}: row {line}: bad number {s:?}", path.display())))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<(), CliError> {
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(CliError::input(format!("{}: expected header {}", path.display(), expected.join(","))));
    }
    Ok(())
}

fn insert_unique<V>(map: &mut BTreeMap<String, V>, path: &Path, key: &str, v: V) -> Result<(), CliError> {
    if map.insert(key.to_string(), v).is_some() {
        return Err(CliError::input(format!("{}: duplicate key {key}", path.display())));
    }
    Ok(())
}

pub fn write_pefile_csv(path: &Path, rows: &BTreeMap<String, PefileFeatureVector>) -> Result<(), CliError> {
    let header: Vec<&str> = std::iter::once("sha256").chain(PefileFeatureVector::COLUMNS).collect();
    let body = rows.iter().map(|(k, v)| std::iter::once(k.clone()).chain(v.0.iter().map(|x| fmt_f64(*x))).collect());
    write_csv(path, &header, body)
}

pub fn read_pefile_csv(path: &Path) -> Result<BTreeMap<String, PefileFeatureVector>, CliError> {
    let (header, rows) = read_csv(path)?;
    let expected: Vec<&str> = std::iter::once("sha256").chain(PefileFeatureVector::COLUMNS).collect();
    expect_header(path, &header, &expected)?;
    let mut out = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let mut v = [0.0; 9];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = parse_f64(path, i + 1, &row[j + 1])?;
        }
        insert_unique(&mut out, path, &row[0], PefileFeatureVector(v))?;
    }
    Ok(out)
}

pub fn write_feature_csv(path: &Path, names: &[String], rows: &[(String, Vec<f64>)]) -> Result<(), CliError> {
    let header: Vec<&str> = std::iter::once("key").chain(names.iter().map(String::as_str)).collect();
    let body = rows.iter().map(|(k, v)| std::iter::once(k.clone()).chain(v.iter().map(|x| fmt_f64(*x))).collect());
    write_csv(path, &header, body)
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix, CliError> {
    let (header, rows) = read_csv(path)?;
    if header.first().map(String::as_str) != Some("key") || header.len() < 2 {
        return Err(CliError::input(format!("{}: expected a key column followed by features", path.display())));
    }
    let n_cols = header.len() - 1;
    let mut keys = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * n_cols);
    for (i, row) in rows.iter().enumerate() {
        keys.push(row[0].clone());
        for s in &row[1..] {
            data.push(parse_f64(path, i + 1, s)?);
        }
    }
    let mut sorted = keys.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::input(format!("{}: duplicate keys", path.display())));
    }
    FeatureMatrix::new(keys, n_cols, data).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub const ASSIGNMENT_HEADER: [&str; 3] = ["key", "cluster_id", "outlier_flag"];

pub fn write_assignments(path: &Path, rows: &[(String, Assignment)]) -> Result<(), CliError> {
    let body = rows.iter().map(|(k, a)| vec![k.clone(), a.cluster_id.to_string(), u8::from(a.outlier).to_string()]);
    write_csv(path, &ASSIGNMENT_HEADER, body)
}

pub fn read_assignments(path: &Path) -> Result<BTreeMap<String, Assignment>, CliError> {
    let (header, rows) = read_csv(path)?;
    expect_header(path, &header, &ASSIGNMENT_HEADER)?;
    let mut out = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let bad = || CliError::input(format!("{}: row {}: bad assignment", path.display(), i + 1));
        let cluster_id = row[1].trim().parse::<usize>().map_err(|_| bad())?;
        let outlier = match row[2].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        insert_unique(&mut out, path, &row[0], Assignment { cluster_id, outlier })?;
    }
    Ok(out)
}

/// Accepts `1`/`0`, `1`/`-1` and `malware`/`benign` (any case).
pub fn parse_label(s: &str) -> Option<i8> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "+1" | "malware" | "malicious" => Some(1),
        "0" | "-1" | "benign" => Some(-1),
        _ => None,
    }
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, i8>, CliError> {
    let (header, rows) = read_csv(path)?;
    expect_header(path, &header, &["sha256", "label"])?;
    let mut out = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let y = parse_label(&row[1])
            .ok_or_else(|| CliError::input(format!("{}: row {}: bad label {:?}", path.display(), i + 1, row[1])))?;
        insert_unique(&mut out, path, &row[0], y)?;
    }
    Ok(out)
}

/// `(key, path)` of every `<key>.png` in an icon store, sorted by key.
pub fn list_icon_store(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot read icon store {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::input(e.to_string()))?.path();
        if path.extension().is_some_and(|x| x == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}
