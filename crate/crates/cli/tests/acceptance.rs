//! Acceptance suite: one PASS/FAIL line per criterion. Every oracle here is
//! written from the definitions, independently of the library code.
//!
//! Run with `cargo test -p icoclust-cli --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use icoclust_core::autoencoder::{ae_gradient_check, ae_init, ae_train};
use icoclust_core::classify::{fit, roc_auc, ClassifierConfig, ClassifierKind, DesignMatrix};
use icoclust_core::cluster::hdbscan::{core_distances, hdbscan_fit, mutual_reachability_mst};
use icoclust_core::cluster::kmeans::{kmeans_fit, select_outlier_k};
use icoclust_core::cluster::{build_cluster_model, ClusterParams, FeatureMatrix, Points};
use icoclust_core::features::{ae_input, icon_features};
use icoclust_core::hog::{hog_features, prepare_for_hog};
use icoclust_core::mc::mc_features;
use icoclust_core::pe::section_entropy;
use icoclust_core::raster::composite_to_rgb;
use icoclust_core::rng::SeededRng;
use icoclust_core::synth::render_template;
use icoclust_core::{AeConfig, GrayImage, IconRaster, RgbImage};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_icon(rng: &mut SeededRng, w: u32, h: u32) -> IconRaster {
    IconRaster::new(w, h, (0..w * h * 4).map(|_| rng.below(256) as u8).collect())
}

fn criterion_1() -> Outcome {
    let mut rng = SeededRng::new(1);
    let model = ae_init(&AeConfig::default());
    for (w, h) in [(3, 3), (16, 16), (32, 32), (48, 20), (256, 256)] {
        let f = icon_features(&random_icon(&mut rng, w, h), &model, 1.0).map_err(|e| e.to_string())?;
        let counts = (f.mc().len(), f.hog().len(), f.ae().len(), f.0.len());
        check(counts == (26, 576, 512, 1114), || format!("{w}x{h}: {counts:?}"))?;
    }
    Ok("MC 26 + HOG 576 + AE 512 = 1114 on 5 icon sizes".into())
}

fn criterion_2() -> Outcome {
    let uniform: Vec<u8> = (0..1024).map(|i| (i % 256) as u8).collect();
    let constant = vec![0u8; 1024];
    let two: Vec<u8> = [vec![0u8; 512], vec![0xFF; 512]].concat();
    let (u, c, t) = (section_entropy(&uniform), section_entropy(&constant), section_entropy(&two));
    check((u - 8.0).abs() <= 1e-9, || format!("uniform {u}"))?;
    check(c == 0.0, || format!("constant {c}"))?;
    check((t - 1.0).abs() <= 1e-9, || format!("two-symbol {t}"))?;
    Ok(format!("uniform {u}, constant {c}, two-symbol {t}"))
}

fn mean_std_loop(v: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    let m = s / v.len() as f64;
    let mut q = 0.0;
    for x in v {
        q += (x - m) * (x - m);
    }
    (m, (q / v.len() as f64).sqrt())
}

fn mc_oracle(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let mut out = Vec::new();
    let mut all = Vec::new();
    let mut per = vec![Vec::new(); 3];
    for (c, plane) in per.iter_mut().enumerate() {
        for y in 0..h {
            for x in 0..w {
                all.push(img.get(c, x, y));
                plane.push(img.get(c, x, y));
            }
        }
    }
    let (m, s) = mean_std_loop(&all);
    out.extend([m, s]);
    for plane in &per {
        let (m, s) = mean_std_loop(plane);
        out.extend([m, s]);
    }
    for gy in 0..3 {
        for gx in 0..3 {
            let mut cell = Vec::new();
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        // floor(g·len/3) <= p < floor((g+1)·len/3)
                        if y >= gy * h / 3 && y < (gy + 1) * h / 3 && x >= gx * w / 3 && x < (gx + 1) * w / 3 {
                            cell.push(img.get(c, x, y));
                        }
                    }
                }
            }
            let (m, s) = mean_std_loop(&cell);
            out.extend([m, s]);
        }
    }
    out
}

fn hog_oracle(img: &GrayImage) -> Vec<f64> {
    let n = 24;
    let px = |x: i64, y: i64| img.data[(y.clamp(0, n - 1) * n + x.clamp(0, n - 1)) as usize];
    let mut hist = vec![0.0; 576];
    for y in 0..n {
        for x in 0..n {
            let gx = px(x + 1, y) - px(x - 1, y);
            let gy = px(x, y + 1) - px(x, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let cell = ((y / 3) * 8 + x / 3) as usize;
            for b in 0..9 {
                let center = 10.0 + 20.0 * b as f64;
                let d = (theta - center).abs();
                let d = d.min(180.0 - d);
                let wgt = (1.0 - d / 20.0).max(0.0);
                hist[cell * 9 + b] += mag * wgt;
            }
        }
    }
    for cell in hist.chunks_mut(9) {
        let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cell.iter_mut() {
            *v = if norm > 1e-12 { *v / norm } else { 0.0 };
        }
    }
    hist
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut rng = SeededRng::new(3);
    let (mut worst_mc, mut worst_hog) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (w, h) = (3 + rng.below(46), 3 + rng.below(46));
        let rgb = composite_to_rgb(&random_icon(&mut rng, w as u32, h as u32), 1.0);
        let mc = mc_features(&rgb).map_err(|e| e.to_string())?;
        worst_mc = worst_mc.max(max_abs_diff(mc.as_slice(), &mc_oracle(&rgb)));
        let gray = prepare_for_hog(&rgb);
        let hog = hog_features(&gray).map_err(|e| e.to_string())?;
        worst_hog = worst_hog.max(max_abs_diff(hog.as_slice(), &hog_oracle(&gray)));
    }
    check(worst_mc <= 1e-12, || format!("MC max diff {worst_mc:e}"))?;
    check(worst_hog <= 1e-9, || format!("HOG max diff {worst_hog:e}"))?;
    Ok(format!("100 images, MC max diff {worst_mc:e}, HOG max diff {worst_hog:e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = SeededRng::new(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let base: Vec<f64> = (0..576).map(|_| rng.uniform()).collect();
        let offset = rng.uniform_range(-0.5, 0.5);
        let a = hog_features(&GrayImage::new(24, 24, base.clone())).map_err(|e| e.to_string())?;
        let b = hog_features(&GrayImage::new(24, 24, base.iter().map(|v| v + offset).collect()))
            .map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(a.as_slice(), b.as_slice()));
    }
    check(worst <= 1e-9, || format!("max change {worst:e}"))?;
    Ok(format!("50 images with constant offsets, max HOG change {worst:e}"))
}

/// Measured final MSE for this exact setup: 0.00928.
const OVERFIT_THRESHOLD: f64 = 0.01;

fn criterion_5() -> Outcome {
    let err = ae_gradient_check(0);
    check(err < 1e-5, || format!("gradient check error {err:e}"))?;
    let mut rng = SeededRng::new(7);
    let data: Vec<Vec<f64>> = (0..50).map(|i| ae_input(&render_template(i % 5, 32, &mut rng), 1.0)).collect();
    let cfg = AeConfig { seed: 0, learning_rate: 1e-3, batch_size: 16, epochs: 200 };
    let (_, trace) = ae_train(&ae_init(&cfg), &data, &cfg).map_err(|e| e.to_string())?;
    let last = *trace.epoch_mse.last().unwrap();
    check(last < OVERFIT_THRESHOLD, || format!("overfit MSE {last}"))?;
    Ok(format!("gradient check {err:e}; 50-icon overfit final MSE {last:.5} < {OVERFIT_THRESHOLD}"))
}

fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut ra: BTreeMap<i64, f64> = BTreeMap::new();
    let mut rb: BTreeMap<i64, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(a.len() as f64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum spanning tree weights by enumerating every labeled tree (Prüfer codes).
fn exhaustive_mst_weights(w: &[Vec<f64>]) -> Vec<f64> {
    let n = w.len();
    if n == 2 {
        return vec![w[0][1]];
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = n.pow((n - 2) as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            edges.push(w[leaf][s]);
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        edges.push(w[rest[0]][rest[1]]);
        let sum: f64 = edges.iter().sum();
        if best.as_ref().is_none_or(|b| sum < b.0) {
            best = Some((sum, edges));
        }
    }
    let mut edges = best.unwrap().1;
    edges.sort_by(f64::total_cmp);
    edges
}

fn criterion_6() -> Outcome {
    let mut rng = SeededRng::new(6);
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for (label, center) in [(0i64, [0.0, 0.0]), (1, [12.0, 12.0])] {
        for _ in 0..50 {
            data.extend([center[0] + rng.normal(), center[1] + rng.normal()]);
            truth.push(label);
        }
    }
    for _ in 0..20 {
        data.extend([rng.uniform_range(-30.0, 42.0), rng.uniform_range(-30.0, 42.0)]);
        truth.push(-1);
    }
    let fit = hdbscan_fit(Points::new(&data, 2), 10, 10).map_err(|e| e.to_string())?;
    check(fit.num_clusters == 2, || format!("{} dense clusters", fit.num_clusters))?;
    let blob: Vec<usize> = (0..100).collect();
    let ari = adjusted_rand_index(
        &blob.iter().map(|&i| truth[i]).collect::<Vec<_>>(),
        &blob.iter().map(|&i| fit.labels[i]).collect::<Vec<_>>(),
    );
    check(ari >= 0.95, || format!("ARI {ari}"))?;

    for n in 2..=8 {
        for trial in 0..3 {
            let mut r = SeededRng::fork(60 + n as u64, trial);
            let dim = 3;
            let pts: Vec<f64> = (0..n * dim).map(|_| r.uniform_range(-5.0, 5.0)).collect();
            let row = |i: usize| &pts[i * dim..(i + 1) * dim];
            let min_samples = 1 + r.below(n.min(3));
            let core: Vec<f64> = (0..n)
                .map(|i| {
                    let mut d: Vec<f64> = (0..n).map(|j| euclid(row(i), row(j))).collect();
                    d.sort_by(f64::total_cmp);
                    d[min_samples - 1]
                })
                .collect();
            let w: Vec<Vec<f64>> =
                (0..n).map(|i| (0..n).map(|j| core[i].max(core[j]).max(euclid(row(i), row(j)))).collect()).collect();
            let expected = exhaustive_mst_weights(&w);
            let points = Points::new(&pts, dim);
            let mut got: Vec<f64> = mutual_reachability_mst(points, &core_distances(points, min_samples))
                .iter()
                .map(|e| e.weight)
                .collect();
            got.sort_by(f64::total_cmp);
            check(got == expected, || format!("n={n}: MST weights {got:?} vs oracle {expected:?}"))?;
            let (a, b): (f64, f64) = (got.iter().sum(), expected.iter().sum());
            check(a == b, || format!("n={n}: total {a} vs {b}"))?;
        }
    }
    Ok(format!("2 dense clusters, blob ARI {ari:.4}; MST equals exhaustive oracle for n = 2..8"))
}

fn criterion_7() -> Outcome {
    let mut rng = SeededRng::new(7);
    let mut data = Vec::new();
    for c in [[0.0, 0.0], [9.0, 0.0], [0.0, 9.0]] {
        for _ in 0..30 {
            data.extend([c[0] + rng.normal(), c[1] + rng.normal()]);
        }
    }
    let points = Points::new(&data, 2);
    for k in 1..=6 {
        let r = kmeans_fit(points, k, 3).map_err(|e| e.to_string())?;
        check(r.inertia_history.windows(2).all(|w| w[1] <= w[0]), || {
            format!("k={k}: history {:?}", r.inertia_history)
        })?;
    }
    let small = &data[..20];
    let r = kmeans_fit(Points::new(small, 2), 10, 0).map_err(|e| e.to_string())?;
    check(r.inertia == 0.0, || format!("k=n inertia {}", r.inertia))?;

    let rect = [0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0];
    let mut best = f64::INFINITY;
    for mask in 1u32..15 {
        let mut sse = 0.0;
        for side in [true, false] {
            let members: Vec<usize> = (0..4).filter(|i| (mask >> i & 1 == 1) == side).collect();
            let cx = members.iter().map(|&i| rect[2 * i]).sum::<f64>() / members.len() as f64;
            let cy = members.iter().map(|&i| rect[2 * i + 1]).sum::<f64>() / members.len() as f64;
            sse += members.iter().map(|&i| (rect[2 * i] - cx).powi(2) + (rect[2 * i + 1] - cy).powi(2)).sum::<f64>();
        }
        best = best.min(sse);
    }
    let r = kmeans_fit(Points::new(&rect, 2), 2, 0).map_err(|e| e.to_string())?;
    check((r.inertia - best).abs() < 1e-12, || format!("rectangle inertia {} vs optimum {best}", r.inertia))?;

    let (k, _) = select_outlier_k(points, &(2..=8).collect::<Vec<_>>(), 0).map_err(|e| e.to_string())?;
    check(k == 3, || format!("select_outlier_k picked {k}"))?;
    Ok(format!("histories non-increasing; k=n inertia 0; rectangle optimum {best}; selected k = {k}"))
}

fn criterion_8() -> Outcome {
    let mut rng = SeededRng::new(8);
    let dim = 6;
    let mut rows = Vec::new();
    for c in 0..3 {
        for _ in 0..40 {
            rows.push((0..dim).map(|j| rng.normal() * 0.5 + if j == c { 10.0 } else { 0.0 }).collect::<Vec<f64>>());
        }
    }
    for _ in 0..20 {
        rows.push((0..dim).map(|_| rng.uniform_range(-15.0, 25.0)).collect());
    }
    let keys: Vec<String> = (0..rows.len()).map(|i| format!("{i:04}")).collect();
    let matrix = FeatureMatrix::from_rows(keys, &rows).map_err(|e| e.to_string())?;
    let params = ClusterParams { min_cluster_size: 10, knn_k: 1, ..ClusterParams::default() };
    let model = build_cluster_model(&matrix, &params).map_err(|e| e.to_string())?;
    check(model.num_outlier_clusters > 0, || "fixture produced no outlier clusters".into())?;
    let total = model.num_dense_clusters + model.num_outlier_clusters;
    let mut agree = 0;
    for (i, row) in rows.iter().enumerate() {
        let a = model.assign(row).map_err(|e| e.to_string())?;
        check(a.cluster_id < total, || format!("row {i}: id {} outside [0, {total})", a.cluster_id))?;
        check(a.outlier == (a.cluster_id >= model.num_dense_clusters), || format!("row {i}: flag inconsistent"))?;
        if a == model.assignments[i] {
            agree += 1;
        }
    }
    check(agree == rows.len(), || format!("{agree}/{} rows reproduce their stored ids", rows.len()))?;
    Ok(format!(
        "{agree}/{} rows reproduced with knn_k = 1; C = {}, K = {}",
        rows.len(),
        model.num_dense_clusters,
        model.num_outlier_clusters
    ))
}

fn design(rows: &[Vec<f64>], y: &[i8]) -> DesignMatrix {
    let p = rows[0].len();
    DesignMatrix::new(
        (0..rows.len()).map(|i| format!("{i:04}")).collect(),
        (0..p).map(|j| format!("x{j}")).collect(),
        rows.concat(),
        0,
        y.to_vec(),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = SeededRng::new(9);
    for set in 0..50 {
        let n = 5 + rng.below(60);
        let mut y: Vec<i8> = (0..n).map(|_| if rng.bernoulli(0.5) { 1 } else { -1 }).collect();
        y[0] = 1;
        y[1] = -1;
        // Coarse rounding makes ties common.
        let scores: Vec<f64> = (0..n).map(|_| (rng.normal() * 4.0).round() / 4.0).collect();
        let (mut pairs, mut wins) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if y[i] > 0 && y[j] < 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let auc = roc_auc(&scores, &y).map_err(|e| e.to_string())?.auc;
        check(auc == wins / pairs, || format!("set {set}: auc {auc} vs pair count {}", wins / pairs))?;
    }

    let n = 60;
    let y: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..4).map(|j| rng.normal() + if j == 0 { 0.8 * f64::from(y[i]) } else { 0.0 }).collect())
        .collect();
    let alpha_max = (0..4)
        .map(|j| (rows.iter().zip(&y).map(|(r, &t)| f64::from(t) * r[j]).sum::<f64>() / n as f64).abs())
        .fold(0.0, f64::max);
    let x = design(&rows, &y);
    for factor in [1.0001, 2.0, 10.0] {
        let m =
            fit(&x, &ClassifierConfig::new(ClassifierKind::LogregL1, alpha_max * factor)).map_err(|e| e.to_string())?;
        check(m.weights.iter().all(|&w| w == 0.0), || {
            format!("L1 weights non-zero at {factor}·alpha_max: {:?}", m.weights)
        })?;
    }
    let m = fit(&x, &ClassifierConfig::new(ClassifierKind::LogregL1, alpha_max * 0.05)).map_err(|e| e.to_string())?;
    check(m.weights.iter().any(|&w| w != 0.0), || "L1 weights all zero far below the critical alpha".into())?;

    let two = design(&[vec![-1.0], vec![1.0]], &[-1, 1]);
    let alpha = 0.25;
    let m = fit(&two, &ClassifierConfig::new(ClassifierKind::LogregL2, alpha)).map_err(|e| e.to_string())?;
    let obj = |w: f64, b: f64| ((-(w + b)).exp().ln_1p() + (-(w - b)).exp().ln_1p()) / 2.0 + alpha * w * w;
    let (mut cw, mut cb, mut span) = (0.0, 0.0, 4.0);
    for _ in 0..12 {
        let mut best = (f64::INFINITY, cw, cb);
        for i in -40..=40 {
            for j in -40..=40 {
                let (w, b) = (cw + span * f64::from(i) / 40.0, cb + span * f64::from(j) / 40.0);
                if obj(w, b) < best.0 {
                    best = (obj(w, b), w, b);
                }
            }
        }
        (cw, cb) = (best.1, best.2);
        span /= 8.0;
    }
    let dw = (m.weights[0] - cw).abs().max((m.bias - cb).abs());
    check(dw < 1e-4, || format!("2-point L2 fit ({}, {}) vs grid ({cw}, {cb})", m.weights[0], m.bias))?;

    let skewed: Vec<i8> = (0..n).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
    let xs = design(&rows, &skewed);
    for kind in ClassifierKind::ALL {
        let m = fit(&xs, &ClassifierConfig::new(kind, 1e6)).map_err(|e| e.to_string())?;
        let all_majority = (0..xs.n_rows()).all(|i| m.score(xs.row(i)) > 0.0);
        check(m.weights.iter().all(|w| w.abs() < 1e-3) && all_majority, || {
            format!("{kind}: not a majority predictor at alpha 1e6")
        })?;
    }
    Ok(format!(
        "AUC == pair count on 50 sets; L1 zero above {alpha_max:.4}; 2-point L2 within {dw:.1e}; alpha 1e6 predicts the majority"
    ))
}

fn icoclust(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_icoclust")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("icoclust {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn report_rows(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect())
}

/// AE epochs for the synthetic pipeline; icon clusters are already clean
/// with a lightly trained autoencoder.
const PIPELINE_AE_EPOCHS: usize = 5;

fn criterion_10(work: &Path) -> Outcome {
    let p = |s: &str| work.join(s).to_string_lossy().into_owned();
    fs::write(work.join("cfg.toml"), format!("[autoencoder]\nepochs = {PIPELINE_AE_EPOCHS}\n"))
        .map_err(|e| e.to_string())?;
    let cfg = p("cfg.toml");
    icoclust(&["synth", "--count", "400", "--corpus-seed", "0", "--out", &p("corpus")])?;
    icoclust(&["extract", "--input", &p("corpus/samples"), "--out", &p("extract")])?;
    icoclust(&["--config", &cfg, "train-ae", "--icons", &p("extract/icons"), "--out", &p("ae.json")])?;
    icoclust(&["featurize", "--icons", &p("extract/icons"), "--model", &p("ae.json"), "--out", &p("features.csv")])?;
    icoclust(&["--config", &cfg, "cluster", "--features", &p("features.csv"), "--out", &p("cluster")])?;
    icoclust(&[
        "--config",
        &cfg,
        "experiment",
        "--pefile",
        &p("extract/pefile_features.csv"),
        "--assignments",
        &p("cluster/assignments.csv"),
        "--labels",
        &p("corpus/labels.csv"),
        "--out",
        &p("report"),
    ])?;
    let rows = report_rows(&work.join("report/report.csv"))?;
    check(rows.len() == 6, || format!("{} report rows", rows.len()))?;
    let mut lines = Vec::new();
    for pair in rows.chunks(2) {
        let (no, yes) = (&pair[0], &pair[1]);
        check(no[1] == "no" && yes[1] == "yes" && no[0] == yes[0], || format!("unexpected row order {no:?} {yes:?}"))?;
        let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
        let (dacc, dauc) = (num(yes, 9) - num(no, 9), num(yes, 12) - num(no, 12));
        check(dacc >= 0.05 && dauc >= 0.05, || format!("{}: accuracy +{dacc:.3}, AUC +{dauc:.3}", no[0]))?;
        lines.push(format!("{} acc +{dacc:.3} auc +{dauc:.3}", no[0]));
    }
    Ok(lines.join(", "))
}

fn criterion_11(work: &Path) -> Outcome {
    let p = |s: &str| work.join(s).to_string_lossy().into_owned();
    let run = |out: &str, jobs: &str| {
        icoclust(&[
            "--jobs",
            jobs,
            "--config",
            &p("cfg.toml"),
            "experiment",
            "--pefile",
            &p("extract/pefile_features.csv"),
            "--assignments",
            &p("cluster/assignments.csv"),
            "--labels",
            &p("corpus/labels.csv"),
            "--out",
            &p(out),
        ])
    };
    run("rerun_a", "4")?;
    run("rerun_b", "1")?;
    let mut compared = 0;
    let mut names: Vec<_> =
        fs::read_dir(work.join("report")).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let first = fs::read(work.join("report").join(&name)).map_err(|e| e.to_string())?;
        for dir in ["rerun_a", "rerun_b"] {
            let again = fs::read(work.join(dir).join(&name)).map_err(|e| e.to_string())?;
            check(first == again, || format!("{dir}/{} differs", name.to_string_lossy()))?;
        }
        compared += 1;
    }
    Ok(format!("{compared} report files byte-identical across 3 runs (4 and 1 worker threads)"))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; `--list` must list nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("feature counts", Box::new(criterion_1)),
        ("entropy oracle", Box::new(criterion_2)),
        ("MC/HOG brute-force equivalence", Box::new(criterion_3)),
        ("HOG illumination invariance", Box::new(criterion_4)),
        ("autoencoder gradient check and overfit", Box::new(criterion_5)),
        ("HDBSCAN recovery and MST oracle", Box::new(criterion_6)),
        ("k-means and silhouette", Box::new(criterion_7)),
        ("assignment consistency", Box::new(criterion_8)),
        ("classifier oracles", Box::new(criterion_9)),
        ("icon clusters help every model on the synthetic corpus", Box::new(|| criterion_10(work.path()))),
        ("experiment determinism", Box::new(|| criterion_11(work.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
