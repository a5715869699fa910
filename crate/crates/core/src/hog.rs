//! Histogram-of-oriented-gradients features on a fixed 24×24 grayscale image.
//!
//! 3×3-pixel cells give an 8×8 cell grid; each cell holds 9 unsigned
//! orientation bins (20° wide, centred at 10°, 30°, …, 170°), so the
//! descriptor has 8·8·9 = 576 entries. Each cell is L2-normalised on its own;
//! there is no block normalisation.

use thiserror::Error;

use crate::raster::{to_grayscale, GrayImage, Resize, RgbImage};

pub const HOG_SIDE: usize = 24;
pub const CELL_SIDE: usize = 3;
pub const CELLS_PER_SIDE: usize = HOG_SIDE / CELL_SIDE;
pub const ORIENTATIONS: usize = 9;
pub const HOG_DIM: usize = CELLS_PER_SIDE * CELLS_PER_SIDE * ORIENTATIONS;
const BIN_WIDTH_DEG: f64 = 180.0 / ORIENTATIONS as f64;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HogError {
    #[error("HOG input must be {HOG_SIDE}x{HOG_SIDE}, got {0}x{1}")]
    WrongSize(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogFeatures(pub Vec<f64>);

impl HogFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let i = (cy * CELLS_PER_SIDE + cx) * ORIENTATIONS;
        &self.0[i..i + ORIENTATIONS]
    }
}

/// Grayscale, then bilinear resize to 24×24.
pub fn prepare_for_hog(img: &RgbImage) -> GrayImage {
    to_grayscale(img).resize_bilinear(HOG_SIDE, HOG_SIDE)
}

/// Unsigned gradient orientation in degrees, folded into `[0, 180)`.
fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    deg
}

pub fn hog_features(img: &GrayImage) -> Result<HogFeatures, HogError> {
    if img.width != HOG_SIDE || img.height != HOG_SIDE {
        return Err(HogError::WrongSize(img.width, img.height));
    }
    let n = HOG_SIDE;
    let at = |x: usize, y: usize| img.data[y * n + x];
    let mut hist = vec![0.0; HOG_DIM];

    for y in 0..n {
        for x in 0..n {
            // [-1, 0, 1] with edge replication
            let gx = at((x + 1).min(n - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(n - 1)) - at(x, y.saturating_sub(1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let pos = unsigned_orientation(gx, gy) / BIN_WIDTH_DEG - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo_bin = (lo as i64).rem_euclid(ORIENTATIONS as i64) as usize;
            let hi_bin = (lo_bin + 1) % ORIENTATIONS;
            let base = ((y / CELL_SIDE) * CELLS_PER_SIDE + x / CELL_SIDE) * ORIENTATIONS;
            hist[base + lo_bin] += mag * (1.0 - frac);
            hist[base + hi_bin] += mag * frac;
        }
    }

    for cell in hist.chunks_exact_mut(ORIENTATIONS) {
        let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > NORM_EPS {
            cell.iter_mut().for_each(|v| *v /= norm);
        } else {
            cell.fill(0.0);
        }
    }
    Ok(HogFeatures(hist))
}
