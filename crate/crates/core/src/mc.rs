//! The 26 hand-crafted mean/std features.
//!
//! Layout: `[overall_mean, overall_std, r_mean, r_std, g_mean, g_std, b_mean,
//! b_std]` followed by `(mean, std)` for each cell of a 3×3 grid in row-major
//! order. Grid and overall statistics pool all three channels. Standard
//! deviations are population (divide by N). Row band `r` covers rows
//! `[floor(r·H/3), floor((r+1)·H/3))`, columns likewise.

use thiserror::Error;

use crate::raster::RgbImage;

pub const MC_DIM: usize = 26;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum McError {
    #[error("image {0}x{1} is smaller than the 3x3 grid")]
    TooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McFeatures(pub [f64; MC_DIM]);

impl McFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Two-pass mean and population std over a sequence.
fn mean_std<I>(values: I) -> (f64, f64)
where
    I: Iterator<Item = f64> + Clone,
{
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Half-open index bounds of band `i` of 3 over `len` pixels.
pub fn band(i: usize, len: usize) -> std::ops::Range<usize> {
    (i * len / 3)..((i + 1) * len / 3)
}

pub fn mc_features(img: &RgbImage) -> Result<McFeatures, McError> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(McError::TooSmall(w, h));
    }
    let mut out = [0.0; MC_DIM];
    let (m, s) = mean_std(img.data.iter().copied());
    out[0] = m;
    out[1] = s;
    for c in 0..3 {
        let (m, s) = mean_std(img.plane(c).iter().copied());
        out[2 + 2 * c] = m;
        out[3 + 2 * c] = s;
    }
    for ry in 0..3 {
        for rx in 0..3 {
            let rows = band(ry, h);
            let cols = band(rx, w);
            let region = (0..3).flat_map(|c| {
                let plane = img.plane(c);
                let cols = cols.clone();
                rows.clone().flat_map(move |y| plane[y * w + cols.start..y * w + cols.end].iter().copied())
            });
            let (m, s) = mean_std(region);
            let k = 8 + 2 * (3 * ry + rx);
            out[k] = m;
            out[k + 1] = s;
        }
    }
    Ok(McFeatures(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    /// Straight-loop recomputation used as an independent check.
    fn mc_oracle(img: &RgbImage) -> Vec<f64> {
        let (w, h) = (img.width, img.height);
        let stats = |pts: &Vec<f64>| {
            let mut s = 0.0;
            for v in pts {
                s += v;
            }
            let m = s / pts.len() as f64;
            let mut q = 0.0;
            for v in pts {
                q += (v - m) * (v - m);
            }
            (m, (q / pts.len() as f64).sqrt())
        };
        let mut out = Vec::new();
        let mut all = Vec::new();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    all.push(img.get(c, x, y));
                }
            }
        }
        let (m, s) = stats(&all);
        out.extend([m, s]);
        for c in 0..3 {
            let mut v = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    v.push(img.get(c, x, y));
                }
            }
            let (m, s) = stats(&v);
            out.extend([m, s]);
        }
        for ry in 0..3 {
            for rx in 0..3 {
                let mut v = Vec::new();
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            if y >= ry * h / 3 && y < (ry + 1) * h / 3 && x >= rx * w / 3 && x < (rx + 1) * w / 3 {
                                v.push(img.get(c, x, y));
                            }
                        }
                    }
                }
                let (m, s) = stats(&v);
                out.extend([m, s]);
            }
        }
        out
    }

    fn random_image(rng: &mut SeededRng, w: usize, h: usize) -> RgbImage {
        RgbImage::new(w, h, (0..3 * w * h).map(|_| rng.uniform()).collect())
    }

    #[test]
    fn constant_image() {
        let f = mc_features(&RgbImage::filled(10, 7, [0.3; 3])).unwrap();
        for i in 0..13 {
            assert!((f.0[2 * i] - 0.3).abs() < 1e-12);
            assert!(f.0[2 * i + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn pure_red_channel_statistics() {
        let f = mc_features(&RgbImage::filled(32, 32, [1.0, 0.0, 0.0])).unwrap();
        assert!((f.0[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.0[1] - (2.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!((f.0[1] - 0.4714).abs() < 1e-4);
        assert_eq!(&f.0[2..8], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_oracle_on_random_images() {
        let mut rng = SeededRng::new(5);
        for (w, h) in [(32, 32), (16, 16), (3, 3), (33, 17), (48, 24)] {
            let img = random_image(&mut rng, w, h);
            let f = mc_features(&img).unwrap();
            for (a, b) in f.0.iter().zip(mc_oracle(&img)) {
                assert!((a - b).abs() < 1e-12, "{w}x{h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn too_small_rejected() {
        assert_eq!(mc_features(&RgbImage::filled(2, 5, [0.0; 3])), Err(McError::TooSmall(2, 5)));
    }

    #[test]
    fn band_heights_follow_floor_rule() {
        let sizes = |n| (0..3).map(|i| band(i, n).len()).collect::<Vec<_>>();
        assert_eq!(sizes(33), [11, 11, 11]);
        assert_eq!(sizes(32), [10, 11, 11]);
        assert_eq!(sizes(16), [5, 5, 6]);
    }

    proptest! {
        #[test]
        fn shift_moves_means_only(seed in 0u64..1000, delta in -0.2f64..0.2) {
            let mut rng = SeededRng::new(seed);
            // values in [0.25, 0.75] so the shift stays inside [0, 1]
            let data: Vec<f64> = (0..3 * 12 * 9).map(|_| 0.25 + 0.5 * rng.uniform()).collect();
            let img = RgbImage::new(12, 9, data.clone());
            let shifted = RgbImage::new(12, 9, data.iter().map(|v| v + delta).collect());
            let (a, b) = (mc_features(&img).unwrap(), mc_features(&shifted).unwrap());
            for i in 0..13 {
                prop_assert!((b.0[2 * i] - a.0[2 * i] - delta).abs() < 1e-12);
                prop_assert!((b.0[2 * i + 1] - a.0[2 * i + 1]).abs() < 1e-12);
            }
        }

        #[test]
        fn permuting_within_a_region_is_invariant(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let img = random_image(&mut rng, 9, 9);
            let mut permuted = img.clone();
            // swap two pixels inside the centre cell (rows/cols 3..6) in every channel
            let (a, b) = (3 * 9 + 3, 5 * 9 + 4);
            for c in 0..3 {
                permuted.plane_mut(c).swap(a, b);
            }
            let (fa, fb) = (mc_features(&img).unwrap(), mc_features(&permuted).unwrap());
            for (x, y) in fa.0.iter().zip(fb.0.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn bounds_hold(seed in 0u64..1000, w in 3usize..20, h in 3usize..20) {
            let mut rng = SeededRng::new(seed);
            let f = mc_features(&random_image(&mut rng, w, h)).unwrap();
            for i in 0..13 {
                prop_assert!((0.0..=1.0).contains(&f.0[2 * i]));
                prop_assert!((0.0..=0.5 + 1e-12).contains(&f.0[2 * i + 1]));
            }
        }
    }
}
