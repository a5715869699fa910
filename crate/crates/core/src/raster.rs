//! Image primitives shared by the featurizers. All values are reals in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::pe::IconRaster;

/// Default compositing background: white.
pub const DEFAULT_BACKGROUND: f64 = 1.0;

/// Planar RGB image: the red plane, then green, then blue, each row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), 3 * width * height, "rgb buffer size");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let n = width * height;
        let data = rgb.iter().flat_map(|&c| std::iter::repeat_n(c, n)).collect();
        Self::new(width, height, data)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.width * self.height + y * self.width + x]
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "gray buffer size");
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// `out = a·fg + (1 − a)·background` per channel, channels and alpha scaled by 1/255.
pub fn composite_to_rgb(icon: &IconRaster, background: f64) -> RgbImage {
    let (w, h) = (icon.width as usize, icon.height as usize);
    let n = w * h;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in icon.pixels.chunks_exact(4).enumerate() {
        let alpha = px[3] as f64 / 255.0;
        for c in 0..3 {
            let fg = px[c] as f64 / 255.0;
            data[c * n + i] = alpha * fg + (1.0 - alpha) * background;
        }
    }
    RgbImage::new(w, h, data)
}

/// Luma with weights 0.299 / 0.587 / 0.114.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r.iter().zip(g).zip(b).map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b).collect();
    GrayImage::new(img.width, img.height, data)
}

/// Source sample positions and weights along one axis (half-pixel centers, edge clamped).
fn axis_taps(src: usize, out: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / out as f64;
    (0..out)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn resize_plane(src: &[f64], sw: usize, sh: usize, ow: usize, oh: usize) -> Vec<f64> {
    let xs = axis_taps(sw, ow);
    let ys = axis_taps(sh, oh);
    let mut out = Vec::with_capacity(ow * oh);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bottom = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Images that can be bilinearly resized plane by plane.
pub trait Resize: Sized {
    fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Self;
}

impl Resize for GrayImage {
    fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Self {
        assert!(out_w >= 1 && out_h >= 1, "output size must be positive");
        if (out_w, out_h) == (self.width, self.height) {
            return self.clone();
        }
        GrayImage::new(out_w, out_h, resize_plane(&self.data, self.width, self.height, out_w, out_h))
    }
}

impl Resize for RgbImage {
    fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Self {
        assert!(out_w >= 1 && out_h >= 1, "output size must be positive");
        if (out_w, out_h) == (self.width, self.height) {
            return self.clone();
        }
        let data = (0..3).flat_map(|c| resize_plane(self.plane(c), self.width, self.height, out_w, out_h)).collect();
        RgbImage::new(out_w, out_h, data)
    }
}

/// Free-function form of [`Resize::resize_bilinear`].
pub fn resize_bilinear<T: Resize>(img: &T, out_w: usize, out_h: usize) -> T {
    img.resize_bilinear(out_w, out_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn composite_examples() {
        let px = |p: [u8; 4], bg| composite_to_rgb(&IconRaster::filled(1, 1, p), bg).data;
        assert_eq!(px([255, 0, 0, 255], 1.0), vec![1.0, 0.0, 0.0]);
        assert_eq!(px([12, 200, 7, 0], 1.0), vec![1.0, 1.0, 1.0]);
        for v in px([255, 255, 255, 128], 0.0) {
            assert!((v - 0.50196).abs() < 1e-5, "{v}");
            assert!((v - 128.0 / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn opaque_composite_ignores_background() {
        let icon = IconRaster::new(2, 1, vec![10, 20, 30, 255, 200, 100, 0, 255]);
        assert_eq!(composite_to_rgb(&icon, 0.0), composite_to_rgb(&icon, 1.0));
    }

    #[test]
    fn grayscale_examples() {
        assert!(to_grayscale(&RgbImage::filled(3, 2, [1.0; 3])).data.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(to_grayscale(&RgbImage::filled(1, 1, [1.0, 0.0, 0.0])).data == vec![0.299]);
        assert!((to_grayscale(&RgbImage::filled(1, 1, [0.5; 3])).data[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn resize_half_pixel_example() {
        let img = GrayImage::new(2, 1, vec![0.0, 1.0]);
        let out = img.resize_bilinear(4, 1);
        for (a, b) in out.data.iter().zip([0.0, 0.25, 0.75, 1.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn resize_identity_is_bit_exact() {
        let data: Vec<f64> = (0..32 * 32 * 3).map(|i| (i % 97) as f64 / 96.0).collect();
        let img = RgbImage::new(32, 32, data);
        assert_eq!(img.resize_bilinear(32, 32), img);
    }

    #[test]
    fn constant_resize_and_grayscale_commute() {
        let img = RgbImage::filled(5, 7, [0.2, 0.6, 0.9]);
        let a = to_grayscale(&img.resize_bilinear(24, 24));
        let b = to_grayscale(&img).resize_bilinear(24, 24);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn resize_preserves_range(
            w in 1usize..12, h in 1usize..12, ow in 1usize..40, oh in 1usize..40,
            seed in proptest::collection::vec(0.0f64..1.0, 144)
        ) {
            let img = GrayImage::new(w, h, seed[..w * h].to_vec());
            let lo = img.data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = img.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = img.resize_bilinear(ow, oh);
            prop_assert_eq!(out.data.len(), ow * oh);
            for v in out.data {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn constant_stays_constant(c in 0.0f64..1.0, ow in 1usize..50, oh in 1usize..50) {
            let img = GrayImage::new(3, 5, vec![c; 15]);
            for v in img.resize_bilinear(ow, oh).data {
                prop_assert!((v - c).abs() < 1e-15);
            }
        }
    }
}
