//! Seeded synthetic corpus: PE files whose icons come from a handful of
//! visual templates (with blur, color shift and noise) and whose labels
//! depend mostly on the template and only weakly on the section contents.

use crate::fixtures::{encode_dib, encode_png, PeBuilder, SectionSpec};
use crate::pe::IconRaster;
use crate::rng::SeededRng;

pub const NUM_TEMPLATES: usize = 5;

/// Probability that a sample drawn with template `i` is malware.
pub const TEMPLATE_MALWARE_RATE: [f64; NUM_TEMPLATES] = [0.9, 0.85, 0.1, 0.15, 0.5];

const ICON_SIZES: [u32; 4] = [16, 24, 32, 48];
const NO_ICON_RATE: f64 = 0.03;

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub file_name: String,
    pub bytes: Vec<u8>,
    /// +1 malware, −1 benign.
    pub label: i8,
    pub template: Option<usize>,
}

type Rgba = [f64; 4];

const CLEAR: Rgba = [0.0, 0.0, 0.0, 0.0];

fn opaque(r: f64, g: f64, b: f64) -> Rgba {
    [r, g, b, 255.0]
}

/// Template color at normalized coordinates `(u, v)` in `[0, 1]²`.
fn template_color(template: usize, u: f64, v: f64) -> Rgba {
    match template {
        0 => {
            let d = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
            if d < 0.38 {
                opaque(220.0, 40.0, 40.0)
            } else {
                CLEAR
            }
        }
        1 => {
            let m = (u - 0.5).abs().max((v - 0.5).abs());
            if (0.2..0.38).contains(&m) {
                opaque(40.0, 70.0, 200.0)
            } else {
                opaque(250.0, 250.0, 250.0)
            }
        }
        2 => {
            if (v * 6.0).floor() as i32 % 2 == 0 {
                opaque(40.0, 170.0, 60.0)
            } else {
                opaque(220.0, 240.0, 220.0)
            }
        }
        3 => {
            // Triangle (0.5, 0.1), (0.1, 0.9), (0.9, 0.9) with a dark rim.
            let edges = [(0.5, 0.1, 0.1, 0.9), (0.1, 0.9, 0.9, 0.9), (0.9, 0.9, 0.5, 0.1)];
            let mut inside = true;
            let mut rim = f64::INFINITY;
            for (x0, y0, x1, y1) in edges {
                let (ex, ey) = (x1 - x0, y1 - y0);
                let cross = ex * (v - y0) - ey * (u - x0);
                inside &= cross <= 0.0;
                rim = rim.min(cross.abs() / (ex * ex + ey * ey).sqrt());
            }
            match (inside, rim < 0.07) {
                (false, _) => CLEAR,
                (true, true) => opaque(60.0, 50.0, 10.0),
                (true, false) => opaque(240.0, 210.0, 40.0),
            }
        }
        _ => {
            // Page with a folded corner and text lines.
            if !(0.2..0.8).contains(&u) || !(0.1..0.9).contains(&v) || u - 0.6 > v - 0.1 {
                return CLEAR;
            }
            let line = (0.3..0.7).contains(&u) && v > 0.3 && ((v - 0.3) * 10.0).fract() < 0.35;
            if line {
                opaque(90.0, 90.0, 90.0)
            } else {
                opaque(232.0, 232.0, 232.0)
            }
        }
    }
}

/// Renders one perturbed instance of `template` at `size × size`.
pub fn render_template(template: usize, size: u32, rng: &mut SeededRng) -> IconRaster {
    let s = size as f64;
    let (dx, dy) = (rng.uniform_range(-0.04, 0.04), rng.uniform_range(-0.04, 0.04));
    let shift: Vec<f64> = (0..3).map(|_| rng.uniform_range(-25.0, 25.0)).collect();
    let mut px: Vec<Rgba> = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let c = template_color(template, (x as f64 + 0.5) / s + dx, (y as f64 + 0.5) / s + dy);
            px.push(c);
        }
    }
    if rng.bernoulli(0.4) {
        let n = size as i64;
        let src = px.clone();
        for y in 0..n {
            for x in 0..n {
                let mut acc = [0.0; 4];
                let mut count = 0.0;
                for (ox, oy) in (-1..=1).flat_map(|a| (-1..=1).map(move |b| (a, b))) {
                    let (sx, sy) = (x + ox, y + oy);
                    if (0..n).contains(&sx) && (0..n).contains(&sy) {
                        let p = src[(sy * n + sx) as usize];
                        acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
                        count += 1.0;
                    }
                }
                px[(y * n + x) as usize] = acc.map(|a| a / count);
            }
        }
    }
    let mut pixels = Vec::with_capacity(px.len() * 4);
    for p in px {
        for c in 0..3 {
            let v = if p[3] > 0.0 { p[c] + shift[c] + 6.0 * rng.normal() } else { 0.0 };
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
        pixels.push(p[3].round().clamp(0.0, 255.0) as u8);
    }
    IconRaster::new(size, size, pixels)
}

/// Bytes drawn from the first `alphabet` byte values.
fn section_bytes(rng: &mut SeededRng, len: usize, alphabet: usize) -> Vec<u8> {
    (0..len).map(|_| rng.below(alphabet) as u8).collect()
}

/// Generates `n` samples. Identical `(n, seed)` give identical bytes.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<SynthSample> {
    (0..n)
        .map(|i| {
            let mut rng = SeededRng::fork(seed, i as u64);
            let template = (!rng.bernoulli(NO_ICON_RATE)).then(|| rng.below(NUM_TEMPLATES));
            let p = template.map_or(0.5, |t| TEMPLATE_MALWARE_RATE[t]);
            let label: i8 = if rng.bernoulli(p) { 1 } else { -1 };

            // Weak section signal: malware code tends to use more byte values.
            let alphabet = if label > 0 { 120 + rng.below(137) } else { 100 + rng.below(137) };
            let text_len = 1024 + rng.below(5120);
            let data_len = 512 + rng.below(2048);
            let data_alphabet = 16 + rng.below(200);
            let mut builder = PeBuilder::new()
                .pe32_plus(rng.bernoulli(0.5))
                .section(
                    SectionSpec::new(".text", section_bytes(&mut rng, text_len, alphabet))
                        .virtual_size((text_len + rng.below(512)) as u32),
                )
                .section(
                    SectionSpec::new(".data", section_bytes(&mut rng, data_len, data_alphabet))
                        .virtual_size((data_len + rng.below(4096)) as u32),
                );
            if let Some(t) = template {
                let size = ICON_SIZES[rng.below(ICON_SIZES.len())];
                let icon = render_template(t, size, &mut rng);
                let payload = if rng.bernoulli(0.5) { encode_png(&icon) } else { encode_dib(&icon, 32) };
                builder = builder.icon_group(1, vec![payload]);
            }
            SynthSample { file_name: format!("sample_{i:04}.exe"), bytes: builder.build(), label, template }
        })
        .collect()
}
