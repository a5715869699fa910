//! Icon payload decoding: BMP DIBs (ICO convention) and PNG streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ICON_SIDE: u32 = 1024;
const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IconError {
    #[error("unsupported bit depth {0}")]
    UnsupportedBpp(u16),
    #[error("malformed DIB: {0}")]
    MalformedDib(String),
    #[error("malformed PNG: {0}")]
    MalformedPng(String),
    #[error("malformed ICO directory: {0}")]
    MalformedIco(String),
    #[error("no icons to choose from")]
    EmptyList,
}

/// Decoded icon, row-major RGBA with 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl IconRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), (width * height * 4) as usize, "pixel buffer size");
        assert!((1..=MAX_ICON_SIDE).contains(&width) && (1..=MAX_ICON_SIDE).contains(&height));
        Self { width, height, pixels }
    }

    /// Constant-color raster.
    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let pixels = rgba.iter().copied().cycle().take((width * height * 4) as usize).collect();
        Self::new(width, height, pixels)
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = ((y * self.width + x) * 4) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Decodes one icon image payload (an `RT_ICON` resource or an ICO entry).
pub fn decode_icon_image(bytes: &[u8]) -> Result<IconRaster, IconError> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        decode_dib(bytes)
    }
}

fn le_u16(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn le_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn malformed(msg: impl Into<String>) -> IconError {
    IconError::MalformedDib(msg.into())
}

fn decode_dib(bytes: &[u8]) -> Result<IconRaster, IconError> {
    if bytes.len() < 40 {
        return Err(malformed(format!("{} bytes, need a 40-byte header", bytes.len())));
    }
    let header_size = le_u32(bytes, 0) as usize;
    if !(40..=bytes.len()).contains(&header_size) {
        return Err(malformed(format!("header size {header_size}")));
    }
    let width = le_u32(bytes, 4) as i32;
    let raw_height = le_u32(bytes, 8) as i32;
    let bpp = le_u16(bytes, 14);
    let compression = le_u32(bytes, 16);
    let colors_used = le_u32(bytes, 32) as usize;

    if !matches!(bpp, 1 | 4 | 8 | 24 | 32) {
        return Err(IconError::UnsupportedBpp(bpp));
    }
    if compression != 0 {
        return Err(malformed(format!("compression {compression}")));
    }
    // ICO DIBs store XOR and AND masks stacked, so the header height is doubled.
    let top_down = raw_height < 0;
    let height = raw_height.unsigned_abs() / 2;
    if width < 1 || width as u32 > MAX_ICON_SIDE || !(1..=MAX_ICON_SIDE).contains(&height) {
        return Err(malformed(format!("dimensions {width}x{raw_height}")));
    }
    let (w, h) = (width as usize, height as usize);

    let palette_len = if bpp <= 8 {
        let max = 1usize << bpp;
        match colors_used {
            0 => max,
            n if n <= max => n,
            n => return Err(malformed(format!("{n} palette entries for {bpp} bpp"))),
        }
    } else {
        colors_used
    };
    let palette_end = palette_len
        .checked_mul(4)
        .and_then(|n| n.checked_add(header_size))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| malformed("palette past end of payload"))?;
    let palette = &bytes[header_size..palette_end];

    let xor_stride = (w * bpp as usize).div_ceil(32) * 4;
    let xor_end = palette_end + xor_stride * h;
    if xor_end > bytes.len() {
        return Err(malformed(format!("pixel data needs {} bytes, payload has {}", xor_end, bytes.len())));
    }
    let xor = &bytes[palette_end..xor_end];
    let and_stride = w.div_ceil(32) * 4;
    let and_mask = bytes.get(xor_end..xor_end + and_stride * h);

    let mut pixels = vec![0u8; w * h * 4];
    for y in 0..h {
        let src_row = if top_down { y } else { h - 1 - y };
        let row = &xor[src_row * xor_stride..(src_row + 1) * xor_stride];
        for x in 0..w {
            let rgba = match bpp {
                32 => [row[4 * x + 2], row[4 * x + 1], row[4 * x], row[4 * x + 3]],
                24 => [row[3 * x + 2], row[3 * x + 1], row[3 * x], 255],
                _ => {
                    let bits = bpp as usize;
                    let bit_off = x * bits;
                    let byte = row[bit_off / 8];
                    let shift = 8 - bits - (bit_off % 8);
                    let idx = ((byte >> shift) as usize) & ((1 << bits) - 1);
                    if idx >= palette_len {
                        return Err(malformed(format!("palette index {idx} out of {palette_len}")));
                    }
                    let p = &palette[4 * idx..4 * idx + 4];
                    [p[2], p[1], p[0], 255]
                }
            };
            pixels[(y * w + x) * 4..(y * w + x + 1) * 4].copy_from_slice(&rgba);
        }
    }

    // 32-bpp icons carry real alpha; a fully zero alpha plane means the alpha
    // channel is unused and the AND mask decides transparency instead.
    let use_and_mask = bpp < 32 || pixels.chunks_exact(4).all(|p| p[3] == 0);
    if bpp == 32 && use_and_mask {
        pixels.chunks_exact_mut(4).for_each(|p| p[3] = 255);
    }
    if let (true, Some(mask)) = (use_and_mask, and_mask) {
        for y in 0..h {
            let src_row = if top_down { y } else { h - 1 - y };
            let row = &mask[src_row * and_stride..(src_row + 1) * and_stride];
            for x in 0..w {
                if row[x / 8] & (0x80 >> (x % 8)) != 0 {
                    pixels[(y * w + x) * 4 + 3] = 0;
                }
            }
        }
    }

    Ok(IconRaster::new(w as u32, h as u32, pixels))
}

fn decode_png(bytes: &[u8]) -> Result<IconRaster, IconError> {
    let bad = |e: png::DecodingError| IconError::MalformedPng(e.to_string());
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(bad)?;
    let (w, h) = {
        let info = reader.info();
        (info.width, info.height)
    };
    if !(1..=MAX_ICON_SIDE).contains(&w) || !(1..=MAX_ICON_SIDE).contains(&h) {
        return Err(IconError::MalformedPng(format!("dimensions {w}x{h}")));
    }
    let size = reader.output_buffer_size().ok_or_else(|| IconError::MalformedPng("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(bad)?;
    let data = &buf[..frame.buffer_size()];
    let n = (w * h) as usize;
    let pixels: Vec<u8> = match frame.color_type {
        png::ColorType::Rgba => data[..n * 4].to_vec(),
        png::ColorType::Rgb => data[..n * 3].chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect(),
        png::ColorType::GrayscaleAlpha => {
            data[..n * 2].chunks_exact(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect()
        }
        png::ColorType::Grayscale => data[..n].iter().flat_map(|&g| [g, g, g, 255]).collect(),
        png::ColorType::Indexed => return Err(IconError::MalformedPng("palette was not expanded".into())),
    };
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(IconError::MalformedPng(format!("bit depth {:?} after expansion", frame.bit_depth)));
    }
    Ok(IconRaster::new(w, h, pixels))
}

/// Decodes every entry of a standalone `.ico` file. Entries that fail to decode
/// are returned as errors in place so callers can tally them.
pub fn decode_ico_file(bytes: &[u8]) -> Result<Vec<Result<IconRaster, IconError>>, IconError> {
    let bad = |m: &str| IconError::MalformedIco(m.to_string());
    if bytes.len() < 6 {
        return Err(bad("shorter than ICONDIR"));
    }
    if le_u16(bytes, 0) != 0 || le_u16(bytes, 2) != 1 {
        return Err(bad("ICONDIR reserved/type mismatch"));
    }
    let count = le_u16(bytes, 4) as usize;
    if bytes.len() < 6 + 16 * count {
        return Err(bad("directory entries past end of file"));
    }
    Ok((0..count)
        .map(|i| {
            let e = 6 + 16 * i;
            let size = le_u32(bytes, e + 8) as usize;
            let offset = le_u32(bytes, e + 12) as usize;
            offset
                .checked_add(size)
                .and_then(|end| bytes.get(offset..end))
                .ok_or_else(|| bad("image data past end of file"))
                .and_then(decode_icon_image)
        })
        .collect())
}

/// Picks the icon with the largest area; the earliest wins ties.
pub fn select_primary_icon(icons: &[IconRaster]) -> Result<&IconRaster, IconError> {
    let mut best: Option<&IconRaster> = None;
    for icon in icons {
        if best.is_none_or(|b| icon.area() > b.area()) {
            best = Some(icon);
        }
    }
    best.ok_or(IconError::EmptyList)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{encode_dib, encode_png, IcoBuilder};

    #[test]
    fn dib_24bpp_red() {
        let red = IconRaster::filled(2, 2, [255, 0, 0, 255]);
        let raster = decode_icon_image(&encode_dib(&red, 24)).unwrap();
        assert_eq!((raster.width, raster.height), (2, 2));
        assert!(raster.pixels.chunks(4).all(|p| p == [255, 0, 0, 255]));
    }

    #[test]
    fn hand_built_dib_bytes() {
        // 2x2, 24 bpp, bottom-up; row stride padded to 8 bytes; AND mask rows 4 bytes.
        let mut b = Vec::new();
        b.extend(40u32.to_le_bytes());
        b.extend(2i32.to_le_bytes());
        b.extend(4i32.to_le_bytes());
        b.extend(1u16.to_le_bytes());
        b.extend(24u16.to_le_bytes());
        b.extend([0u8; 24]);
        for _ in 0..2 {
            b.extend([0, 0, 255, 0, 0, 255, 0, 0]);
        }
        // bottom row: second pixel transparent
        b.extend([0x40, 0, 0, 0]);
        b.extend([0, 0, 0, 0]);
        let raster = decode_icon_image(&b).unwrap();
        assert_eq!(raster.pixel(0, 0), [255, 0, 0, 255]);
        assert_eq!(raster.pixel(1, 1), [255, 0, 0, 0]);
        assert_eq!(raster.pixel(0, 1), [255, 0, 0, 255]);
    }

    #[test]
    fn png_white_pixel() {
        let white = IconRaster::filled(1, 1, [255, 255, 255, 255]);
        let raster = decode_icon_image(&encode_png(&white)).unwrap();
        assert_eq!(raster, white);
    }

    #[test]
    fn sixteen_bpp_rejected() {
        let icon = IconRaster::filled(4, 4, [1, 2, 3, 255]);
        let mut dib = encode_dib(&icon, 24);
        dib[14..16].copy_from_slice(&16u16.to_le_bytes());
        assert_eq!(decode_icon_image(&dib), Err(IconError::UnsupportedBpp(16)));
    }

    #[test]
    fn truncated_pixel_data_is_malformed() {
        let icon = IconRaster::filled(16, 16, [9, 9, 9, 255]);
        let dib = encode_dib(&icon, 32);
        assert!(matches!(decode_icon_image(&dib[..200]), Err(IconError::MalformedDib(_))));
        assert!(matches!(decode_icon_image(&dib[..20]), Err(IconError::MalformedDib(_))));
    }

    #[test]
    fn corrupt_png_is_malformed() {
        let icon = IconRaster::filled(8, 8, [9, 9, 9, 255]);
        let mut png = encode_png(&icon);
        let n = png.len();
        png.truncate(n - 20);
        assert!(matches!(decode_icon_image(&png), Err(IconError::MalformedPng(_))));
    }

    #[test]
    fn palette_depths_round_trip() {
        // Two colors so 1 bpp can represent it; transparent pixel through the AND mask.
        let mut pixels = Vec::new();
        for y in 0..5u32 {
            for x in 0..7u32 {
                let c = if (x + y) % 2 == 0 { [0, 0, 0, 255] } else { [255, 255, 255, 255] };
                pixels.extend(c);
            }
        }
        pixels[3] = 0;
        pixels[0..3].copy_from_slice(&[255, 255, 255]);
        let icon = IconRaster::new(7, 5, pixels);
        for bpp in [1u16, 4, 8] {
            let decoded = decode_icon_image(&encode_dib(&icon, bpp)).unwrap();
            assert_eq!(decoded, icon, "bpp {bpp}");
        }
    }

    #[test]
    fn zero_alpha_32bpp_falls_back_to_and_mask() {
        let mut icon = IconRaster::filled(3, 3, [10, 20, 30, 0]);
        let mut dib = encode_dib(&icon, 32);
        // Clear the AND mask entirely: every pixel should come back opaque.
        let mask_len = 3 * 4;
        let n = dib.len();
        dib[n - mask_len..].fill(0);
        let decoded = decode_icon_image(&dib).unwrap();
        icon.pixels.chunks_exact_mut(4).for_each(|p| p[3] = 255);
        assert_eq!(decoded, icon);
    }

    #[test]
    fn select_primary_rules() {
        let small = IconRaster::filled(16, 16, [0, 0, 0, 255]);
        let big_a = IconRaster::filled(32, 32, [1, 0, 0, 255]);
        let big_b = IconRaster::filled(32, 32, [2, 0, 0, 255]);
        assert_eq!(select_primary_icon(&[small.clone(), big_a.clone()]).unwrap(), &big_a);
        assert_eq!(select_primary_icon(&[big_a.clone(), big_b]).unwrap(), &big_a);
        assert_eq!(select_primary_icon(&[]), Err(IconError::EmptyList));
    }

    #[test]
    fn ico_file_entries() {
        let a = IconRaster::filled(16, 16, [1, 2, 3, 255]);
        let b = IconRaster::filled(32, 32, [4, 5, 6, 255]);
        let ico = IcoBuilder::new().dib(&a, 32).png(&b).build();
        let decoded: Vec<_> = decode_ico_file(&ico).unwrap().into_iter().map(Result::unwrap).collect();
        assert_eq!(decoded, vec![a, b]);
        assert!(decode_ico_file(b"\x00\x00\x02\x00\x01\x00").is_err());
    }
}
