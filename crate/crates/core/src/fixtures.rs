//! Byte-level builders for PE images, ICO files and icon payloads.
//!
//! Tests, the synthetic corpus and the benchmarks all build their inputs here,
//! so every parser test reads back exactly what was written.

use crate::pe::IconRaster;

const FILE_ALIGN: usize = 0x200;
const SECTION_ALIGN: u32 = 0x1000;
const E_LFANEW: usize = 0x80;

fn align_up(v: usize, a: usize) -> usize {
    v.div_ceil(a) * a
}

#[derive(Debug, Clone)]
pub struct SectionSpec {
    name: String,
    data: Vec<u8>,
    virtual_size: Option<u32>,
}

impl SectionSpec {
    pub fn new(name: &str, data: Vec<u8>) -> Self {
        assert!(name.len() <= 8, "section names are at most 8 bytes");
        Self { name: name.to_string(), data, virtual_size: None }
    }

    /// Overrides `Misc_VirtualSize` (defaults to the raw length).
    pub fn virtual_size(mut self, size: u32) -> Self {
        self.virtual_size = Some(size);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct PeBuilder {
    sections: Vec<SectionSpec>,
    groups: Vec<(u16, Vec<Vec<u8>>)>,
    pe32_plus: bool,
    resource_override: Option<String>,
}

impl PeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pe32_plus(mut self, yes: bool) -> Self {
        self.pe32_plus = yes;
        self
    }

    pub fn section(mut self, spec: SectionSpec) -> Self {
        self.sections.push(spec);
        self
    }

    /// Adds an `RT_GROUP_ICON` with id `group_id`; payloads become `RT_ICON`
    /// entries numbered sequentially across all groups. Any icon group makes
    /// the builder append a generated `.rsrc` section.
    pub fn icon_group(mut self, group_id: u16, payloads: Vec<Vec<u8>>) -> Self {
        self.groups.push((group_id, payloads));
        self
    }

    /// Points the resource data directory at an explicitly supplied section.
    pub fn resource_directory_rva_of(mut self, section: &str) -> Self {
        self.resource_override = Some(section.to_string());
        self
    }

    pub fn build(self) -> Vec<u8> {
        let mut sections = self.sections.clone();
        let mut vas = Vec::new();
        let mut va = SECTION_ALIGN;
        for s in &sections {
            vas.push(va);
            let extent = s.virtual_size.unwrap_or(0).max(s.data.len() as u32).max(1);
            va += (extent as usize).div_ceil(SECTION_ALIGN as usize) as u32 * SECTION_ALIGN;
        }
        let mut resource_dir = None;
        if !self.groups.is_empty() {
            assert!(sections.iter().all(|s| s.name != ".rsrc"), "generated .rsrc would clash");
            let rsrc = build_icon_resources(&self.groups, va);
            resource_dir = Some((va, rsrc.len() as u32));
            vas.push(va);
            sections.push(SectionSpec::new(".rsrc", rsrc));
        }
        if let Some(name) = &self.resource_override {
            let i = sections.iter().position(|s| &s.name == name).expect("unknown section");
            resource_dir = Some((vas[i], sections[i].data.len().max(1) as u32));
        }

        let opt_size: usize = if self.pe32_plus { 240 } else { 224 };
        let headers_end = E_LFANEW + 4 + 20 + opt_size + 40 * sections.len();
        let mut offsets = Vec::new();
        let mut off = align_up(headers_end, FILE_ALIGN);
        for s in &sections {
            offsets.push(off);
            off = align_up(off + s.data.len(), FILE_ALIGN);
        }
        let mut out = vec![0u8; off];

        out[..2].copy_from_slice(b"MZ");
        out[0x3c..0x40].copy_from_slice(&(E_LFANEW as u32).to_le_bytes());
        out[E_LFANEW..E_LFANEW + 4].copy_from_slice(b"PE\0\0");
        let coff = E_LFANEW + 4;
        let machine: u16 = if self.pe32_plus { 0x8664 } else { 0x14c };
        put16(&mut out, coff, machine);
        put16(&mut out, coff + 2, sections.len() as u16);
        put16(&mut out, coff + 16, opt_size as u16);
        put16(&mut out, coff + 18, 0x0102);

        let opt = coff + 20;
        let (count_off, dirs_off) = if self.pe32_plus { (108, 112) } else { (92, 96) };
        put16(&mut out, opt, if self.pe32_plus { 0x20b } else { 0x10b });
        put32(&mut out, opt + 32, SECTION_ALIGN);
        put32(&mut out, opt + 36, FILE_ALIGN as u32);
        put32(&mut out, opt + 56, va + SECTION_ALIGN);
        put32(&mut out, opt + 60, align_up(headers_end, FILE_ALIGN) as u32);
        put32(&mut out, opt + count_off, 16);
        if let Some((rva, size)) = resource_dir {
            put32(&mut out, opt + dirs_off + 16, rva);
            put32(&mut out, opt + dirs_off + 20, size);
        }

        let table = opt + opt_size;
        for (i, s) in sections.iter().enumerate() {
            let h = table + 40 * i;
            out[h..h + s.name.len()].copy_from_slice(s.name.as_bytes());
            put32(&mut out, h + 8, s.virtual_size.unwrap_or(s.data.len() as u32));
            put32(&mut out, h + 12, vas[i]);
            put32(&mut out, h + 16, s.data.len() as u32);
            put32(&mut out, h + 20, if s.data.is_empty() { 0 } else { offsets[i] as u32 });
            put32(&mut out, h + 36, 0x4000_0040);
            out[offsets[i]..offsets[i] + s.data.len()].copy_from_slice(&s.data);
        }
        out
    }
}

fn put16(buf: &mut [u8], off: usize, v: u16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put32(buf: &mut [u8], off: usize, v: u32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Lays out type → id → language → data for RT_ICON (3) and RT_GROUP_ICON (14).
fn build_icon_resources(groups: &[(u16, Vec<Vec<u8>>)], section_rva: u32) -> Vec<u8> {
    const LANG: u32 = 1033;
    let mut icons: Vec<(u16, &[u8])> = Vec::new();
    let mut group_dirs: Vec<(u16, Vec<u8>)> = Vec::new();
    for (gid, payloads) in groups {
        let mut dir = Vec::new();
        dir.extend(0u16.to_le_bytes());
        dir.extend(1u16.to_le_bytes());
        dir.extend((payloads.len() as u16).to_le_bytes());
        for p in payloads {
            let id = icons.len() as u16 + 1;
            icons.push((id, p.as_slice()));
            dir.extend([0u8, 0, 0, 0]);
            dir.extend(1u16.to_le_bytes());
            dir.extend(32u16.to_le_bytes());
            dir.extend((p.len() as u32).to_le_bytes());
            dir.extend(id.to_le_bytes());
        }
        group_dirs.push((*gid, dir));
    }
    group_dirs.sort_by_key(|(id, _)| *id);

    let leaves: Vec<(u32, u16, &[u8])> = icons
        .iter()
        .map(|(id, b)| (3u32, *id, *b))
        .chain(group_dirs.iter().map(|(id, d)| (14u32, *id, d.as_slice())))
        .collect();
    let n_icons = icons.len();
    let n_groups = group_dirs.len();

    let root = 0usize;
    let icon_type = root + 16 + 2 * 8;
    let group_type = icon_type + 16 + 8 * n_icons;
    let lang_base = group_type + 16 + 8 * n_groups;
    let data_base = lang_base + 24 * leaves.len();
    let mut payload_off = data_base + 16 * leaves.len();
    let mut buf = vec![0u8; payload_off];

    let dir_header = |buf: &mut Vec<u8>, at: usize, ids: usize| {
        put16(buf, at + 14, ids as u16);
    };
    dir_header(&mut buf, root, 2);
    put32(&mut buf, root + 16, 3);
    put32(&mut buf, root + 20, 0x8000_0000 | icon_type as u32);
    put32(&mut buf, root + 24, 14);
    put32(&mut buf, root + 28, 0x8000_0000 | group_type as u32);
    dir_header(&mut buf, icon_type, n_icons);
    dir_header(&mut buf, group_type, n_groups);

    for (i, (ty, id, bytes)) in leaves.iter().enumerate() {
        let (type_dir, slot) = if *ty == 3 { (icon_type, i) } else { (group_type, i - n_icons) };
        let e = type_dir + 16 + 8 * slot;
        let lang = lang_base + 24 * i;
        put32(&mut buf, e, *id as u32);
        put32(&mut buf, e + 4, 0x8000_0000 | lang as u32);
        dir_header(&mut buf, lang, 1);
        let data = data_base + 16 * i;
        put32(&mut buf, lang + 16, LANG);
        put32(&mut buf, lang + 20, data as u32);

        payload_off = align_up(payload_off, 4);
        buf.resize(payload_off, 0);
        put32(&mut buf, data, section_rva + payload_off as u32);
        put32(&mut buf, data + 4, bytes.len() as u32);
        buf.extend_from_slice(bytes);
        payload_off += bytes.len();
    }
    buf
}

/// Encodes `icon` as an ICO-style DIB (doubled height, XOR + AND masks).
///
/// Pixels with alpha 0 set the AND-mask bit. For 1/4/8 bpp the palette is built
/// from the distinct RGB values in first-seen order and must fit the depth.
pub fn encode_dib(icon: &IconRaster, bpp: u16) -> Vec<u8> {
    assert!(matches!(bpp, 1 | 4 | 8 | 24 | 32), "unsupported bpp {bpp}");
    let (w, h) = (icon.width as usize, icon.height as usize);
    let mut palette: Vec<[u8; 3]> = Vec::new();
    if bpp <= 8 {
        for p in icon.pixels.chunks_exact(4) {
            let rgb = [p[0], p[1], p[2]];
            if !palette.contains(&rgb) {
                palette.push(rgb);
            }
        }
        assert!(palette.len() <= 1 << bpp, "{} colors do not fit {bpp} bpp", palette.len());
    }

    let mut out = Vec::new();
    out.extend(40u32.to_le_bytes());
    out.extend((w as i32).to_le_bytes());
    out.extend((2 * h as i32).to_le_bytes());
    out.extend(1u16.to_le_bytes());
    out.extend(bpp.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out.extend([0u8; 8]);
    out.extend((palette.len() as u32).to_le_bytes());
    out.extend(0u32.to_le_bytes());
    for c in &palette {
        out.extend([c[2], c[1], c[0], 0]);
    }

    let xor_stride = (w * bpp as usize).div_ceil(32) * 4;
    for y in (0..h).rev() {
        let mut row = vec![0u8; xor_stride];
        for x in 0..w {
            let p = icon.pixel(x as u32, y as u32);
            match bpp {
                32 => row[4 * x..4 * x + 4].copy_from_slice(&[p[2], p[1], p[0], p[3]]),
                24 => row[3 * x..3 * x + 3].copy_from_slice(&[p[2], p[1], p[0]]),
                _ => {
                    let idx = palette.iter().position(|c| c == &[p[0], p[1], p[2]]).unwrap() as u8;
                    let bits = bpp as usize;
                    let bit_off = x * bits;
                    row[bit_off / 8] |= idx << (8 - bits - bit_off % 8);
                }
            }
        }
        out.extend(row);
    }
    let and_stride = w.div_ceil(32) * 4;
    for y in (0..h).rev() {
        let mut row = vec![0u8; and_stride];
        for x in 0..w {
            if icon.pixel(x as u32, y as u32)[3] == 0 {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend(row);
    }
    out
}

/// Encodes `icon` as an 8-bit RGBA PNG.
pub fn encode_png(icon: &IconRaster) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, icon.width, icon.height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(&icon.pixels).expect("png data");
    }
    out
}

/// Builds a standalone `.ico` file.
#[derive(Debug, Default)]
pub struct IcoBuilder {
    entries: Vec<(u32, u32, u16, Vec<u8>)>,
}

impl IcoBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dib(mut self, icon: &IconRaster, bpp: u16) -> Self {
        self.entries.push((icon.width, icon.height, bpp, encode_dib(icon, bpp)));
        self
    }

    pub fn png(mut self, icon: &IconRaster) -> Self {
        self.entries.push((icon.width, icon.height, 32, encode_png(icon)));
        self
    }

    pub fn raw(mut self, width: u32, height: u32, payload: Vec<u8>) -> Self {
        self.entries.push((width, height, 32, payload));
        self
    }

    pub fn build(self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(0u16.to_le_bytes());
        out.extend(1u16.to_le_bytes());
        out.extend((self.entries.len() as u16).to_le_bytes());
        let mut offset = 6 + 16 * self.entries.len();
        for (w, h, bpp, data) in &self.entries {
            out.push(if *w >= 256 { 0 } else { *w as u8 });
            out.push(if *h >= 256 { 0 } else { *h as u8 });
            out.extend([0u8, 0]);
            out.extend(1u16.to_le_bytes());
            out.extend(bpp.to_le_bytes());
            out.extend((data.len() as u32).to_le_bytes());
            out.extend((offset as u32).to_le_bytes());
            offset += data.len();
        }
        for (_, _, _, data) in self.entries {
            out.extend(data);
        }
        out
    }
}
