//! PE parsing, section features and icon extraction.
//!
//! Only the parts of the PE/COFF layout needed here are read: the DOS header's
//! `e_lfanew`, the COFF header, the optional-header data directories (for the
//! resource directory, index 2) and the section table.

mod icon;
mod resources;

pub use icon::{decode_ico_file, decode_icon_image, select_primary_icon, IconError, IconRaster, MAX_ICON_SIDE};
pub use resources::{extract_icons, IconExtraction, RT_GROUP_ICON, RT_ICON};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeError {
    #[error("not a PE file: {0}")]
    NotPe(&'static str),
    #[error("truncated PE: {0}")]
    Truncated(String),
    #[error("malformed PE header: {0}")]
    MalformedHeader(String),
}

const IMAGE_NT_OPTIONAL_HDR32_MAGIC: u16 = 0x10b;
const IMAGE_NT_OPTIONAL_HDR64_MAGIC: u16 = 0x20b;
const IMAGE_DIRECTORY_ENTRY_RESOURCE: usize = 2;
const COFF_HEADER_LEN: usize = 20;
const SECTION_HEADER_LEN: usize = 40;

/// An `(rva, size)` pair from the optional header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDirectory {
    pub virtual_address: u32,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionRecord {
    /// Raw 8-byte name with trailing NULs removed.
    pub name: String,
    pub virtual_address: u32,
    pub misc_virtual_size: u32,
    pub size_of_raw_data: u32,
    pub pointer_to_raw_data: u32,
    pub raw_bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeSummary {
    /// In section-table order.
    pub sections: Vec<SectionRecord>,
    pub resource_directory: Option<DataDirectory>,
    pub is_pe32_plus: bool,
    pub is_valid_pe: bool,
}

impl PeSummary {
    /// First section whose name matches exactly.
    pub fn section(&self, name: &str) -> Option<&SectionRecord> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Resolves `len` bytes at `rva` from section raw data. `None` when the range
    /// is not backed by file bytes.
    pub fn rva_slice(&self, rva: u32, len: u32) -> Option<&[u8]> {
        let sec = self.section_for_rva(rva)?;
        let start = (rva - sec.virtual_address) as usize;
        let end = start.checked_add(len as usize)?;
        sec.raw_bytes.get(start..end)
    }

    /// Bytes from `rva` to the end of the raw data of the section containing it.
    pub fn rva_tail(&self, rva: u32) -> Option<&[u8]> {
        let sec = self.section_for_rva(rva)?;
        sec.raw_bytes.get((rva - sec.virtual_address) as usize..)
    }

    fn section_for_rva(&self, rva: u32) -> Option<&SectionRecord> {
        self.sections.iter().find(|s| {
            let extent = s.misc_virtual_size.max(s.size_of_raw_data) as u64;
            rva >= s.virtual_address && (rva as u64) < s.virtual_address as u64 + extent
        })
    }
}

fn read_u16(bytes: &[u8], off: usize) -> Option<u16> {
    bytes.get(off..off.checked_add(2)?).map(|b| u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(bytes: &[u8], off: usize) -> Option<u32> {
    bytes.get(off..off.checked_add(4)?).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses the headers and section table of a PE image.
pub fn parse_pe(bytes: &[u8]) -> Result<PeSummary, PeError> {
    if bytes.len() < 2 || &bytes[..2] != b"MZ" {
        return Err(PeError::NotPe("missing MZ signature"));
    }
    let e_lfanew =
        read_u32(bytes, 0x3c).ok_or_else(|| PeError::Truncated("DOS header shorter than 64 bytes".into()))? as usize;
    let sig = bytes
        .get(e_lfanew..e_lfanew.saturating_add(4))
        .ok_or_else(|| PeError::Truncated(format!("e_lfanew {e_lfanew:#x} points past end of file")))?;
    if sig != b"PE\0\0" {
        return Err(PeError::NotPe("missing PE signature"));
    }

    let coff = e_lfanew + 4;
    if bytes.len() < coff + COFF_HEADER_LEN {
        return Err(PeError::Truncated("COFF header".into()));
    }
    let num_sections = read_u16(bytes, coff + 2).unwrap() as usize;
    let opt_size = read_u16(bytes, coff + 16).unwrap() as usize;
    let opt = coff + COFF_HEADER_LEN;
    if bytes.len() < opt + opt_size {
        return Err(PeError::Truncated("optional header".into()));
    }
    if opt_size < 2 {
        return Err(PeError::MalformedHeader(format!("SizeOfOptionalHeader {opt_size} too small")));
    }
    let magic = read_u16(bytes, opt).unwrap();
    let (count_off, dirs_off) = match magic {
        IMAGE_NT_OPTIONAL_HDR32_MAGIC => (92, 96),
        IMAGE_NT_OPTIONAL_HDR64_MAGIC => (108, 112),
        other => return Err(PeError::MalformedHeader(format!("unknown optional header magic {other:#x}"))),
    };

    let resource_directory = if opt_size >= count_off + 4 {
        let count = read_u32(bytes, opt + count_off).unwrap() as usize;
        let entry = dirs_off + IMAGE_DIRECTORY_ENTRY_RESOURCE * 8;
        if count > IMAGE_DIRECTORY_ENTRY_RESOURCE && opt_size >= entry + 8 {
            let virtual_address = read_u32(bytes, opt + entry).unwrap();
            let size = read_u32(bytes, opt + entry + 4).unwrap();
            (virtual_address != 0 && size != 0).then_some(DataDirectory { virtual_address, size })
        } else {
            None
        }
    } else {
        None
    };

    let table = opt + opt_size;
    let table_end = num_sections
        .checked_mul(SECTION_HEADER_LEN)
        .and_then(|n| n.checked_add(table))
        .ok_or_else(|| PeError::MalformedHeader("section table size overflows".into()))?;
    if bytes.len() < table_end {
        return Err(PeError::Truncated(format!("section table of {num_sections} entries")));
    }

    let mut sections = Vec::with_capacity(num_sections);
    for i in 0..num_sections {
        let h = table + i * SECTION_HEADER_LEN;
        let raw_name = &bytes[h..h + 8];
        let name_len = raw_name.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
        let name = String::from_utf8_lossy(&raw_name[..name_len]).into_owned();
        let misc_virtual_size = read_u32(bytes, h + 8).unwrap();
        let virtual_address = read_u32(bytes, h + 12).unwrap();
        let size_of_raw_data = read_u32(bytes, h + 16).unwrap();
        let pointer_to_raw_data = read_u32(bytes, h + 20).unwrap();

        let raw_bytes = if size_of_raw_data == 0 {
            Vec::new()
        } else {
            if pointer_to_raw_data == 0 {
                return Err(PeError::MalformedHeader(format!(
                    "section {name:?} has {size_of_raw_data} raw bytes but no file pointer"
                )));
            }
            let start = pointer_to_raw_data as usize;
            let end = start
                .checked_add(size_of_raw_data as usize)
                .ok_or_else(|| PeError::MalformedHeader(format!("section {name:?} range overflows")))?;
            bytes
                .get(start..end)
                .ok_or_else(|| {
                    PeError::Truncated(format!(
                        "section {name:?} data {start:#x}..{end:#x} past end of file ({:#x})",
                        bytes.len()
                    ))
                })?
                .to_vec()
        };
        sections.push(SectionRecord {
            name,
            virtual_address,
            misc_virtual_size,
            size_of_raw_data,
            pointer_to_raw_data,
            raw_bytes,
        });
    }

    Ok(PeSummary {
        sections,
        resource_directory,
        is_pe32_plus: magic == IMAGE_NT_OPTIONAL_HDR64_MAGIC,
        is_valid_pe: true,
    })
}

/// Shannon entropy of the byte histogram in bits per byte; 0 for empty input.
pub fn section_entropy(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        // fold from +0.0: `sum` starts at -0.0
        .fold(0.0, |acc, v| acc + v);
    h.clamp(0.0, 8.0)
}

/// The sections feeding [`PefileFeatureVector`], in column order.
pub const FEATURE_SECTIONS: [&str; 3] = [".text", ".data", ".rsrc"];

/// (.text, .data, .rsrc) × (entropy, Misc_VirtualSize, SizeOfRawData).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PefileFeatureVector(pub [f64; 9]);

impl PefileFeatureVector {
    pub const COLUMNS: [&'static str; 9] = [
        "text_entropy",
        "text_vsize",
        "text_rawsize",
        "data_entropy",
        "data_vsize",
        "data_rawsize",
        "rsrc_entropy",
        "rsrc_vsize",
        "rsrc_rawsize",
    ];

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Computes the nine section features. A missing section contributes zeros.
pub fn pefile_features(pe: &PeSummary) -> PefileFeatureVector {
    let mut out = [0.0; 9];
    for (i, name) in FEATURE_SECTIONS.iter().enumerate() {
        if let Some(sec) = pe.section(name) {
            out[3 * i] = section_entropy(&sec.raw_bytes);
            out[3 * i + 1] = sec.misc_virtual_size as f64;
            out[3 * i + 2] = sec.size_of_raw_data as f64;
        }
    }
    PefileFeatureVector(out)
}
