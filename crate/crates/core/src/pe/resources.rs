//! Resource-directory walk for `RT_GROUP_ICON` / `RT_ICON`.

use std::collections::BTreeMap;

use super::icon::{decode_icon_image, IconRaster};
use super::PeSummary;

pub const RT_ICON: u32 = 3;
pub const RT_GROUP_ICON: u32 = 14;

const DIR_HEADER_LEN: usize = 16;
const DIR_ENTRY_LEN: usize = 8;
const DATA_ENTRY_LEN: usize = 16;
const HIGH_BIT: u32 = 0x8000_0000;

/// Icons found in a PE plus a tally of payloads that failed to decode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IconExtraction {
    pub icons: Vec<IconRaster>,
    pub decode_failures: usize,
    pub failure_reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ResourceKey {
    Id(u32),
    Name(String),
}

enum Target {
    Directory(usize),
    Data(usize),
}

struct ResourceView<'a> {
    pe: &'a PeSummary,
    section: &'a [u8],
}

impl<'a> ResourceView<'a> {
    fn u16_at(&self, off: usize) -> Option<u16> {
        self.section.get(off..off + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_at(&self, off: usize) -> Option<u32> {
        self.section.get(off..off + 4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn entries(&self, dir: usize) -> Option<Vec<(ResourceKey, Target)>> {
        let named = self.u16_at(dir + 12)? as usize;
        let ids = self.u16_at(dir + 14)? as usize;
        let mut out = Vec::with_capacity(named + ids);
        for i in 0..named + ids {
            let e = dir + DIR_HEADER_LEN + i * DIR_ENTRY_LEN;
            let name = self.u32_at(e)?;
            let target = self.u32_at(e + 4)?;
            let key = if name & HIGH_BIT != 0 {
                ResourceKey::Name(self.name_at((name & !HIGH_BIT) as usize)?)
            } else {
                ResourceKey::Id(name & 0xffff)
            };
            let target = if target & HIGH_BIT != 0 {
                Target::Directory((target & !HIGH_BIT) as usize)
            } else {
                Target::Data(target as usize)
            };
            out.push((key, target));
        }
        Some(out)
    }

    fn name_at(&self, off: usize) -> Option<String> {
        let len = self.u16_at(off)? as usize;
        let units: Vec<u16> = (0..len).map(|i| self.u16_at(off + 2 + 2 * i)).collect::<Option<_>>()?;
        Some(String::from_utf16_lossy(&units))
    }

    fn data(&self, entry: usize) -> Option<&'a [u8]> {
        if self.section.len() < entry + DATA_ENTRY_LEN {
            return None;
        }
        let rva = self.u32_at(entry)?;
        let size = self.u32_at(entry + 4)?;
        self.pe.rva_slice(rva, size)
    }

    /// First data leaf below `target`, descending at most `depth` directory levels.
    fn first_leaf(&self, target: &Target, depth: usize) -> Option<&'a [u8]> {
        match target {
            Target::Data(off) => self.data(*off),
            Target::Directory(_) if depth == 0 => None,
            Target::Directory(off) => self.entries(*off)?.iter().find_map(|(_, t)| self.first_leaf(t, depth - 1)),
        }
    }

    /// Name-level entries of one resource type mapped to their first payload.
    fn resources_of_type(&self, type_id: u32) -> BTreeMap<ResourceKey, Option<&'a [u8]>> {
        let mut out = BTreeMap::new();
        let Some(types) = self.entries(0) else { return out };
        for (key, target) in types {
            if key != ResourceKey::Id(type_id) {
                continue;
            }
            let Target::Directory(names_dir) = target else { continue };
            for (name, t) in self.entries(names_dir).unwrap_or_default() {
                out.entry(name).or_insert_with(|| self.first_leaf(&t, 1));
            }
        }
        out
    }
}

/// Walks the resource tree and decodes every icon referenced by an icon group.
///
/// Groups are visited in key order (numeric ids ascending, then named groups),
/// entries in directory order. A PE without any group directory falls back to
/// decoding its `RT_ICON` entries directly. Missing resources are not an error.
pub fn extract_icons(pe: &PeSummary) -> IconExtraction {
    let mut out = IconExtraction::default();
    let Some(dir) = pe.resource_directory else { return out };
    let Some(section) = pe.rva_tail(dir.virtual_address) else { return out };
    let view = ResourceView { pe, section };

    let icons = view.resources_of_type(RT_ICON);
    let groups = view.resources_of_type(RT_GROUP_ICON);

    let fail = |out: &mut IconExtraction, reason: String| {
        out.decode_failures += 1;
        out.failure_reasons.push(reason);
    };
    let decode_into = |out: &mut IconExtraction, payload: Option<&[u8]>, what: String| match payload {
        None => fail(out, format!("{what}: payload not backed by file data")),
        Some(bytes) => match decode_icon_image(bytes) {
            Ok(icon) => out.icons.push(icon),
            Err(e) => fail(out, format!("{what}: {e}")),
        },
    };

    if groups.is_empty() {
        for (key, payload) in &icons {
            decode_into(&mut out, *payload, format!("icon {key:?}"));
        }
        return out;
    }

    for (group_key, payload) in &groups {
        let Some(group) = payload.filter(|g| g.len() >= 6) else {
            decode_into(&mut out, None, format!("group {group_key:?}"));
            continue;
        };
        let count = u16::from_le_bytes([group[4], group[5]]) as usize;
        for i in 0..count {
            let e = 6 + 14 * i;
            let Some(entry) = group.get(e..e + 14) else {
                decode_into(&mut out, None, format!("group {group_key:?} entry {i}"));
                break;
            };
            let id = u16::from_le_bytes([entry[12], entry[13]]) as u32;
            let payload = icons.get(&ResourceKey::Id(id)).copied().flatten();
            decode_into(&mut out, payload, format!("group {group_key:?} icon {id}"));
        }
    }
    out
}
