use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum InstanceClass {
    Road = 0,
    Building = 1,
}

impl InstanceClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(InstanceClass::Road),
            1 => Some(InstanceClass::Building),
            _ => None,
        }
    }
}

/// Per-pixel instance labels (0 = background) plus a class per label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    classes: BTreeMap<u32, InstanceClass>,
}

impl InstanceMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>, classes: BTreeMap<u32, InstanceClass>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("instance map must be at least 1x1".into()));
        }
        if labels.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        if classes.contains_key(&0) {
            return Err(Error::Consistency("background label 0 has a class entry".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 0 && !classes.contains_key(&l)) {
            return Err(Error::Consistency(format!("label {l} has no class entry")));
        }
        Ok(InstanceMap {
            height,
            width,
            labels,
            classes,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        InstanceMap::new(height, width, vec![0; height * width], BTreeMap::new())
    }

    /// Every nonzero label gets `class`.
    pub fn with_uniform_class(height: usize, width: usize, labels: Vec<u32>, class: InstanceClass) -> Result<Self> {
        let classes = labels.iter().filter(|&&l| l != 0).map(|&l| (l, class)).collect();
        InstanceMap::new(height, width, labels, classes)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn classes(&self) -> &BTreeMap<u32, InstanceClass> {
        &self.classes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn class_of(&self, label: u32) -> Option<InstanceClass> {
        self.classes.get(&label).copied()
    }

    /// Nonzero labels that occur in the raster.
    pub fn label_set(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().filter(|&l| l != 0).collect()
    }

    /// Pixel count per nonzero label.
    pub fn areas(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for &l in &self.labels {
            if l != 0 {
                *m.entry(l).or_insert(0) += 1;
            }
        }
        m
    }

    /// Window starting at `(x0, y0)`; pixels beyond the map read as background.
    /// Class entries are restricted to labels in the window.
    pub fn crop_padded(&self, x0: usize, y0: usize, width: usize, height: usize) -> InstanceMap {
        let mut labels = vec![0u32; width * height];
        for y in 0..height.min(self.height.saturating_sub(y0)) {
            for x in 0..width.min(self.width.saturating_sub(x0)) {
                labels[y * width + x] = self.get(x0 + x, y0 + y);
            }
        }
        let classes = labels
            .iter()
            .filter(|&&l| l != 0)
            .map(|&l| (l, self.classes[&l]))
            .collect();
        InstanceMap {
            height,
            width,
            labels,
            classes,
        }
    }

    /// Drops class entries for labels that no longer occur.
    pub(crate) fn prune_classes(&mut self) {
        let present = self.label_set();
        self.classes.retain(|l, _| present.contains(l));
    }

    pub fn encode_imap(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 5 * self.classes.len() + 4 * self.labels.len());
        out.extend_from_slice(IMAP_MAGIC);
        for v in [IMAP_VERSION, self.height as u32, self.width as u32, self.classes.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (&l, &c) in &self.classes {
            out.extend_from_slice(&l.to_le_bytes());
            out.push(c as u8);
        }
        for &l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn decode_imap(bytes: &[u8]) -> Result<InstanceMap> {
        decode_imap(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_imap()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<InstanceMap> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_imap(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

const IMAP_MAGIC: &[u8; 4] = b"IMAP";
const IMAP_VERSION: u32 = 1;
const IMAP_HEADER: usize = 20;

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
}

fn decode_imap(bytes: &[u8]) -> Result<InstanceMap> {
    if bytes.len() < IMAP_HEADER {
        return Err(Error::Format(format!("IMAP header needs {IMAP_HEADER} bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != IMAP_MAGIC {
        return Err(Error::Format(format!("bad IMAP magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let version = u32_at(bytes, 4);
    if version != IMAP_VERSION {
        return Err(Error::Format(format!("unsupported IMAP version {version}")));
    }
    let height = u32_at(bytes, 8) as usize;
    let width = u32_at(bytes, 12) as usize;
    let n_classes = u32_at(bytes, 16) as usize;
    if height == 0 || width == 0 {
        return Err(Error::Format(format!("IMAP dimensions {width}x{height}")));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(n_classes.checked_mul(5)?))
        .and_then(|n| n.checked_add(IMAP_HEADER))
        .ok_or_else(|| Error::Format(format!("IMAP dimensions {width}x{height} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::Format(format!(
            "truncated IMAP payload: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "IMAP has {} trailing bytes",
            bytes.len() - expected
        )));
    }
    let mut classes = BTreeMap::new();
    let mut off = IMAP_HEADER;
    for _ in 0..n_classes {
        let label = u32_at(bytes, off);
        let class = InstanceClass::from_u8(bytes[off + 4])
            .ok_or_else(|| Error::Format(format!("unknown class id {} for label {label}", bytes[off + 4])))?;
        if label == 0 {
            return Err(Error::Format("class table lists background label 0".into()));
        }
        if classes.insert(label, class).is_some() {
            return Err(Error::Format(format!("label {label} listed twice in class table")));
        }
        off += 5;
    }
    let labels = bytes[off..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    InstanceMap::new(height, width, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> InstanceMap {
        let labels = vec![0, 1, 1, 7, 0, 7];
        let classes = BTreeMap::from([(1, InstanceClass::Road), (7, InstanceClass::Building)]);
        InstanceMap::new(2, 3, labels, classes).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let bytes = m.encode_imap();
        assert_eq!(InstanceMap::decode_imap(&bytes).unwrap(), m);
        assert_eq!(InstanceMap::decode_imap(&bytes).unwrap().encode_imap(), bytes);
    }

    #[test]
    fn header_payload_mismatch() {
        let mut bytes = sample().encode_imap();
        bytes.pop();
        assert!(matches!(InstanceMap::decode_imap(&bytes), Err(Error::Format(_))));
        let mut bytes = sample().encode_imap();
        bytes.push(0);
        assert!(matches!(InstanceMap::decode_imap(&bytes), Err(Error::Format(_))));
        let mut bytes = sample().encode_imap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(InstanceMap::decode_imap(&bytes), Err(Error::Format(_))));
        let mut bytes = sample().encode_imap();
        bytes[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(InstanceMap::decode_imap(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn missing_class_is_consistency_error() {
        let m = sample();
        let mut bytes = m.encode_imap();
        // drop label 7's class entry and fix the table length
        bytes.drain(25..30);
        bytes[16..20].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(InstanceMap::decode_imap(&bytes), Err(Error::Consistency(_))));
    }

    #[test]
    fn crop_padded_restricts_classes() {
        let m = sample();
        let c = m.crop_padded(0, 1, 3, 3);
        assert_eq!(c.labels(), &[7, 0, 7, 0, 0, 0, 0, 0, 0]);
        assert_eq!(c.classes().len(), 1);
    }

    proptest! {
        #[test]
        fn imap_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let labels: Vec<u32> = (0..h * w).map(|i| ((seed >> (i % 60)) as u32 ^ i as u32) % 5 * 1000).collect();
            let m = InstanceMap::with_uniform_class(h, w, labels, InstanceClass::Building).unwrap();
            let bytes = m.encode_imap();
            let back = InstanceMap::decode_imap(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.encode_imap(), bytes);
        }
    }
}
