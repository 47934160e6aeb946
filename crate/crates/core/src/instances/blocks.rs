//! Building blocks: unions of touching building units, holes filled, small
//! blocks dropped.

use std::path::Path;

use super::components::label_components;
use super::map::{InstanceClass, InstanceMap};
use crate::error::{Error, Result};

pub const DEFAULT_AREA_THRESHOLD_M2: f64 = 500.0;
/// 100 m² at 0.4 m/px.
pub const DEFAULT_HOLE_THRESHOLD_PX: usize = 625;

/// Dense block labels `1..=n` (0 = not a block).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    areas_m2: Vec<f64>,
    resolution: f64,
}

impl BlockMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.areas_m2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas_m2.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Area of block `id` (1-based) in m².
    pub fn area_m2(&self, id: u32) -> Option<f64> {
        id.checked_sub(1).and_then(|i| self.areas_m2.get(i as usize)).copied()
    }

    /// Wraps existing block labels; areas are recomputed from `resolution`.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>, resolution: f64) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Dimension("block label count does not match dimensions".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
        }
        let n = labels.iter().copied().max().unwrap_or(0) as usize;
        let mut px = vec![0usize; n];
        for &l in &labels {
            if l != 0 {
                px[l as usize - 1] += 1;
            }
        }
        if let Some(i) = px.iter().position(|&c| c == 0) {
            return Err(Error::Consistency(format!("block ids are not dense: {} is missing", i + 1)));
        }
        let areas_m2 = px.iter().map(|&c| c as f64 * resolution * resolution).collect();
        Ok(BlockMap {
            height,
            width,
            labels,
            areas_m2,
            resolution,
        })
    }

    pub fn to_instance_map(&self) -> InstanceMap {
        InstanceMap::with_uniform_class(self.height, self.width, self.labels.clone(), InstanceClass::Building)
            .expect("block labels are consistent")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_instance_map().save(path)
    }

    pub fn load(path: impl AsRef<Path>, resolution: f64) -> Result<Self> {
        let m = InstanceMap::load(path)?;
        BlockMap::from_labels(m.height(), m.width(), m.labels().to_vec(), resolution)
    }
}

/// Unions building-unit pixels into 4-connected blocks, fills enclosed
/// background holes smaller than `hole_threshold` pixels that border a single
/// block, and removes blocks under `area_threshold` m².
pub fn aggregate_blocks(inst: &InstanceMap, resolution: f64, area_threshold: f64, hole_threshold: usize) -> Result<BlockMap> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
    }
    let (w, h) = (inst.width(), inst.height());
    let building: Vec<bool> = inst
        .labels()
        .iter()
        .map(|&l| l != 0 && inst.class_of(l) == Some(InstanceClass::Building))
        .collect();
    let (mut comp, n) = label_components(&building, w, h);

    let background: Vec<bool> = building.iter().map(|b| !b).collect();
    let (holes, n_holes) = label_components(&background, w, h);
    let mut area = vec![0usize; n_holes + 1];
    let mut border = vec![false; n_holes + 1];
    // 0 = no neighbor yet, u32::MAX = more than one block
    let mut neighbor = vec![0u32; n_holes + 1];
    for y in 0..h {
        for x in 0..w {
            let hid = holes[y * w + x] as usize;
            if hid == 0 {
                continue;
            }
            area[hid] += 1;
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                border[hid] = true;
            }
            let mut see = |j: usize| {
                let b = comp[j];
                if b != 0 && neighbor[hid] != b {
                    neighbor[hid] = if neighbor[hid] == 0 { b } else { u32::MAX };
                }
            };
            if x > 0 {
                see(y * w + x - 1);
            }
            if x + 1 < w {
                see(y * w + x + 1);
            }
            if y > 0 {
                see((y - 1) * w + x);
            }
            if y + 1 < h {
                see((y + 1) * w + x);
            }
        }
    }
    for (i, c) in comp.iter_mut().enumerate() {
        let hid = holes[i] as usize;
        if hid != 0 && !border[hid] && area[hid] < hole_threshold && neighbor[hid] != 0 && neighbor[hid] != u32::MAX {
            *c = neighbor[hid];
        }
    }

    let mut px = vec![0usize; n + 1];
    for &c in &comp {
        px[c as usize] += 1;
    }
    let px_area = resolution * resolution;
    let mut dense = vec![0u32; n + 1];
    let mut next = 0u32;
    for id in 1..=n {
        if px[id] as f64 * px_area >= area_threshold {
            next += 1;
            dense[id] = next;
        }
    }
    let labels = comp.iter().map(|&c| dense[c as usize]).collect();
    BlockMap::from_labels(h, w, labels, resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paint(h: usize, w: usize, rects: &[(usize, usize, usize, usize)]) -> InstanceMap {
        let mut labels = vec![0u32; h * w];
        for (k, &(x0, y0, x1, y1)) in rects.iter().enumerate() {
            for y in y0..y1 {
                for x in x0..x1 {
                    labels[y * w + x] = k as u32 + 1;
                }
            }
        }
        InstanceMap::with_uniform_class(h, w, labels, InstanceClass::Building).unwrap()
    }

    #[test]
    fn empty_map() {
        let m = InstanceMap::empty(10, 10).unwrap();
        let b = aggregate_blocks(&m, 0.4, 500.0, 625).unwrap();
        assert!(b.is_empty());
        assert!(b.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn touching_instances_form_one_block() {
        let m = paint(100, 120, &[(10, 10, 50, 50), (50, 10, 90, 50)]);
        let b = aggregate_blocks(&m, 0.4, 500.0, 625).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b.area_m2(1).unwrap() - 512.0).abs() < 1e-9);
    }

    #[test]
    fn small_block_removed() {
        let m = paint(100, 100, &[(10, 10, 60, 60)]);
        let b = aggregate_blocks(&m, 0.4, 500.0, 625).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn roads_are_not_blocks() {
        let labels = vec![1; 100 * 100];
        let m = InstanceMap::with_uniform_class(100, 100, labels, InstanceClass::Road).unwrap();
        assert!(aggregate_blocks(&m, 0.4, 0.0, 625).unwrap().is_empty());
    }

    #[test]
    fn small_holes_filled_large_kept() {
        // ring of buildings around a 5x5 courtyard, and a second ring around a 30x30 one
        let mut rects = vec![(0, 0, 15, 5), (0, 10, 15, 15), (0, 5, 5, 10), (10, 5, 15, 10)];
        rects.extend([(20, 0, 60, 5), (20, 35, 60, 40), (20, 5, 25, 35), (55, 5, 60, 35)]);
        let m = paint(40, 60, &rects);
        let b = aggregate_blocks(&m, 1.0, 0.0, 625).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(7, 7), 1);
        let b = aggregate_blocks(&m, 1.0, 0.0, 100).unwrap();
        assert_eq!(b.get(7, 7), 1);
        assert_eq!(b.get(40, 20), 0);
        let b = aggregate_blocks(&m, 1.0, 0.0, 10).unwrap();
        assert_eq!(b.get(7, 7), 0);
    }

    #[test]
    fn hole_between_two_blocks_stays() {
        // two L-shapes meeting only diagonally enclose a 3x3 gap
        let m = paint(5, 5, &[(0, 0, 4, 1), (0, 1, 1, 4), (4, 1, 5, 5), (1, 4, 4, 5)]);
        let b = aggregate_blocks(&m, 1.0, 0.0, 625).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(2, 2), 0);
    }
}
