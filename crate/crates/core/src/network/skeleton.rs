//! Street skeletons from block maps.

use crate::field::ValidityMask;
use crate::instances::BlockMap;

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonOutput {
    pub road: ValidityMask,
    pub skeleton: ValidityMask,
    pub warnings: Vec<String>,
}

/// Neighbours in the order P2..P9 (N, NE, E, SE, S, SW, W, NW); outside is unset.
fn ring(m: &ValidityMask, x: usize, y: usize) -> [bool; 8] {
    const D: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];
    let (w, h) = (m.width() as i64, m.height() as i64);
    D.map(|(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as usize, ny as usize)
    })
}

fn morph(m: &ValidityMask, erode: bool) -> ValidityMask {
    let (w, h) = (m.width(), m.height());
    let mut out = m.clone();
    for y in 0..h {
        for x in 0..w {
            // only in-bounds neighbours take part, so the sheet edge is neutral
            let mut any = false;
            let mut all = true;
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let v = m.get(nx, ny);
                    any |= v;
                    all &= v;
                }
            }
            out.set(x, y, if erode { all } else { any });
        }
    }
    out
}

/// Morphological opening with a 3x3 square.
pub fn open3(m: &ValidityMask) -> ValidityMask {
    morph(&morph(m, true), false)
}

/// Zhang-Suen thinning to an 8-connected, one pixel wide skeleton.
pub fn zhang_suen(m: &ValidityMask) -> ValidityMask {
    let mut img = m.clone();
    let (w, h) = (m.width(), m.height());
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut kill = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !img.get(x, y) {
                        continue;
                    }
                    let p = ring(&img, x, y);
                    let b = p.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
                    let ok = if step == 0 {
                        !(n && e && s) && !(e && s && wst)
                    } else {
                        !(n && e && wst) && !(n && s && wst)
                    };
                    if ok {
                        kill.push((x, y));
                    }
                }
            }
            changed |= !kill.is_empty();
            for (x, y) in kill {
                img.set(x, y, false);
            }
        }
        if !changed {
            break;
        }
    }
    img
}

/// Connected groups among the set ring positions. Consecutive positions touch,
/// and so do orthogonal positions 90 degrees apart (N and E, ...).
fn ring_groups(p: &[bool; 8]) -> usize {
    let mut seen = [false; 8];
    let mut groups = 0;
    for s in 0..8 {
        if !p[s] || seen[s] {
            continue;
        }
        groups += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let mut next = vec![(i + 1) % 8, (i + 7) % 8];
            if i % 2 == 0 {
                next.extend([(i + 2) % 8, (i + 6) % 8]);
            }
            for j in next {
                if p[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    groups
}

/// Removes inner corner pixels of L-shaped steps: pixels with two orthogonal
/// neighbours 90 degrees apart whose removal keeps the neighbourhood
/// connected. Visits pixels in raster order.
pub fn prune_corners(m: &ValidityMask) -> ValidityMask {
    let mut img = m.clone();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if !img.get(x, y) {
                continue;
            }
            let p = ring(&img, x, y);
            let corner = (0..4).any(|k| p[2 * k] && p[(2 * k + 2) % 8]);
            let n = p.iter().filter(|&&v| v).count();
            if corner && n <= 6 && ring_groups(&p) == 1 {
                img.set(x, y, false);
            }
        }
    }
    img
}

/// Road mask (complement of blocks, opened) and its skeleton.
pub fn road_mask_and_skeleton(blocks: &BlockMap) -> SkeletonOutput {
    let (h, w) = (blocks.height(), blocks.width());
    let bits: Vec<bool> = blocks.labels().iter().map(|&l| l == 0).collect();
    let raw = ValidityMask::new(h, w, bits).expect("block map dimensions");
    let mut warnings = Vec::new();
    let road = open3(&raw);
    if blocks.is_empty() || road.count() == 0 {
        let msg = if blocks.is_empty() {
            "block map has no blocks; street network is empty"
        } else {
            "no road pixels between blocks; street network is empty"
        };
        log::warn!("{msg}");
        warnings.push(msg.to_string());
        return SkeletonOutput {
            road,
            skeleton: ValidityMask::filled(h, w, false),
            warnings,
        };
    }
    let skeleton = prune_corners(&zhang_suen(&road));
    SkeletonOutput {
        road,
        skeleton,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(h: usize, w: usize, f: impl Fn(usize, usize) -> u32) -> BlockMap {
        let labels = (0..h * w).map(|i| f(i % w, i / w)).collect();
        BlockMap::from_labels(h, w, labels, 1.0).unwrap()
    }

    fn neighbours(m: &ValidityMask, x: usize, y: usize) -> usize {
        ring(m, x, y).iter().filter(|&&v| v).count()
    }

    #[test]
    fn straight_street_centered() {
        // street occupies columns 20..30 (centreline 24.5)
        let b = blocks(40, 50, |x, _| if x < 20 { 1 } else if x >= 30 { 2 } else { 0 });
        let out = road_mask_and_skeleton(&b);
        assert!(out.warnings.is_empty());
        let px: Vec<(usize, usize)> = (0..40)
            .flat_map(|y| (0..50).map(move |x| (x, y)))
            .filter(|&(x, y)| out.skeleton.get(x, y))
            .collect();
        assert!(px.len() >= 25);
        for &(x, y) in &px {
            assert!((x as f64 - 24.5).abs() <= 1.0, "pixel ({x}, {y})");
        }
        // one pixel per row
        for y in 0..40 {
            assert!((0..50).filter(|&x| out.skeleton.get(x, y)).count() <= 1);
        }
    }

    #[test]
    fn single_block_is_empty() {
        let out = road_mask_and_skeleton(&blocks(10, 10, |_, _| 1));
        assert_eq!(out.skeleton.count(), 0);
        assert_eq!(out.warnings.len(), 1);
        let out = road_mask_and_skeleton(&blocks(10, 10, |_, _| 0));
        assert_eq!(out.skeleton.count(), 0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn opening_removes_thin_gaps() {
        // one-pixel crack between blocks disappears
        let b = blocks(20, 21, |x, _| if x < 10 { 1 } else if x > 10 { 2 } else { 0 });
        assert_eq!(road_mask_and_skeleton(&b).road.count(), 0);
    }

    #[test]
    fn cross_has_one_junction_cluster() {
        // 2x2 blocks, streets at columns/rows 25..33
        let b = blocks(60, 60, |x, y| {
            let (cx, cy) = (x >= 33, y >= 33);
            if (25..33).contains(&x) || (25..33).contains(&y) {
                0
            } else {
                1 + cx as u32 + 2 * cy as u32
            }
        });
        let sk = road_mask_and_skeleton(&b).skeleton;
        let junctions: Vec<(usize, usize)> = (0..60)
            .flat_map(|y| (0..60).map(move |x| (x, y)))
            .filter(|&(x, y)| sk.get(x, y) && neighbours(&sk, x, y) >= 3)
            .collect();
        assert!(!junctions.is_empty());
        for &(x, y) in &junctions {
            assert!((27..=31).contains(&x) && (27..=31).contains(&y), "junction at ({x}, {y})");
        }
        let ends = (0..60)
            .flat_map(|y| (0..60).map(move |x| (x, y)))
            .filter(|&(x, y)| sk.get(x, y) && neighbours(&sk, x, y) == 1)
            .count();
        assert_eq!(ends, 4);
    }

    #[test]
    fn corner_pruning() {
        // staircase: (0,0) (1,0) (1,1) (2,1) (2,2)
        let mut m = ValidityMask::filled(3, 3, false);
        for (x, y) in [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)] {
            m.set(x, y, true);
        }
        let p = prune_corners(&m);
        assert_eq!(p.count(), 3);
        assert!(p.get(0, 0) && p.get(1, 1) && p.get(2, 2));
    }
}
