use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{warp_labels, DisplacementField};
use crate::instances::{InstanceClass, InstanceMap};
use crate::metrics::hungarian_assign;
use crate::par;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(label_t1, label_t2, iou)`, sorted by t1 label.
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_t1: Vec<u32>,
    pub unmatched_t2: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Metres per pixel of the shared plane.
    pub resolution: f64,
    /// Instances smaller than this (m²) are left out of matching.
    pub min_area_m2: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            resolution: 0.4,
            min_area_m2: 500.0,
        }
    }
}

fn eligible(map: &InstanceMap, cfg: &MatchConfig) -> BTreeSet<u32> {
    let px = cfg.resolution * cfg.resolution;
    map.areas()
        .into_iter()
        .filter(|&(l, a)| map.class_of(l) == Some(InstanceClass::Building) && a as f64 * px >= cfg.min_area_m2)
        .map(|(l, _)| l)
        .collect()
}

/// Matches building units of two epochs on t1's plane.
///
/// `t2` is pulled onto t1's plane through `field` (nearest-neighbour), IoU
/// is measured there, and each connected group of overlapping instances is
/// assigned with the Hungarian method on `1 - IoU`. Zero-IoU assignments are
/// reported as unmatched.
pub fn match_instances(
    t1: &InstanceMap,
    t2: &InstanceMap,
    field: &DisplacementField,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    if (field.height(), field.width()) != (t1.height(), t1.width()) {
        return Err(Error::Dimension(format!(
            "field is {}x{} but t1 is {}x{}",
            field.width(),
            field.height(),
            t1.width(),
            t1.height()
        )));
    }
    if !(cfg.resolution > 0.0) {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let keep1 = eligible(t1, cfg);
    let keep2 = eligible(t2, cfg);
    let warped = warp_labels(t2.labels(), t2.height(), t2.width(), field, 0u32);

    let mut area1: HashMap<u32, usize> = HashMap::new();
    let mut area2: HashMap<u32, usize> = HashMap::new();
    let mut inter: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&a, &b) in t1.labels().iter().zip(&warped) {
        let a = if keep1.contains(&a) { a } else { 0 };
        let b = if keep2.contains(&b) { b } else { 0 };
        if a != 0 {
            *area1.entry(a).or_insert(0) += 1;
        }
        if b != 0 {
            *area2.entry(b).or_insert(0) += 1;
        }
        if a != 0 && b != 0 {
            *inter.entry((a, b)).or_insert(0) += 1;
        }
    }
    let iou_of = |a: u32, b: u32| -> f64 {
        let i = inter.get(&(a, b)).copied().unwrap_or(0);
        if i == 0 {
            0.0
        } else {
            i as f64 / (area1[&a] + area2[&b] - i) as f64
        }
    };

    let groups = candidate_groups(&inter);
    let assigned: Vec<Result<Vec<(u32, u32, f64)>>> = par::map_slice(&groups, |(rows, cols)| {
        let iou: Vec<Vec<f64>> = rows.iter().map(|&a| cols.iter().map(|&b| iou_of(a, b)).collect()).collect();
        assign_by_iou(rows, cols, &iou)
    });
    let mut pairs = Vec::new();
    for a in assigned {
        pairs.extend(a?);
    }
    pairs.sort_by_key(|p| p.0);
    let paired1: BTreeSet<u32> = pairs.iter().map(|p| p.0).collect();
    let paired2: BTreeSet<u32> = pairs.iter().map(|p| p.1).collect();
    Ok(MatchResult {
        pairs,
        unmatched_t1: keep1.difference(&paired1).copied().collect(),
        unmatched_t2: keep2.difference(&paired2).copied().collect(),
    })
}

/// Connected components of the bipartite overlap graph, each as sorted
/// `(t1 labels, t2 labels)`, ordered by smallest t1 label.
fn candidate_groups(inter: &BTreeMap<(u32, u32), usize>) -> Vec<(Vec<u32>, Vec<u32>)> {
    // union-find over t1 labels (even keys) and t2 labels (odd keys)
    let mut parent: HashMap<(u32, bool), (u32, bool)> = HashMap::new();
    fn find(p: &mut HashMap<(u32, bool), (u32, bool)>, x: (u32, bool)) -> (u32, bool) {
        let mut r = x;
        while let Some(&n) = p.get(&r) {
            if n == r {
                break;
            }
            r = n;
        }
        let mut c = x;
        while c != r {
            let n = p[&c];
            p.insert(c, r);
            c = n;
        }
        r
    }
    for &(a, b) in inter.keys() {
        let (ka, kb) = ((a, false), (b, true));
        parent.entry(ka).or_insert(ka);
        parent.entry(kb).or_insert(kb);
        let (ra, rb) = (find(&mut parent, ka), find(&mut parent, kb));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let mut groups: BTreeMap<(u32, bool), (BTreeSet<u32>, BTreeSet<u32>)> = BTreeMap::new();
    let keys: Vec<(u32, bool)> = parent.keys().copied().collect();
    for k in keys {
        let r = find(&mut parent, k);
        let g = groups.entry(r).or_default();
        if k.1 {
            g.1.insert(k.0);
        } else {
            g.0.insert(k.0);
        }
    }
    let mut out: Vec<(Vec<u32>, Vec<u32>)> = groups
        .into_values()
        .map(|(a, b)| (a.into_iter().collect(), b.into_iter().collect()))
        .collect();
    out.sort_by_key(|g| g.0.first().copied());
    out
}

/// Maximum-total-IoU one-to-one assignment; pairs with IoU 0 are dropped.
pub fn assign_by_iou(rows: &[u32], cols: &[u32], iou: &[Vec<f64>]) -> Result<Vec<(u32, u32, f64)>> {
    let cost: Vec<Vec<f64>> = iou.iter().map(|r| r.iter().map(|v| 1.0 - v).collect()).collect();
    Ok(hungarian_assign(&cost)?
        .pairs
        .into_iter()
        .filter(|&(i, j)| iou[i][j] > 0.0)
        .map(|(i, j)| (rows[i], cols[j], iou[i][j]))
        .collect())
}
