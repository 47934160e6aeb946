//! Average precision with one-to-one Hungarian matching.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian_assign;
use crate::error::{Error, Result};
use crate::instances::InstanceMap;

/// Instance footprint as sorted, deduplicated pixel indices on a shared plane.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Mask(Vec<u32>);

impl Mask {
    pub fn new(mut pixels: Vec<u32>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        Mask(pixels)
    }

    pub fn area(&self) -> usize {
        self.0.len()
    }

    pub fn pixels(&self) -> &[u32] {
        &self.0
    }

    pub fn intersection(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub mask: Mask,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionSet {
    pub predictions: Vec<Scored>,
    pub ground_truth: Vec<Mask>,
}

/// Footprint masks per nonzero label, in label order.
pub fn masks_of(map: &InstanceMap) -> BTreeMap<u32, Mask> {
    let mut m: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &l) in map.labels().iter().enumerate() {
        if l != 0 {
            m.entry(l).or_default().push(i as u32);
        }
    }
    m.into_iter().map(|(l, p)| (l, Mask(p))).collect()
}

impl DetectionSet {
    /// Predictions from `pred` scored by `scores` (missing labels score 1).
    pub fn from_maps(pred: &InstanceMap, scores: &BTreeMap<u32, f64>, gt: &InstanceMap) -> Result<Self> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::Dimension("prediction and ground truth planes differ".into()));
        }
        let predictions = masks_of(pred)
            .into_iter()
            .map(|(l, mask)| Scored {
                mask,
                score: scores.get(&l).copied().unwrap_or(1.0),
            })
            .collect();
        Ok(DetectionSet {
            predictions,
            ground_truth: masks_of(gt).into_values().collect(),
        })
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = self.predictions.iter().find(|p| !(0.0..=1.0).contains(&p.score)) {
            return Err(Error::Config(format!("score {} outside [0, 1]", s.score)));
        }
        Ok(())
    }

    /// Keeps predictions and ground truth whose area (m²) falls in `stratum`.
    pub fn restrict(&self, stratum: SizeStratum, resolution: f64) -> DetectionSet {
        let px = resolution * resolution;
        DetectionSet {
            predictions: self
                .predictions
                .iter()
                .filter(|p| stratum.contains(p.mask.area() as f64 * px))
                .cloned()
                .collect(),
            ground_truth: self
                .ground_truth
                .iter()
                .filter(|g| stratum.contains(g.area() as f64 * px))
                .cloned()
                .collect(),
        }
    }
}

/// Object size buckets in m².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeStratum {
    /// area <= 500
    Small,
    /// 500 < area <= 2000
    Medium,
    /// area > 2000
    Large,
    /// area > 500
    NonSmall,
    All,
}

pub const SMALL_MAX_M2: f64 = 500.0;
pub const MEDIUM_MAX_M2: f64 = 2000.0;

impl SizeStratum {
    pub fn of(area_m2: f64) -> SizeStratum {
        if area_m2 <= SMALL_MAX_M2 {
            SizeStratum::Small
        } else if area_m2 <= MEDIUM_MAX_M2 {
            SizeStratum::Medium
        } else {
            SizeStratum::Large
        }
    }

    pub fn contains(self, area_m2: f64) -> bool {
        match self {
            SizeStratum::All => true,
            SizeStratum::NonSmall => area_m2 > SMALL_MAX_M2,
            s => SizeStratum::of(area_m2) == s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each prediction in score order.
    pub points: Vec<(f64, f64)>,
    pub true_positives: usize,
    pub n_ground_truth: usize,
}

/// Matches predictions to ground truth one-to-one by maximum total IoU among
/// pairs with IoU >= `iou_threshold`; matched pairs are true positives.
pub fn pr_curve(dets: &DetectionSet, iou_threshold: f64) -> Result<PrCurve> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::Config(format!("IoU threshold {iou_threshold} outside (0, 1)")));
    }
    dets.validate()?;
    let (np, ng) = (dets.predictions.len(), dets.ground_truth.len());
    let iou: Vec<Vec<f64>> = dets
        .predictions
        .iter()
        .map(|p| dets.ground_truth.iter().map(|g| p.mask.iou(g)).collect())
        .collect();
    let mut tp = vec![false; np];
    if np > 0 && ng > 0 {
        let cost: Vec<Vec<f64>> = iou
            .iter()
            .map(|r| r.iter().map(|&v| if v >= iou_threshold { 1.0 - v } else { 1.0 }).collect())
            .collect();
        for (i, j) in hungarian_assign(&cost)?.pairs {
            if iou[i][j] >= iou_threshold {
                tp[i] = true;
            }
        }
    }
    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| dets.predictions[b].score.total_cmp(&dets.predictions[a].score).then(a.cmp(&b)));
    let mut points = Vec::with_capacity(np);
    let mut hits = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if tp[i] {
            hits += 1;
        }
        let recall = if ng == 0 { 0.0 } else { hits as f64 / ng as f64 };
        points.push((recall, hits as f64 / (k + 1) as f64));
    }
    Ok(PrCurve {
        points,
        true_positives: hits,
        n_ground_truth: ng,
    })
}

/// Area under the 101-point interpolated precision-recall curve. No ground
/// truth gives 0.
pub fn average_precision(dets: &DetectionSet, iou_threshold: f64) -> Result<f64> {
    let curve = pr_curve(dets, iou_threshold)?;
    if curve.n_ground_truth == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            curve
                .points
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(sum / 101.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(x0: u32, n: u32) -> Mask {
        Mask::new((x0..x0 + n).collect())
    }

    #[test]
    fn single_detection() {
        // IoU 0.8: prediction 10 px covering 8 of 8 GT px plus 2 more
        let d = DetectionSet {
            predictions: vec![Scored {
                mask: block(0, 10),
                score: 0.9,
            }],
            ground_truth: vec![block(0, 8)],
        };
        assert!((d.predictions[0].mask.iou(&d.ground_truth[0]) - 0.8).abs() < 1e-12);
        assert_eq!(average_precision(&d, 0.5).unwrap(), 1.0);
        let none = DetectionSet {
            predictions: vec![],
            ground_truth: vec![block(0, 8)],
        };
        assert_eq!(average_precision(&none, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn staircase_example() {
        let d = DetectionSet {
            predictions: vec![
                Scored { mask: block(0, 10), score: 0.9 },
                Scored { mask: block(1007, 3), score: 0.8 },
                Scored { mask: block(1000, 6), score: 0.7 },
            ],
            ground_truth: vec![block(0, 8), block(1000, 10)],
        };
        let curve = pr_curve(&d, 0.5).unwrap();
        assert_eq!(curve.points, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        let expect = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((average_precision(&d, 0.5).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn strata_boundaries() {
        assert_eq!(SizeStratum::of(500.0), SizeStratum::Small);
        assert_eq!(SizeStratum::of(500.0 + 1e-9), SizeStratum::Medium);
        assert_eq!(SizeStratum::of(2000.0), SizeStratum::Medium);
        assert_eq!(SizeStratum::of(2000.0 + 1e-9), SizeStratum::Large);
        assert!(!SizeStratum::NonSmall.contains(500.0));
        assert!(SizeStratum::NonSmall.contains(501.0));
    }

    #[test]
    fn bad_inputs() {
        let d = DetectionSet {
            predictions: vec![Scored {
                mask: block(0, 1),
                score: 1.5,
            }],
            ground_truth: vec![],
        };
        assert!(average_precision(&d, 0.5).is_err());
        assert!(average_precision(&DetectionSet::default(), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_low_score_miss_never_helps(
            gts in prop::collection::vec((0u32..200, 1u32..30), 1..5),
            preds in prop::collection::vec((0u32..200, 1u32..30, 0.01f64..1.0), 0..6),
        ) {
            let mut d = DetectionSet {
                predictions: preds.iter().map(|&(x, n, s)| Scored { mask: block(x, n), score: s }).collect(),
                ground_truth: gts.iter().map(|&(x, n)| block(x * 1000, n)).collect(),
            };
            for p in &mut d.predictions {
                // shift predictions near some GT so matches happen
                let g = &d.ground_truth[p.mask.0[0] as usize % d.ground_truth.len()];
                let base = g.0[0];
                p.mask = Mask::new(p.mask.0.iter().map(|v| base + v % 40).collect());
            }
            let ap = average_precision(&d, 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            d.predictions.push(Scored { mask: block(9_999_000, 3), score: 0.0 });
            prop_assert!(average_precision(&d, 0.5).unwrap() <= ap + 1e-12);
        }
    }
}
