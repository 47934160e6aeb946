//! Copy-paste object changes between an image and its copy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::polygon::Polygon;
use super::rng_for;
use crate::error::{Error, Result};
use crate::field::ValidityMask;
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    /// Objects pasted into the copy only.
    Addition,
    /// Objects pasted into the original only.
    Deletion,
    /// Disjoint object sets pasted into both.
    Replacement,
    Unchanged,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 4] = [
        ChangeKind::Addition,
        ChangeKind::Deletion,
        ChangeKind::Replacement,
        ChangeKind::Unchanged,
    ];
}

/// An annotated object lifted from the source image and pasted at `source + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PastedObject {
    pub source: Polygon,
    pub offset: [i64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeScenario {
    pub kind: ChangeKind,
    pub into_copy: Vec<PastedObject>,
    pub into_original: Vec<PastedObject>,
}

impl ChangeScenario {
    pub fn unchanged() -> Self {
        ChangeScenario {
            kind: ChangeKind::Unchanged,
            into_copy: Vec::new(),
            into_original: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, o) = (self.into_copy.is_empty(), self.into_original.is_empty());
        let ok = match self.kind {
            ChangeKind::Addition => !c && o,
            ChangeKind::Deletion => c && !o,
            ChangeKind::Replacement => !c && !o,
            ChangeKind::Unchanged => c && o,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{:?} scenario with {} copy / {} original objects",
                self.kind,
                self.into_copy.len(),
                self.into_original.len()
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChangeOutput {
    pub original: Raster,
    pub copy: Raster,
    /// Union of all pasted footprints.
    pub change_mask: ValidityMask,
    pub warnings: Vec<String>,
}

/// Pastes the scenario's objects. Object pixels are always taken from
/// `image` as it was before any pasting.
pub fn synthesize_changes(image: &Raster, copy: &Raster, scenario: &ChangeScenario) -> Result<ChangeOutput> {
    if !image.same_shape(copy) {
        return Err(Error::Dimension("image and copy differ in shape".into()));
    }
    scenario.validate()?;
    let (w, h) = (image.width(), image.height());
    let mut original = image.clone();
    let mut out_copy = copy.clone();
    let mut mask = ValidityMask::filled(h, w, false);
    let mut warnings = Vec::new();
    for (objects, target) in [
        (&scenario.into_copy, &mut out_copy),
        (&scenario.into_original, &mut original),
    ] {
        for obj in objects {
            paste(image, target, obj, &mut mask, &mut warnings);
        }
    }
    Ok(ChangeOutput {
        original,
        copy: out_copy,
        change_mask: mask,
        warnings,
    })
}

fn paste(donor: &Raster, target: &mut Raster, obj: &PastedObject, mask: &mut ValidityMask, warnings: &mut Vec<String>) {
    let (w, h) = (donor.width() as i64, donor.height() as i64);
    let src = obj.source.rasterize(donor.width(), donor.height());
    let mut clipped = src.clipped;
    for &(x, y) in &src.pixels {
        let (dx, dy) = (x as i64 + obj.offset[0], y as i64 + obj.offset[1]);
        if dx < 0 || dy < 0 || dx >= w || dy >= h {
            clipped = true;
            continue;
        }
        let (dx, dy) = (dx as usize, dy as usize);
        for c in 0..donor.channels() {
            target.set(dx, dy, c, donor.get(x, y, c));
        }
        mask.set(dx, dy, true);
    }
    if clipped {
        let msg = format!(
            "object at {:?} with offset {:?} was clipped to the raster bounds",
            obj.source.bbox(),
            obj.offset
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
}

/// Kinds that can be realised with `n` available objects.
pub(crate) fn feasible_kinds(n: usize) -> Vec<ChangeKind> {
    match n {
        0 => vec![ChangeKind::Unchanged],
        1 => vec![ChangeKind::Addition, ChangeKind::Deletion, ChangeKind::Unchanged],
        _ => ChangeKind::ALL.to_vec(),
    }
}

/// Draws objects and paste positions for a scenario. `kind = None` picks a
/// kind uniformly among those feasible for the annotation count.
pub fn sample_scenario(
    kind: Option<ChangeKind>,
    annotations: &[Polygon],
    width: usize,
    height: usize,
    max_objects: usize,
    seed: u64,
) -> Result<ChangeScenario> {
    let mut rng = rng_for(seed);
    let feasible = feasible_kinds(annotations.len());
    let kind = match kind {
        Some(k) if feasible.contains(&k) => k,
        Some(k) => {
            return Err(Error::Config(format!(
                "{k:?} needs more than {} annotated objects",
                annotations.len()
            )))
        }
        None => feasible[rng.random_range(0..feasible.len())],
    };
    if kind == ChangeKind::Unchanged {
        return Ok(ChangeScenario::unchanged());
    }
    let mut order: Vec<usize> = (0..annotations.len()).collect();
    order.shuffle(&mut rng);
    let cap = max_objects.max(1);
    let place = |idx: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let poly = &annotations[idx];
        let (x0, y0, x1, y1) = poly.bbox();
        let lo_x = -x0.floor() as i64;
        let hi_x = (width as f64 - 1.0 - x1.ceil()) as i64;
        let lo_y = -y0.floor() as i64;
        let hi_y = (height as f64 - 1.0 - y1.ceil()) as i64;
        let pick = |lo: i64, hi: i64, rng: &mut rand_chacha::ChaCha8Rng| if lo <= hi { rng.random_range(lo..=hi) } else { 0 };
        let offset = [pick(lo_x, hi_x, rng), pick(lo_y, hi_y, rng)];
        PastedObject {
            source: poly.clone(),
            offset,
        }
    };
    let mut scenario = ChangeScenario {
        kind,
        into_copy: Vec::new(),
        into_original: Vec::new(),
    };
    match kind {
        ChangeKind::Addition | ChangeKind::Deletion => {
            let n = rng.random_range(1..=cap.min(order.len()));
            let objs: Vec<_> = order[..n].iter().map(|&i| place(i, &mut rng)).collect();
            if kind == ChangeKind::Addition {
                scenario.into_copy = objs;
            } else {
                scenario.into_original = objs;
            }
        }
        ChangeKind::Replacement => {
            let total = rng.random_range(2..=(2 * cap).min(order.len()).max(2));
            let split = rng.random_range(1..total);
            scenario.into_copy = order[..split].iter().map(|&i| place(i, &mut rng)).collect();
            scenario.into_original = order[split..total].iter().map(|&i| place(i, &mut rng)).collect();
        }
        ChangeKind::Unchanged => unreachable!(),
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(h: usize, w: usize) -> Raster {
        Raster::from_fn(h, w, 3, |x, y, c| ((x * 31 + y * 17 + c * 50) % 256) as u8).unwrap()
    }

    #[test]
    fn unchanged_is_noop() {
        let img = checker(30, 30);
        let out = synthesize_changes(&img, &img, &ChangeScenario::unchanged()).unwrap();
        assert_eq!(out.original, img);
        assert_eq!(out.copy, img);
        assert_eq!(out.change_mask.count(), 0);
    }

    #[test]
    fn addition_changes_exactly_the_square() {
        let img = Raster::from_fn(40, 40, 1, |x, y, _| if x >= 25 && y >= 25 && x < 35 && y < 35 { 200 } else { 20 }).unwrap();
        let scenario = ChangeScenario {
            kind: ChangeKind::Addition,
            into_copy: vec![PastedObject {
                source: Polygon::rect(25.0, 25.0, 35.0, 35.0),
                offset: [-20, -20],
            }],
            into_original: vec![],
        };
        let out = synthesize_changes(&img, &img, &scenario).unwrap();
        assert_eq!(out.original, img);
        for y in 0..40 {
            for x in 0..40 {
                let inside = (5..15).contains(&x) && (5..15).contains(&y);
                assert_eq!(out.copy.get(x, y, 0) != img.get(x, y, 0), inside, "({x},{y})");
                assert_eq!(out.change_mask.get(x, y), inside);
            }
        }
    }

    #[test]
    fn replacement_mask_is_union() {
        let img = checker(50, 50);
        let a = PastedObject {
            source: Polygon::rect(0.0, 0.0, 5.0, 5.0),
            offset: [10, 10],
        };
        let b = PastedObject {
            source: Polygon::rect(40.0, 40.0, 48.0, 44.0),
            offset: [-30, 0],
        };
        let scenario = ChangeScenario {
            kind: ChangeKind::Replacement,
            into_copy: vec![a],
            into_original: vec![b],
        };
        let out = synthesize_changes(&img, &img, &scenario).unwrap();
        let mut expect = ValidityMask::filled(50, 50, false);
        for (x, y) in (10..15).flat_map(|x| (10..15).map(move |y| (x, y))) {
            expect.set(x, y, true);
        }
        for (x, y) in (10..18).flat_map(|x| (40..44).map(move |y| (x, y))) {
            expect.set(x, y, true);
        }
        assert_eq!(out.change_mask, expect);
    }

    #[test]
    fn clipping_warns() {
        let img = checker(20, 20);
        let scenario = ChangeScenario {
            kind: ChangeKind::Addition,
            into_copy: vec![PastedObject {
                source: Polygon::rect(0.0, 0.0, 6.0, 6.0),
                offset: [17, 0],
            }],
            into_original: vec![],
        };
        let out = synthesize_changes(&img, &img, &scenario).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.change_mask.count(), 18);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let s = ChangeScenario {
            kind: ChangeKind::Replacement,
            into_copy: vec![],
            into_original: vec![],
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn sampled_scenarios_are_valid_and_deterministic() {
        let polys: Vec<_> = (0..5).map(|i| Polygon::rect(i as f64 * 10.0, 5.0, i as f64 * 10.0 + 6.0, 12.0)).collect();
        for seed in 0..200 {
            let s = sample_scenario(None, &polys, 64, 64, 3, seed).unwrap();
            s.validate().unwrap();
            assert_eq!(s, sample_scenario(None, &polys, 64, 64, 3, seed).unwrap());
            for o in s.into_copy.iter().chain(&s.into_original) {
                let (x0, y0, x1, y1) = o.source.translated(o.offset[0] as f64, o.offset[1] as f64).bbox();
                assert!(x0 >= 0.0 && y0 >= 0.0 && x1 <= 63.0 && y1 <= 63.0);
            }
        }
        assert!(sample_scenario(Some(ChangeKind::Replacement), &polys[..1], 64, 64, 3, 0).is_err());
    }
}
