//! Triplet assembly `(I, J, I')` with the exact field `W` that warps `I'`
//! back onto `I`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::changes::{sample_scenario, synthesize_changes, ChangeKind, ChangeScenario};
use super::photometric::{apply_photometric_params, PhotometricParams, PhotometricSpec};
use super::polygon::Polygon;
use super::text::{synthesize_text_displacement, TextMove};
use super::transform::{rasterize_field, rasterize_inverse_field, sample_transform, TransformConfig, TransformSpec};
use super::{derive_seed, rng_for};
use crate::error::{Error, Result};
use crate::field::{warp_plane, warp_raster, DisplacementField, Plane, ValidityMask};
use crate::par;
use crate::raster::Raster;

/// Object and text polygons in pixel coordinates of `I`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub objects: Vec<Polygon>,
    pub texts: Vec<Polygon>,
}

impl Annotations {
    /// Splits features by class: `"text"` goes to texts, everything else to objects.
    pub fn from_polygons(polys: impl IntoIterator<Item = Polygon>) -> Self {
        let mut a = Annotations::default();
        for p in polys {
            if p.class.as_deref() == Some("text") {
                a.texts.push(p);
            } else {
                a.objects.push(p);
            }
        }
        a
    }

    /// Keeps polygons fully inside the window and shifts them into its frame.
    fn window(&self, x0: usize, y0: usize, width: usize, height: usize) -> Annotations {
        let pick = |v: &[Polygon]| {
            v.iter()
                .filter(|p| {
                    let (a, b, c, d) = p.bbox();
                    a >= x0 as f64 && b >= y0 as f64 && c <= (x0 + width) as f64 && d <= (y0 + height) as f64
                })
                .map(|p| p.translated(-(x0 as f64), -(y0 as f64)))
                .collect()
        };
        Annotations {
            objects: pick(&self.objects),
            texts: pick(&self.texts),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    /// Square crop size taken from larger inputs; `None` uses the full plane.
    pub patch: Option<usize>,
    pub transform: TransformConfig,
    pub photometric: PhotometricSpec,
    /// Fixed scenario kind; `None` samples uniformly among feasible kinds.
    pub change_kind: Option<ChangeKind>,
    pub max_objects: usize,
    pub max_text_offset: i64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            patch: Some(520),
            transform: TransformConfig::default(),
            photometric: PhotometricSpec::default(),
            change_kind: None,
            max_objects: 3,
            max_text_offset: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletSample {
    pub i: Raster,
    pub j: Raster,
    pub i_prime: Raster,
    /// Source of `I'` before the geometric warp.
    pub augmented: Raster,
    /// On `I`'s plane: `I'` sampled at `x + W(x)` reproduces `augmented`.
    pub w: DisplacementField,
    /// Where `W` lands on fully valid content of `I'`.
    pub valid: ValidityMask,
    pub change_mask: ValidityMask,
    pub text_mask: ValidityMask,
    pub seed: u64,
    pub origin: (usize, usize),
    pub spec: TransformSpec,
    pub scenario: ChangeScenario,
    pub text_moves: Vec<TextMove>,
    pub photometric: PhotometricParams,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    seed: u64,
    origin: [usize; 2],
    photometric: PhotometricParams,
    spec: TransformSpec,
    scenario: ChangeScenario,
    text_moves: Vec<TextMove>,
}

impl TripletSample {
    pub fn meta_toml(&self) -> Result<String> {
        let meta = Meta {
            seed: self.seed,
            origin: [self.origin.0, self.origin.1],
            photometric: self.photometric,
            spec: self.spec.clone(),
            scenario: self.scenario.clone(),
            text_moves: self.text_moves.clone(),
        };
        toml::to_string(&meta).map_err(|e| Error::Format(format!("meta.toml: {e}")))
    }

    /// Writes `I.png, J.png, I_prime.png, W.dfld, change_mask.png, text_mask.png, meta.toml`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.i.save_png(dir.join("I.png"))?;
        self.j.save_png(dir.join("J.png"))?;
        self.i_prime.save_png(dir.join("I_prime.png"))?;
        self.w.save(dir.join("W.dfld"), Some(&self.valid))?;
        self.change_mask.to_raster().save_png(dir.join("change_mask.png"))?;
        self.text_mask.to_raster().save_png(dir.join("text_mask.png"))?;
        let meta = self.meta_toml()?;
        let p = dir.join("meta.toml");
        std::fs::write(&p, meta).map_err(|e| Error::io(p, e))
    }
}

// sub-seed slots per sample
const SEED_CROP: u64 = 0;
const SEED_TRANSFORM: u64 = 1;
const SEED_SCENARIO: u64 = 2;
const SEED_TEXT: u64 = 3;
const SEED_PHOTO: u64 = 4;

/// Builds one triplet.
///
/// Changes and text moves are applied between `I` and a copy of it; the copy
/// is jittered (`augmented`) and then warped by the inverse of a sampled
/// transform `T` to give `I'`. `W = T(x) - x` on `I`'s plane.
pub fn build_triplet(
    i: &Raster,
    j: &Raster,
    annotations: &Annotations,
    config: &TripletConfig,
    seed: u64,
) -> Result<TripletSample> {
    if !i.same_shape(j) {
        return Err(Error::Dimension(format!(
            "I is {}x{} but J is {}x{}",
            i.width(),
            i.height(),
            j.width(),
            j.height()
        )));
    }
    let (mut i, mut j, mut annotations) = (i.clone(), j.clone(), annotations.clone());
    let mut origin = (0, 0);
    if let Some(p) = config.patch {
        if p == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        if i.width() > p || i.height() > p {
            let (pw, ph) = (p.min(i.width()), p.min(i.height()));
            let mut rng = rng_for(derive_seed(seed, SEED_CROP));
            let x0 = rng.random_range(0..=i.width() - pw);
            let y0 = rng.random_range(0..=i.height() - ph);
            i = i.crop(x0, y0, pw, ph)?;
            j = j.crop(x0, y0, pw, ph)?;
            annotations = annotations.window(x0, y0, pw, ph);
            origin = (x0, y0);
        }
    }
    let (h, w) = (i.height(), i.width());

    let tcfg = TransformConfig {
        height: h,
        width: w,
        ..config.transform.clone()
    };
    let spec = sample_transform(derive_seed(seed, SEED_TRANSFORM), &tcfg)?;

    let scenario = sample_scenario(
        config.change_kind,
        &annotations.objects,
        w,
        h,
        config.max_objects,
        derive_seed(seed, SEED_SCENARIO),
    )?;
    let changed = synthesize_changes(&i, &i, &scenario)?;
    let text = synthesize_text_displacement(
        &changed.original,
        &changed.copy,
        &annotations.texts,
        derive_seed(seed, SEED_TEXT),
        config.max_text_offset,
    )?;
    let photometric = config.photometric.sample(derive_seed(seed, SEED_PHOTO))?;
    let augmented = apply_photometric_params(&text.copy, &photometric);

    let (inverse, inverse_ok) = rasterize_inverse_field(&spec, h, w)?;
    let (i_prime, prime_in) = warp_raster(&augmented, &inverse);
    let prime_valid = prime_in.and(&inverse_ok)?;
    let w_field = rasterize_field(&spec, h, w)?;
    let valid_plane = Plane::from_fn(h, w, |x, y| if prime_valid.get(x, y) { 1.0 } else { 0.0 });
    let (carried, inside) = warp_plane(&valid_plane, &w_field);
    let bits = (0..h * w)
        .map(|k| inside.bits()[k] && carried.get(k % w, k / w) >= 1.0 - 1e-6)
        .collect();
    let valid = ValidityMask::new(h, w, bits)?;

    Ok(TripletSample {
        i: text.original,
        j,
        i_prime,
        augmented,
        w: w_field,
        valid,
        change_mask: changed.change_mask,
        text_mask: text.text_mask,
        seed,
        origin,
        spec,
        scenario,
        text_moves: text.moves,
        photometric,
    })
}

/// `count` triplets with per-sample seeds `derive_seed(master_seed, k)`;
/// output order and content do not depend on the thread count.
pub fn build_triplets(
    i: &Raster,
    j: &Raster,
    annotations: &Annotations,
    config: &TripletConfig,
    master_seed: u64,
    count: usize,
) -> Result<Vec<TripletSample>> {
    par::map_range(count, |k| build_triplet(i, j, annotations, config, derive_seed(master_seed, k as u64)))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Range;

    fn smooth(h: usize, w: usize) -> Raster {
        Raster::from_fn(h, w, 3, |x, y, c| {
            let v = 128.0 + 60.0 * ((x as f64) / 9.0).sin() * ((y as f64) / 13.0).cos() + 10.0 * c as f64;
            v.round() as u8
        })
        .unwrap()
    }

    fn neutral_config(h: usize, w: usize) -> TripletConfig {
        TripletConfig {
            patch: None,
            transform: TransformConfig::identity(h, w),
            photometric: PhotometricSpec::neutral(),
            change_kind: Some(ChangeKind::Unchanged),
            ..TripletConfig::default()
        }
    }

    #[test]
    fn identity_triplet() {
        let img = smooth(40, 50);
        let t = build_triplet(&img, &img, &Annotations::default(), &neutral_config(40, 50), 9).unwrap();
        assert_eq!(t.i_prime, img);
        assert!(t.w.vectors().iter().all(|v| *v == [0.0, 0.0]));
        assert_eq!(t.valid.count(), 40 * 50);
    }

    #[test]
    fn translation_direction() {
        let img = smooth(40, 50);
        let mut cfg = neutral_config(40, 50);
        cfg.transform.homography = false;
        cfg.transform.tps = false;
        cfg.transform.translation = Range(5.0, 5.0);
        let t = build_triplet(&img, &img, &Annotations::default(), &cfg, 1).unwrap();
        assert!(t.w.vectors().iter().all(|v| *v == [5.0, 5.0]));
        // I' is I shifted by +5: I'(x + 5) = I(x)
        assert_eq!(t.i_prime.get(20, 20, 0), img.get(15, 15, 0));
        let (back, m) = warp_raster(&t.i_prime, &t.w);
        for y in 0..40 {
            for x in 0..50 {
                if t.valid.get(x, y) {
                    assert!(m.get(x, y));
                    assert_eq!(back.pixel(x, y), img.pixel(x, y));
                }
            }
        }
        assert_eq!(t.valid.count(), 35 * 45);
    }

    #[test]
    fn deterministic_and_parallel_safe() {
        let img = smooth(64, 64);
        let ann = Annotations {
            objects: vec![Polygon::rect(5.0, 5.0, 15.0, 15.0), Polygon::rect(30.0, 30.0, 40.0, 44.0)],
            texts: vec![Polygon::rect(20.0, 50.0, 34.0, 56.0).with_class("text")],
        };
        let cfg = TripletConfig {
            patch: Some(48),
            ..TripletConfig::default()
        };
        let a = build_triplets(&img, &img, &ann, &cfg, 77, 6).unwrap();
        let b = par::with_jobs(Some(1), || build_triplets(&img, &img, &ann, &cfg, 77, 6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[2], build_triplet(&img, &img, &ann, &cfg, derive_seed(77, 2)).unwrap());
        for t in &a {
            assert_eq!((t.i.width(), t.i.height()), (48, 48));
            assert_eq!((t.change_mask.width(), t.text_mask.height()), (48, 48));
            assert!(t.w.vectors().iter().all(|v| v[0].is_finite() && v[1].is_finite()));
        }
    }

    #[test]
    fn meta_serializes() {
        let img = smooth(32, 32);
        let ann = Annotations {
            objects: vec![Polygon::rect(2.0, 2.0, 8.0, 8.0)],
            texts: vec![],
        };
        let cfg = TripletConfig {
            patch: None,
            change_kind: Some(ChangeKind::Addition),
            ..TripletConfig::default()
        };
        let t = build_triplet(&img, &img, &ann, &cfg, 4).unwrap();
        let text = t.meta_toml().unwrap();
        assert!(text.contains("seed = 4"));
        let dir = tempfile::tempdir().unwrap();
        t.write_dir(dir.path()).unwrap();
        for f in ["I.png", "J.png", "I_prime.png", "W.dfld", "change_mask.png", "text_mask.png", "meta.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
