//! Brightness/contrast/saturation jitter in HSV with hue held fixed, then blur.

use serde::{Deserialize, Serialize};

use super::{rng_for, Range};
use crate::error::Result;
use crate::par;
use crate::raster::{quantize, Raster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhotometricSpec {
    /// Added to V, in gray levels.
    pub brightness_delta: Range,
    pub saturation_scale: Range,
    /// V is stretched about the image mean.
    pub contrast_scale: Range,
    pub gaussian_blur_sigma: Range,
}

impl Default for PhotometricSpec {
    fn default() -> Self {
        PhotometricSpec {
            brightness_delta: Range(-20.0, 20.0),
            saturation_scale: Range(0.8, 1.2),
            contrast_scale: Range(0.8, 1.2),
            gaussian_blur_sigma: Range(0.0, 1.0),
        }
    }
}

impl PhotometricSpec {
    pub fn neutral() -> Self {
        PhotometricSpec {
            brightness_delta: Range(0.0, 0.0),
            saturation_scale: Range(1.0, 1.0),
            contrast_scale: Range(1.0, 1.0),
            gaussian_blur_sigma: Range(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.brightness_delta.validate("brightness_delta")?;
        self.saturation_scale.validate("saturation_scale")?;
        self.contrast_scale.validate("contrast_scale")?;
        self.gaussian_blur_sigma.validate("gaussian_blur_sigma")?;
        if self.saturation_scale.0 < 0.0 || self.contrast_scale.0 < 0.0 || self.gaussian_blur_sigma.0 < 0.0 {
            return Err(crate::Error::Config("photometric scales and sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> Result<PhotometricParams> {
        self.validate()?;
        let mut rng = rng_for(seed);
        Ok(PhotometricParams {
            brightness_delta: self.brightness_delta.sample(&mut rng),
            saturation_scale: self.saturation_scale.sample(&mut rng),
            contrast_scale: self.contrast_scale.sample(&mut rng),
            blur_sigma: self.gaussian_blur_sigma.sample(&mut rng),
        })
    }
}

/// One concrete draw from a [`PhotometricSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotometricParams {
    pub brightness_delta: f64,
    pub saturation_scale: f64,
    pub contrast_scale: f64,
    pub blur_sigma: f64,
}

impl PhotometricParams {
    pub fn neutral() -> Self {
        PhotometricParams {
            brightness_delta: 0.0,
            saturation_scale: 1.0,
            contrast_scale: 1.0,
            blur_sigma: 0.0,
        }
    }
}

pub fn apply_photometric(image: &Raster, spec: &PhotometricSpec, seed: u64) -> Result<Raster> {
    Ok(apply_photometric_params(image, &spec.sample(seed)?))
}

/// `h, s, v` with `h` in degrees `[0, 360)` and `s, v` in `[0, 1]`.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let c = max - min;
    let h = if c == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / c).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / c + 2.0)
    } else {
        60.0 * ((r - g) / c + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { c / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

pub fn apply_photometric_params(image: &Raster, p: &PhotometricParams) -> Raster {
    let ch = image.channels();
    let n = image.width() * image.height();
    let v_of = |px: &[u8]| px.iter().copied().max().unwrap_or(0) as f64 / 255.0;
    let mean_v = image.data().chunks_exact(ch).map(v_of).sum::<f64>() / n as f64;
    let adjust_v = |v: f64| ((v - mean_v) * p.contrast_scale + mean_v + p.brightness_delta / 255.0).clamp(0.0, 1.0);

    let mut out = image.clone();
    par::for_each_row(out.data_mut(), image.width() * ch, |_, row| {
        for px in row.chunks_exact_mut(ch) {
            if ch == 1 {
                px[0] = quantize(adjust_v(px[0] as f64 / 255.0) * 255.0);
            } else {
                let (h, s, v) = rgb_to_hsv(px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0);
                let (r, g, b) = hsv_to_rgb(h, (s * p.saturation_scale).clamp(0.0, 1.0), adjust_v(v));
                px[0] = quantize(r * 255.0);
                px[1] = quantize(g * 255.0);
                px[2] = quantize(b * 255.0);
            }
        }
    });
    if p.blur_sigma > 0.0 {
        gaussian_blur(&out, p.blur_sigma)
    } else {
        out
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(image: &Raster, sigma: f64) -> Raster {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0f64; w * h * ch];
    par::for_each_row(&mut tmp, w * ch, |y, row| {
        for x in 0..w {
            for c in 0..ch {
                row[x * ch + c] = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        let xx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                        kv * image.get(xx, y, c) as f64
                    })
                    .sum();
            }
        }
    });
    let mut out = image.clone();
    par::for_each_row(out.data_mut(), w * ch, |y, row| {
        for x in 0..w {
            for c in 0..ch {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| {
                        let yy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                        kv * tmp[(yy * w + x) * ch + c]
                    })
                    .sum();
                row[x * ch + c] = quantize(v);
            }
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn colorful(h: usize, w: usize, seed: u64) -> Raster {
        Raster::from_fn(h, w, 3, |x, y, c| {
            let v = (x as u64 * 37 + y as u64 * 91 + c as u64 * 113 + seed * 7919) % 251;
            v as u8
        })
        .unwrap()
    }

    #[test]
    fn neutral_is_identity() {
        let img = colorful(17, 23, 1);
        assert_eq!(apply_photometric(&img, &PhotometricSpec::neutral(), 5).unwrap(), img);
        let g = Raster::from_fn(9, 9, 1, |x, y, _| (x * 20 + y) as u8).unwrap();
        assert_eq!(apply_photometric_params(&g, &PhotometricParams::neutral()), g);
    }

    #[test]
    fn brightness_on_gray() {
        let img = Raster::filled(8, 8, 3, 128).unwrap();
        let p = PhotometricParams {
            brightness_delta: 20.0,
            ..PhotometricParams::neutral()
        };
        let out = apply_photometric_params(&img, &p);
        assert!(out.data().iter().all(|&v| v == 148));
        let hi = Raster::filled(4, 4, 1, 250).unwrap();
        assert!(apply_photometric_params(&hi, &p).data().iter().all(|&v| v == 255));
    }

    #[test]
    fn hsv_round_trip_exact_on_bytes() {
        for r in (0..256).step_by(15) {
            for g in (0..256).step_by(17) {
                for b in (0..256).step_by(19) {
                    let (h, s, v) = rgb_to_hsv(r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
                    let (rr, gg, bb) = hsv_to_rgb(h, s, v);
                    assert_eq!((quantize(rr * 255.0), quantize(gg * 255.0), quantize(bb * 255.0)), (r as u8, g as u8, b as u8));
                }
            }
        }
    }

    #[test]
    fn blur_keeps_uniform_hue() {
        let img = Raster::from_fn(20, 20, 3, |x, _, c| [200, 100, 50][c] / if x < 10 { 1 } else { 2 }).unwrap();
        let p = PhotometricParams {
            blur_sigma: 1.0,
            ..PhotometricParams::neutral()
        };
        let out = apply_photometric_params(&img, &p);
        for px in out.data().chunks_exact(3) {
            let (h, _, _) = rgb_to_hsv(px[0] as f64, px[1] as f64, px[2] as f64);
            assert!((h - 20.0).abs() < 2.0, "{h}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hue_preserved_without_blur(seed in any::<u64>(), img_seed in 0u64..1000) {
            let img = colorful(12, 12, img_seed);
            let spec = PhotometricSpec { gaussian_blur_sigma: Range(0.0, 0.0), ..PhotometricSpec::default() };
            let out = apply_photometric(&img, &spec, seed).unwrap();
            for (a, b) in img.data().chunks_exact(3).zip(out.data().chunks_exact(3)) {
                let chroma = |p: &[u8]| (*p.iter().max().unwrap() as f64) - (*p.iter().min().unwrap() as f64);
                let (ca, cb) = (chroma(a), chroma(b));
                if ca < 8.0 || cb < 8.0 || b.iter().any(|&v| v == 0 || v == 255) {
                    continue;
                }
                let (ha, _, _) = rgb_to_hsv(a[0] as f64, a[1] as f64, a[2] as f64);
                let (hb, _, _) = rgb_to_hsv(b[0] as f64, b[1] as f64, b[2] as f64);
                let d = (ha - hb).abs().min(360.0 - (ha - hb).abs());
                // one quantization step on each channel moves hue by at most ~60/chroma degrees per channel
                prop_assert!(d <= 120.0 / cb + 120.0 / ca, "hue {ha} -> {hb} (chroma {ca} -> {cb})");
            }
        }
    }
}
