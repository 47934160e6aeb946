use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimConfig {
    /// Odd window side.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 255.0,
        }
    }
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let r = (window / 2) as f64;
    let taps: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    ssim_with(a, b, &SsimConfig::default())
}

/// Mean SSIM over all window placements fully inside the image, averaged
/// over channels.
pub fn ssim_with(a: &Raster, b: &Raster, cfg: &SsimConfig) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "ssim inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let win = cfg.window;
    if win == 0 || win % 2 == 0 {
        return Err(Error::Config(format!("ssim window must be odd, got {win}")));
    }
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if w < win || h < win {
        return Err(Error::Dimension(format!("image {w}x{h} is smaller than the {win}x{win} window")));
    }
    let taps = gaussian_taps(win, cfg.sigma);
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let (ow, oh) = (w - win + 1, h - win + 1);

    let mut total = 0.0;
    for c in 0..ch {
        let xa: Vec<f64> = (0..w * h).map(|i| a.data()[i * ch + c] as f64).collect();
        let xb: Vec<f64> = (0..w * h).map(|i| b.data()[i * ch + c] as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let mu_a = filter_valid(&xa, w, h, &taps);
        let mu_b = filter_valid(&xb, w, h, &taps);
        let aa = filter_valid(&prod(&xa, &xa), w, h, &taps);
        let bb = filter_valid(&prod(&xb, &xb), w, h, &taps);
        let ab = filter_valid(&prod(&xa, &xb), w, h, &taps);
        let mut sum = 0.0;
        for i in 0..ow * oh {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / (ow * oh) as f64;
    }
    Ok(total / ch as f64)
}

/// Separable 'valid' correlation.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(h: usize, w: usize, ch: usize, seed: u64) -> Raster {
        let mut s = seed;
        let data = (0..h * w * ch)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            })
            .collect();
        Raster::new(h, w, ch, data).unwrap()
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        let a = noise(20, 30, 3, 1);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let c = Raster::filled(16, 16, 1, 100).unwrap();
        assert_eq!(ssim(&c, &c).unwrap(), 1.0);
    }

    #[test]
    fn single_window_matches_direct_formula() {
        let a = noise(11, 11, 1, 7);
        let b = noise(11, 11, 1, 8);
        // direct evaluation with explicit 2D weights
        let r = 5.0f64;
        let mut wts = [[0.0f64; 11]; 11];
        let mut s = 0.0;
        for (j, row) in wts.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
                *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
                s += *v;
            }
        }
        let (mut ma, mut mb) = (0.0, 0.0);
        for j in 0..11 {
            for i in 0..11 {
                ma += wts[j][i] / s * a.get(i, j, 0) as f64;
                mb += wts[j][i] / s * b.get(i, j, 0) as f64;
            }
        }
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for j in 0..11 {
            for i in 0..11 {
                let (da, db) = (a.get(i, j, 0) as f64 - ma, b.get(i, j, 0) as f64 - mb);
                va += wts[j][i] / s * da * da;
                vb += wts[j][i] / s * db * db;
                cov += wts[j][i] / s * da * db;
            }
        }
        let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
        let expect = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        let got = ssim(&a, &b).unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn dimension_mismatch() {
        let a = noise(12, 12, 1, 1);
        let b = noise(12, 13, 1, 1);
        assert!(matches!(ssim(&a, &b), Err(Error::Dimension(_))));
        let c = noise(12, 12, 3, 1);
        assert!(ssim(&a, &c).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = noise(14, 15, 3, s1);
            let b = noise(14, 15, 3, s2);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
