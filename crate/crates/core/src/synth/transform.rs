//! Parametric warps (affine, homography, TPS) and their exact displacement fields.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::tps::{tps_fit, Tps};
use super::{rng_for, Range};
use crate::error::{Error, Result};
use crate::field::{DisplacementField, ValidityMask};
use crate::par;

/// Composite warp `T = tps . homography . affine`; each stage optional.
///
/// Affine and homography stages act on coordinates relative to `center`.
/// The TPS stage uses absolute pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub center: [f64; 2],
    /// `[m11, m12, tx, m21, m22, ty]`: `p' = M (p - c) + c + t`.
    pub affine: Option<[f64; 6]>,
    /// Row-major 3x3 homography without `h33` (fixed to 1).
    pub homography: Option<[f64; 8]>,
    pub tps: Option<TpsControl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsControl {
    pub src: Vec<[f64; 2]>,
    pub dst: Vec<[f64; 2]>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec {
            center: [0.0, 0.0],
            affine: None,
            homography: None,
            tps: None,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        TransformSpec {
            affine: Some([1.0, 0.0, tx, 0.0, 1.0, ty]),
            ..TransformSpec::identity()
        }
    }

    pub fn homography(h: [f64; 8]) -> Self {
        TransformSpec {
            homography: Some(h),
            ..TransformSpec::identity()
        }
    }

    /// Splits into single-stage specs in application order.
    pub fn stages(&self) -> Vec<TransformSpec> {
        let mut out = Vec::new();
        if self.affine.is_some() {
            out.push(TransformSpec {
                affine: self.affine,
                center: self.center,
                ..TransformSpec::identity()
            });
        }
        if self.homography.is_some() {
            out.push(TransformSpec {
                homography: self.homography,
                center: self.center,
                ..TransformSpec::identity()
            });
        }
        if self.tps.is_some() {
            out.push(TransformSpec {
                tps: self.tps.clone(),
                center: self.center,
                ..TransformSpec::identity()
            });
        }
        out
    }

    pub fn compile(&self) -> Result<CompiledTransform> {
        let homography = match self.homography {
            Some(h) => {
                let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
                let inv = m
                    .try_inverse()
                    .filter(|_| m.determinant().abs() > 1e-12)
                    .ok_or_else(|| Error::Config("homography is not invertible".into()))?;
                Some((m, inv))
            }
            None => None,
        };
        let affine = match self.affine {
            Some(a) => {
                let det = a[0] * a[4] - a[1] * a[3];
                if !(det.abs() > 1e-12) {
                    return Err(Error::Config("affine part is not invertible".into()));
                }
                Some(a)
            }
            None => None,
        };
        let tps = self
            .tps
            .as_ref()
            .map(|c| tps_fit(&c.src, &c.dst))
            .transpose()?;
        Ok(CompiledTransform {
            center: self.center,
            affine,
            homography,
            tps,
        })
    }
}

/// A [`TransformSpec`] with its TPS fitted and inverses precomputed.
#[derive(Clone, Debug)]
pub struct CompiledTransform {
    center: [f64; 2],
    affine: Option<[f64; 6]>,
    homography: Option<(Matrix3<f64>, Matrix3<f64>)>,
    tps: Option<Tps>,
}

fn apply_h(m: &Matrix3<f64>, c: [f64; 2], p: [f64; 2]) -> Option<[f64; 2]> {
    let (x, y) = (p[0] - c[0], p[1] - c[1]);
    let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
    if !(w > 1e-12) {
        return None;
    }
    Some([
        (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w + c[0],
        (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w + c[1],
    ])
}

impl CompiledTransform {
    /// `T(p)`; `None` where the homography maps to infinity.
    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let c = self.center;
        let mut q = p;
        if let Some(a) = self.affine {
            let (x, y) = (q[0] - c[0], q[1] - c[1]);
            q = [a[0] * x + a[1] * y + c[0] + a[2], a[3] * x + a[4] * y + c[1] + a[5]];
        }
        if let Some((h, _)) = &self.homography {
            q = apply_h(h, c, q)?;
        }
        if let Some(t) = &self.tps {
            q = t.eval(q);
        }
        Some(q)
    }

    /// `T^-1(p)`, with the TPS stage inverted by Newton iteration.
    pub fn invert(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let c = self.center;
        let mut q = p;
        if let Some(t) = &self.tps {
            let f = t.eval(q);
            let guess = [2.0 * q[0] - f[0], 2.0 * q[1] - f[1]];
            q = t.invert(q, guess).or_else(|| t.invert(q, p))?;
        }
        if let Some((_, hinv)) = &self.homography {
            q = apply_h(hinv, c, q)?;
        }
        if let Some(a) = self.affine {
            let det = a[0] * a[4] - a[1] * a[3];
            let (x, y) = (q[0] - c[0] - a[2], q[1] - c[1] - a[5]);
            q = [(a[4] * x - a[1] * y) / det + c[0], (a[0] * y - a[3] * x) / det + c[1]];
        }
        Some(q)
    }

    pub fn tps(&self) -> Option<&Tps> {
        self.tps.as_ref()
    }
}

/// Exact displacement field `T(x) - x` on an `height x width` plane.
pub fn rasterize_field(spec: &TransformSpec, height: usize, width: usize) -> Result<DisplacementField> {
    let t = spec.compile()?;
    let rows: Vec<Result<Vec<[f32; 2]>>> = par::map_range(height, |y| {
        (0..width)
            .map(|x| {
                let p = [x as f64, y as f64];
                let q = t.apply(p).ok_or_else(|| {
                    Error::Config(format!("transform is undefined at pixel ({x}, {y})"))
                })?;
                Ok([(q[0] - p[0]) as f32, (q[1] - p[1]) as f32])
            })
            .collect()
    });
    let mut vectors = Vec::with_capacity(height * width);
    for row in rows {
        vectors.extend(row?);
    }
    DisplacementField::new(height, width, vectors)
}

/// Field `T^-1(x) - x`; pixels where the inverse does not converge are
/// zero and flagged invalid.
pub fn rasterize_inverse_field(spec: &TransformSpec, height: usize, width: usize) -> Result<(DisplacementField, ValidityMask)> {
    let t = spec.compile()?;
    let rows: Vec<Vec<([f32; 2], bool)>> = par::map_range(height, |y| {
        (0..width)
            .map(|x| {
                let p = [x as f64, y as f64];
                match t.invert(p) {
                    Some(q) => ([(q[0] - p[0]) as f32, (q[1] - p[1]) as f32], true),
                    None => ([0.0; 2], false),
                }
            })
            .collect()
    });
    let (vectors, bits): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    Ok((
        DisplacementField::new(height, width, vectors)?,
        ValidityMask::new(height, width, bits)?,
    ))
}

/// Sampling ranges for [`sample_transform`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    pub height: usize,
    pub width: usize,
    pub affine: bool,
    pub homography: bool,
    pub tps: bool,
    /// Pixels, per axis.
    pub translation: Range,
    pub rotation_deg: Range,
    pub scale: Range,
    pub perspective: Range,
    pub tps_grid: usize,
    /// Pixels, per axis and control point.
    pub tps_perturbation: Range,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            height: 520,
            width: 520,
            affine: true,
            homography: true,
            tps: true,
            translation: Range(-32.0, 32.0),
            rotation_deg: Range(-10.0, 10.0),
            scale: Range(0.9, 1.1),
            perspective: Range(-1e-4, 1e-4),
            tps_grid: 3,
            tps_perturbation: Range(-16.0, 16.0),
        }
    }
}

impl TransformConfig {
    /// Config whose every range is collapsed onto the identity.
    pub fn identity(height: usize, width: usize) -> Self {
        TransformConfig {
            height,
            width,
            translation: Range(0.0, 0.0),
            rotation_deg: Range(0.0, 0.0),
            scale: Range(1.0, 1.0),
            perspective: Range(0.0, 0.0),
            tps_perturbation: Range(0.0, 0.0),
            ..TransformConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("transform plane must be non-empty".into()));
        }
        for (name, r) in [
            ("translation", self.translation),
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("perspective", self.perspective),
            ("tps_perturbation", self.tps_perturbation),
        ] {
            r.validate(name)?;
        }
        if self.scale.0 <= 0.0 {
            return Err(Error::Config("scale range must be positive".into()));
        }
        if self.tps && self.tps_grid < 2 {
            return Err(Error::Config("tps_grid must be at least 2".into()));
        }
        Ok(())
    }
}

/// Draws a random composite transform; deterministic in `seed`.
pub fn sample_transform(seed: u64, config: &TransformConfig) -> Result<TransformSpec> {
    config.validate()?;
    let mut rng = rng_for(seed);
    let center = [
        (config.width as f64 - 1.0) / 2.0,
        (config.height as f64 - 1.0) / 2.0,
    ];
    let affine = config.affine.then(|| {
        let theta = config.rotation_deg.sample(&mut rng).to_radians();
        let s = config.scale.sample(&mut rng);
        let tx = config.translation.sample(&mut rng);
        let ty = config.translation.sample(&mut rng);
        let (sin, cos) = theta.sin_cos();
        [s * cos, -s * sin, tx, s * sin, s * cos, ty]
    });
    let homography = config.homography.then(|| {
        let p1 = config.perspective.sample(&mut rng);
        let p2 = config.perspective.sample(&mut rng);
        [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, p1, p2]
    });
    let tps = config.tps.then(|| {
        let k = config.tps_grid;
        let mut src = Vec::with_capacity(k * k);
        let mut dst = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let p = [
                    i as f64 * (config.width as f64 - 1.0) / (k - 1) as f64,
                    j as f64 * (config.height as f64 - 1.0) / (k - 1) as f64,
                ];
                let d = [
                    config.tps_perturbation.sample(&mut rng),
                    config.tps_perturbation.sample(&mut rng),
                ];
                src.push(p);
                dst.push([p[0] + d[0], p[1] + d[1]]);
            }
        }
        TpsControl { src, dst }
    });
    Ok(TransformSpec {
        center,
        affine,
        homography,
        tps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_translation_fields() {
        let f = rasterize_field(&TransformSpec::identity(), 5, 6).unwrap();
        assert_eq!(f, DisplacementField::zeros(5, 6));
        let f = rasterize_field(&TransformSpec::translation(3.0, -2.0), 5, 6).unwrap();
        assert_eq!(f, DisplacementField::constant(5, 6, 3.0, -2.0));
    }

    #[test]
    fn homography_scale_two() {
        let f = rasterize_field(&TransformSpec::homography([2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]), 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(f.get(x, y), [x as f32, 0.0]);
            }
        }
    }

    #[test]
    fn collapsed_ranges_are_identity() {
        let spec = sample_transform(99, &TransformConfig::identity(32, 40)).unwrap();
        let f = rasterize_field(&spec, 32, 40).unwrap();
        assert!(f.vectors().iter().all(|v| v[0].abs() < 1e-4 && v[1].abs() < 1e-4));
        assert_eq!(spec.affine.unwrap(), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let cfg = TransformConfig::default();
        assert_eq!(sample_transform(7, &cfg).unwrap(), sample_transform(7, &cfg).unwrap());
        for seed in 0..1000 {
            let a = sample_transform(seed, &cfg).unwrap().affine.unwrap();
            assert!(a[2].abs() <= 32.0 && a[5].abs() <= 32.0);
        }
    }

    #[test]
    fn empty_range_rejected() {
        let cfg = TransformConfig {
            translation: Range(5.0, -5.0),
            ..TransformConfig::default()
        };
        assert!(matches!(sample_transform(1, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn inverse_round_trips() {
        let cfg = TransformConfig {
            height: 64,
            width: 64,
            ..TransformConfig::default()
        };
        let spec = sample_transform(3, &cfg).unwrap();
        let t = spec.compile().unwrap();
        for &p in &[[0.0, 0.0], [31.5, 12.0], [63.0, 63.0]] {
            let q = t.invert(p).unwrap();
            let back = t.apply(q).unwrap();
            assert!((back[0] - p[0]).abs() < 1e-8 && (back[1] - p[1]).abs() < 1e-8);
        }
    }
}
