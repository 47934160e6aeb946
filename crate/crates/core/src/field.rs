//! Dense displacement fields: warping, composition and the DFLD file format.
//!
//! Convention: a field `F` defined on a source plane maps source pixel `x`
//! to target position `x + F(x)`. Warping pulls target content back onto the
//! source plane, `out(x) = target(x + F(x))`, with bilinear sampling. Samples
//! that land outside the target are filled with 0 and flagged invalid.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{nearest_pixel, quantize, Bilinear, Raster};

/// Per-pixel `(dx, dy)` vectors in pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    height: usize,
    width: usize,
    vectors: Vec<[f32; 2]>,
}

impl DisplacementField {
    pub fn new(height: usize, width: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension("field must be at least 1x1".into()));
        }
        if vectors.len() != height * width {
            return Err(Error::Dimension(format!(
                "field has {} vectors, expected {}",
                vectors.len(),
                height * width
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::Consistency(format!(
                "non-finite displacement at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(DisplacementField {
            height,
            width,
            vectors,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        DisplacementField::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, dx: f32, dy: f32) -> Self {
        DisplacementField::new(height, width, vec![[dx, dy]; height * width]).expect("finite constant field")
    }

    /// Field from a closure evaluated at every pixel; values are rounded to f32.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f64, f64) + Sync) -> Result<Self> {
        let mut vectors = vec![[0.0f32; 2]; height * width];
        par::for_each_row(&mut vectors, width, |y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                let (dx, dy) = f(x, y);
                *v = [dx as f32, dy as f32];
            }
        });
        DisplacementField::new(height, width, vectors)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn same_plane(&self, other: &DisplacementField) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Bilinear sample at a real-valued position, in 64-bit.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let bl = Bilinear::at(x, y, self.width, self.height)?;
        Some([
            bl.interpolate(|i, j| self.get(i, j)[0] as f64),
            bl.interpolate(|i, j| self.get(i, j)[1] as f64),
        ])
    }

    pub fn encode_dfld(&self, mask: Option<&ValidityMask>) -> Result<Vec<u8>> {
        encode_dfld(self, mask)
    }

    pub fn save(&self, path: impl AsRef<Path>, mask: Option<&ValidityMask>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, encode_dfld(self, mask)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(DisplacementField, Option<ValidityMask>)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_dfld(&bytes)
    }
}

/// Boolean per-pixel mask; `true` marks a valid correspondence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask has {} entries, expected {}",
                bits.len(),
                height * width
            )));
        }
        Ok(ValidityMask { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        ValidityMask {
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    /// Pixelwise AND.
    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        self.zip(other, |a, b| a && b)
    }

    /// Pixelwise OR.
    pub fn or(&self, other: &ValidityMask) -> Result<ValidityMask> {
        self.zip(other, |a, b| a || b)
    }

    fn zip(&self, other: &ValidityMask, f: impl Fn(bool, bool) -> bool) -> Result<ValidityMask> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension("mask planes differ".into()));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(ValidityMask {
            height: self.height,
            width: self.width,
            bits,
        })
    }

    pub fn not(&self) -> ValidityMask {
        ValidityMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// 0/255 grayscale rendering.
    pub fn to_raster(&self) -> Raster {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        Raster::new(self.height, self.width, 1, data).expect("mask is non-empty")
    }

    /// Pixels with value >= 128 are set.
    pub fn from_raster(r: &Raster) -> ValidityMask {
        let bits = (0..r.height() * r.width())
            .map(|i| r.data()[i * r.channels()] >= 128)
            .collect();
        ValidityMask {
            height: r.height(),
            width: r.width(),
            bits,
        }
    }
}

/// Single-channel floating point image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32) -> Plane {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { height, width, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Resamples `target` onto the field's plane: `out(x) = target(x + F(x))`.
pub fn warp_raster(target: &Raster, field: &DisplacementField) -> (Raster, ValidityMask) {
    let (h, w, ch) = (field.height, field.width, target.channels());
    let mut data = vec![0u8; h * w * ch];
    let mut bits = vec![false; h * w];
    par::for_each_row(&mut data, w * ch, |y, row| {
        for x in 0..w {
            let [dx, dy] = field.get(x, y);
            if let Some(bl) = Bilinear::at(x as f64 + dx as f64, y as f64 + dy as f64, target.width(), target.height()) {
                for c in 0..ch {
                    row[x * ch + c] = quantize(bl.interpolate(|i, j| target.get(i, j, c) as f64));
                }
            }
        }
    });
    par::for_each_row(&mut bits, w, |y, row| {
        for (x, b) in row.iter_mut().enumerate() {
            let [dx, dy] = field.get(x, y);
            *b = Bilinear::at(x as f64 + dx as f64, y as f64 + dy as f64, target.width(), target.height()).is_some();
        }
    });
    (
        Raster::new(h, w, ch, data).expect("field plane is non-empty"),
        ValidityMask { height: h, width: w, bits },
    )
}

/// Like [`warp_raster`] for floating point samples, without quantization.
pub fn warp_plane(target: &Plane, field: &DisplacementField) -> (Plane, ValidityMask) {
    let (h, w) = (field.height, field.width);
    let mut samples: Vec<Option<f32>> = vec![None; h * w];
    par::for_each_row(&mut samples, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let [dx, dy] = field.get(x, y);
            *out = Bilinear::at(x as f64 + dx as f64, y as f64 + dy as f64, target.width, target.height)
                .map(|bl| bl.interpolate(|i, j| target.get(i, j) as f64) as f32);
        }
    });
    let bits = samples.iter().map(Option::is_some).collect();
    let data = samples.into_iter().map(|s| s.unwrap_or(0.0)).collect();
    (Plane { height: h, width: w, data }, ValidityMask { height: h, width: w, bits })
}

/// Nearest-neighbour warp of a label grid (`target_w x target_h`); out-of-bounds
/// samples take `fill`. Never invents labels.
pub fn warp_labels<T: Copy + Send + Sync>(
    labels: &[T],
    target_height: usize,
    target_width: usize,
    field: &DisplacementField,
    fill: T,
) -> Vec<T> {
    assert_eq!(labels.len(), target_height * target_width, "label grid size");
    let mut out = vec![fill; field.height * field.width];
    par::for_each_row(&mut out, field.width, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            let [dx, dy] = field.get(x, y);
            if let Some((i, j)) = nearest_pixel(x as f64 + dx as f64, y as f64 + dy as f64, target_width, target_height) {
                *v = labels[j * target_width + i];
            }
        }
    });
    out
}

/// Resamples `inner` at `x + carrier(x)` onto the carrier's plane.
///
/// Out-of-bounds samples are zero and flagged invalid in the returned mask.
pub fn warp_field(inner: &DisplacementField, carrier: &DisplacementField) -> (DisplacementField, ValidityMask) {
    let (h, w) = (carrier.height, carrier.width);
    let mut out: Vec<([f32; 2], bool)> = vec![([0.0; 2], false); h * w];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let [cx, cy] = carrier.get(x, y);
            if let Some([u, v]) = inner.sample(x as f64 + cx as f64, y as f64 + cy as f64) {
                *o = ([u as f32, v as f32], true);
            }
        }
    });
    split_output(h, w, out)
}

/// `result(x) = first(x) + second(x + first(x))`.
///
/// `first` lives on the output plane and points into `second`'s plane. Where
/// the sample falls outside `second`, the result keeps `first(x)` and the
/// pixel is flagged invalid.
pub fn compose_fields(first: &DisplacementField, second: &DisplacementField) -> (DisplacementField, ValidityMask) {
    let (h, w) = (first.height, first.width);
    let mut out: Vec<([f32; 2], bool)> = vec![([0.0; 2], false); h * w];
    par::for_each_row(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let [fx, fy] = first.get(x, y);
            let (fx, fy) = (fx as f64, fy as f64);
            *o = match second.sample(x as f64 + fx, y as f64 + fy) {
                Some([sx, sy]) => ([(fx + sx) as f32, (fy + sy) as f32], true),
                None => ([fx as f32, fy as f32], false),
            };
        }
    });
    split_output(h, w, out)
}

/// Like [`compose_fields`] but also requires `first_mask` (and `second_mask`
/// at the nearest sample) to be valid. Masks only ever shrink.
pub fn compose_masked(
    first: &DisplacementField,
    first_mask: &ValidityMask,
    second: &DisplacementField,
    second_mask: &ValidityMask,
) -> Result<(DisplacementField, ValidityMask)> {
    if first_mask.height != first.height || first_mask.width != first.width {
        return Err(Error::Dimension("first mask does not match first field".into()));
    }
    if second_mask.height != second.height || second_mask.width != second.width {
        return Err(Error::Dimension("second mask does not match second field".into()));
    }
    let (field, mut mask) = compose_fields(first, second);
    for y in 0..first.height {
        for x in 0..first.width {
            if !mask.get(x, y) {
                continue;
            }
            let [dx, dy] = first.get(x, y);
            let ok = first_mask.get(x, y)
                && Bilinear::at(x as f64 + dx as f64, y as f64 + dy as f64, second.width, second.height)
                    .map(|bl| {
                        second_mask.get(bl.x0, bl.y0)
                            && second_mask.get(bl.x1, bl.y0)
                            && second_mask.get(bl.x0, bl.y1)
                            && second_mask.get(bl.x1, bl.y1)
                    })
                    .unwrap_or(false);
            mask.set(x, y, ok);
        }
    }
    Ok((field, mask))
}

pub const DEFAULT_OCCLUSION_THRESHOLD: f64 = 3.0;

/// Forward-backward consistency check: valid where the round trip
/// `compose(forward, backward)` stays within `tau` pixels of the origin.
pub fn occlusion_mask(forward: &DisplacementField, backward: &DisplacementField, tau: f64) -> ValidityMask {
    let (round_trip, mut mask) = compose_fields(forward, backward);
    for (b, v) in mask.bits.iter_mut().zip(&round_trip.vectors) {
        let n = (v[0] as f64).hypot(v[1] as f64);
        *b = *b && n <= tau;
    }
    mask
}

fn split_output(h: usize, w: usize, out: Vec<([f32; 2], bool)>) -> (DisplacementField, ValidityMask) {
    let (vectors, bits): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    (
        DisplacementField::new(h, w, vectors).expect("composition of finite fields is finite"),
        ValidityMask { height: h, width: w, bits },
    )
}

const DFLD_MAGIC: &[u8; 4] = b"DFLD";
const DFLD_VERSION: u32 = 1;
/// High-byte flag of the version word: a validity bitmap follows the vectors.
const DFLD_FLAG_MASK: u32 = 0x0100_0000;
const DFLD_HEADER: usize = 16;

/// Serializes a field (and optionally its mask) to DFLD bytes.
pub fn encode_dfld(field: &DisplacementField, mask: Option<&ValidityMask>) -> Result<Vec<u8>> {
    if let Some(m) = mask {
        if m.height != field.height || m.width != field.width {
            return Err(Error::Dimension("mask does not match field".into()));
        }
    }
    let h = u32::try_from(field.height).map_err(|_| Error::Dimension("height exceeds u32".into()))?;
    let w = u32::try_from(field.width).map_err(|_| Error::Dimension("width exceeds u32".into()))?;
    let n = field.vectors.len();
    let mut out = Vec::with_capacity(DFLD_HEADER + n * 8 + n.div_ceil(8));
    out.extend_from_slice(DFLD_MAGIC);
    let version = DFLD_VERSION | if mask.is_some() { DFLD_FLAG_MASK } else { 0 };
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    for v in &field.vectors {
        out.extend_from_slice(&v[0].to_le_bytes());
        out.extend_from_slice(&v[1].to_le_bytes());
    }
    if let Some(m) = mask {
        out.extend_from_slice(&pack_bits(&m.bits));
    }
    Ok(out)
}

pub fn decode_dfld(bytes: &[u8]) -> Result<(DisplacementField, Option<ValidityMask>)> {
    if bytes.len() < DFLD_HEADER {
        return Err(Error::Format("DFLD header truncated".into()));
    }
    if &bytes[0..4] != DFLD_MAGIC {
        return Err(Error::Format(format!("bad DFLD magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    let has_mask = version & DFLD_FLAG_MASK != 0;
    if version & !DFLD_FLAG_MASK != DFLD_VERSION {
        return Err(Error::Format(format!("unsupported DFLD version word {version:#010x}")));
    }
    let (h, w) = (word(8) as usize, word(12) as usize);
    if h == 0 || w == 0 {
        return Err(Error::Format(format!("DFLD dimensions {h}x{w} are empty")));
    }
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Error::Format("DFLD dimensions overflow".into()))?;
    let payload = n
        .checked_mul(8)
        .and_then(|p| p.checked_add(if has_mask { n.div_ceil(8) } else { 0 }))
        .ok_or_else(|| Error::Format("DFLD dimensions overflow".into()))?;
    let body = &bytes[DFLD_HEADER..];
    if body.len() < payload {
        return Err(Error::Format(format!(
            "DFLD payload truncated: {} bytes for {h}x{w} (need {payload})",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!("DFLD has {} trailing bytes", body.len() - payload)));
    }
    let vectors: Vec<[f32; 2]> = body[..n * 8]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().expect("4 bytes")),
                f32::from_le_bytes(c[4..8].try_into().expect("4 bytes")),
            ]
        })
        .collect();
    let field = DisplacementField::new(h, w, vectors).map_err(|e| Error::Format(e.to_string()))?;
    let mask = has_mask.then(|| ValidityMask {
        height: h,
        width: w,
        bits: unpack_bits(&body[n * 8..], n),
    });
    Ok((field, mask))
}

/// LSB-first bit packing.
pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_plane(h: usize, w: usize) -> Plane {
        Plane::from_fn(h, w, |x, _| x as f32)
    }

    #[test]
    fn zero_warp_is_identity() {
        let r = Raster::from_fn(6, 9, 3, |x, y, c| (x * 20 + y * 3 + c) as u8).unwrap();
        let (out, mask) = warp_raster(&r, &DisplacementField::zeros(6, 9));
        assert_eq!(out, r);
        assert_eq!(mask.count(), 54);
    }

    #[test]
    fn integer_shift_warp() {
        let r = Raster::from_fn(4, 8, 1, |x, _, _| x as u8).unwrap();
        let (out, mask) = warp_raster(&r, &DisplacementField::constant(4, 8, 1.0, 0.0));
        for y in 0..4 {
            for x in 0..7 {
                assert_eq!(out.get(x, y, 0), x as u8 + 1);
                assert!(mask.get(x, y));
            }
            assert!(!mask.get(7, y));
            assert_eq!(out.get(7, y, 0), 0);
        }
    }

    #[test]
    fn half_pixel_warp_on_ramp_is_exact() {
        let p = ramp_plane(5, 8);
        let (out, mask) = warp_plane(&p, &DisplacementField::constant(5, 8, 0.5, 0.0));
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(out.get(x, y), x as f32 + 0.5);
            }
            assert!(!mask.get(7, y));
        }
    }

    #[test]
    fn warp_field_examples() {
        let inner = DisplacementField::from_fn(6, 6, |x, y| (x as f64 * 0.25, y as f64)).unwrap();
        let (same, mask) = warp_field(&inner, &DisplacementField::zeros(6, 6));
        assert_eq!(same, inner);
        assert_eq!(mask.count(), 36);

        let c = DisplacementField::constant(6, 6, 0.0, 2.0);
        let carrier = DisplacementField::from_fn(6, 6, |x, y| ((x as f64).sin() * 0.7, (y as f64).cos() * 0.4)).unwrap();
        let (out, mask) = warp_field(&c, &carrier);
        for (v, &b) in out.vectors().iter().zip(mask.bits()) {
            if b {
                assert_eq!(*v, [0.0, 2.0]);
            }
        }

        let lin = DisplacementField::from_fn(6, 8, |x, _| (x as f64, 0.0)).unwrap();
        let (out, mask) = warp_field(&lin, &DisplacementField::constant(6, 8, 1.0, 0.0));
        for y in 0..6 {
            for x in 0..7 {
                assert!(mask.get(x, y));
                assert_eq!(out.get(x, y)[0], x as f32 + 1.0);
            }
        }
    }

    #[test]
    fn compose_examples() {
        let second = DisplacementField::from_fn(5, 5, |x, y| (x as f64 * 0.3, -(y as f64))).unwrap();
        let (out, mask) = compose_fields(&DisplacementField::zeros(5, 5), &second);
        assert_eq!(out, second);
        assert_eq!(mask.count(), 25);

        let (out, _) = compose_fields(&DisplacementField::constant(4, 4, 1.0, 0.0), &DisplacementField::constant(4, 4, 0.0, 2.0));
        assert_eq!(out.get(0, 0), [1.0, 2.0]);

        let lin = DisplacementField::from_fn(8, 8, |x, _| (x as f64, 0.0)).unwrap();
        let (out, mask) = compose_fields(&DisplacementField::constant(8, 8, 0.5, 0.0), &lin);
        for y in 0..8 {
            for x in 0..7 {
                assert!(mask.get(x, y));
                assert_eq!(out.get(x, y)[0], x as f32 + 1.0);
            }
            assert!(!mask.get(7, y));
        }
    }

    #[test]
    fn right_identity_is_exact_everywhere() {
        let f = DisplacementField::from_fn(7, 9, |x, y| (x as f64 * 1.7 - 3.0, y as f64 * 0.3)).unwrap();
        let (out, _) = compose_fields(&f, &DisplacementField::zeros(7, 9));
        assert_eq!(out, f);
    }

    #[test]
    fn occlusion_detects_inconsistent_pairs() {
        let fwd = DisplacementField::constant(10, 10, 2.0, 0.0);
        let bwd = DisplacementField::constant(10, 10, -2.0, 0.0);
        let m = occlusion_mask(&fwd, &bwd, DEFAULT_OCCLUSION_THRESHOLD);
        assert_eq!(m.count(), 80);
        let bad = DisplacementField::constant(10, 10, 3.0, 1.0);
        assert_eq!(occlusion_mask(&fwd, &bad, DEFAULT_OCCLUSION_THRESHOLD).count(), 0);
    }

    #[test]
    fn dfld_round_trip_and_errors() {
        let f = DisplacementField::from_fn(2, 3, |x, y| (x as f64 * 0.1, -(y as f64) * 1e-7)).unwrap();
        let bytes = encode_dfld(&f, None).unwrap();
        let (back, mask) = decode_dfld(&bytes).unwrap();
        assert!(mask.is_none());
        assert_eq!(back, f);

        let m = ValidityMask::new(2, 3, vec![true, false, true, true, false, false]).unwrap();
        let bytes = encode_dfld(&f, Some(&m)).unwrap();
        assert_eq!(bytes.len(), 16 + 48 + 1);
        let (_, back_mask) = decode_dfld(&bytes).unwrap();
        assert_eq!(back_mask.unwrap(), m);

        let mut short = encode_dfld(&f, None).unwrap();
        short.truncate(16 + 5 * 8);
        assert!(matches!(decode_dfld(&short), Err(Error::Format(msg)) if msg.contains("truncated")));

        let mut magic = encode_dfld(&f, None).unwrap();
        magic[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_dfld(&magic), Err(Error::Format(msg)) if msg.contains("magic")));

        let mut huge = encode_dfld(&f, None).unwrap();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_dfld(&huge).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(DisplacementField::new(1, 2, vec![[0.0, f32::NAN], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn label_warp_only_reuses_labels() {
        let labels: Vec<u32> = (0..36).map(|i| (i % 5) as u32 * 10).collect();
        let f = DisplacementField::from_fn(6, 6, |x, y| ((x as f64 * 0.37).sin() * 2.0, (y as f64).cos())).unwrap();
        let out = warp_labels(&labels, 6, 6, &f, 0);
        assert!(out.iter().all(|l| labels.contains(l)));
    }
}
