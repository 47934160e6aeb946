//! Text snippet displacement: erase at the origin, paste at an offset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::polygon::Polygon;
use super::rng_for;
use crate::error::{Error, Result};
use crate::field::ValidityMask;
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextTarget {
    Original,
    Copy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextMove {
    pub polygon: Polygon,
    pub offset: [i64; 2],
    pub target: TextTarget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextOutput {
    pub original: Raster,
    pub copy: Raster,
    /// Source and destination footprints of every move.
    pub text_mask: ValidityMask,
    pub moves: Vec<TextMove>,
}

/// Each polygon is moved in the original and in the copy independently with
/// probability 1/2, by an offset of at most `max_offset` per axis that keeps
/// its bounding box inside the raster.
pub fn synthesize_text_displacement(
    image: &Raster,
    copy: &Raster,
    text_polygons: &[Polygon],
    seed: u64,
    max_offset: i64,
) -> Result<TextOutput> {
    let mut rng = rng_for(seed);
    let (w, h) = (image.width() as i64, image.height() as i64);
    let max_offset = max_offset.max(0);
    let mut moves = Vec::new();
    for poly in text_polygons {
        let (x0, y0, x1, y1) = poly.bbox();
        for target in [TextTarget::Original, TextTarget::Copy] {
            if !rng.random_bool(0.5) {
                continue;
            }
            let axis = |lo: f64, hi: f64, size: i64, rng: &mut rand_chacha::ChaCha8Rng| {
                let a = (-max_offset).max(-(lo.floor() as i64));
                let b = max_offset.min(size - 1 - hi.ceil() as i64);
                if a <= b {
                    rng.random_range(a..=b)
                } else {
                    0
                }
            };
            let offset = [axis(x0, x1, w, &mut rng), axis(y0, y1, h, &mut rng)];
            moves.push(TextMove {
                polygon: poly.clone(),
                offset,
                target,
            });
        }
    }
    apply_text_moves(image, copy, &moves)
}

pub fn apply_text_moves(image: &Raster, copy: &Raster, moves: &[TextMove]) -> Result<TextOutput> {
    if !image.same_shape(copy) {
        return Err(Error::Dimension("image and copy differ in shape".into()));
    }
    let mut original = image.clone();
    let mut out_copy = copy.clone();
    let mut mask = ValidityMask::filled(image.height(), image.width(), false);
    for m in moves {
        let target = match m.target {
            TextTarget::Original => &mut original,
            TextTarget::Copy => &mut out_copy,
        };
        move_snippet(target, m, &mut mask);
    }
    Ok(TextOutput {
        original,
        copy: out_copy,
        text_mask: mask,
        moves: moves.to_vec(),
    })
}

fn move_snippet(img: &mut Raster, m: &TextMove, mask: &mut ValidityMask) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = m.polygon.rasterize(w, h).pixels;
    if src.is_empty() {
        return;
    }
    let snippet: Vec<Vec<u8>> = src.iter().map(|&(x, y)| img.pixel(x, y).to_vec()).collect();

    let mut inside = vec![false; w * h];
    for &(x, y) in &src {
        inside[y * w + x] = true;
    }
    let mut ring: Vec<Vec<u8>> = vec![Vec::new(); ch];
    let mut seen = vec![false; w * h];
    for &(x, y) in &src {
        for yy in y.saturating_sub(2)..(y + 3).min(h) {
            for xx in x.saturating_sub(2)..(x + 3).min(w) {
                let i = yy * w + xx;
                if !inside[i] && !seen[i] {
                    seen[i] = true;
                    for (c, r) in ring.iter_mut().enumerate() {
                        r.push(img.get(xx, yy, c));
                    }
                }
            }
        }
    }
    let fill: Vec<u8> = ring
        .iter_mut()
        .enumerate()
        .map(|(c, r)| {
            if r.is_empty() {
                snippet[0][c]
            } else {
                r.sort_unstable();
                r[r.len() / 2]
            }
        })
        .collect();
    for &(x, y) in &src {
        for (c, v) in fill.iter().enumerate() {
            img.set(x, y, c, *v);
        }
        mask.set(x, y, true);
    }
    for (&(x, y), px) in src.iter().zip(&snippet) {
        let (dx, dy) = (x as i64 + m.offset[0], y as i64 + m.offset[1]);
        if dx < 0 || dy < 0 || dx >= w as i64 || dy >= h as i64 {
            continue;
        }
        for (c, v) in px.iter().enumerate() {
            img.set(dx as usize, dy as usize, c, *v);
        }
        mask.set(dx as usize, dy as usize, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page() -> Raster {
        Raster::from_fn(40, 60, 3, |x, y, c| {
            if (10..16).contains(&x) && (10..14).contains(&y) {
                20
            } else {
                [230, 220, 200][c]
            }
        })
        .unwrap()
    }

    #[test]
    fn no_polygons_is_identity() {
        let img = page();
        let out = synthesize_text_displacement(&img, &img, &[], 3, 8).unwrap();
        assert_eq!(out.original, img);
        assert_eq!(out.copy, img);
        assert_eq!(out.text_mask.count(), 0);
    }

    #[test]
    fn move_in_copy_differs_on_source_and_destination() {
        let img = page();
        let mv = TextMove {
            polygon: Polygon::rect(10.0, 10.0, 16.0, 14.0),
            offset: [8, 0],
            target: TextTarget::Copy,
        };
        let out = apply_text_moves(&img, &img, &[mv]).unwrap();
        assert_eq!(out.original, img);
        for y in 0..40 {
            for x in 0..60 {
                let src = (10..16).contains(&x) && (10..14).contains(&y);
                let dst = (18..24).contains(&x) && (10..14).contains(&y);
                assert_eq!(out.copy.pixel(x, y) != out.original.pixel(x, y), src || dst, "({x},{y})");
                assert_eq!(out.text_mask.get(x, y), src || dst);
            }
        }
        assert_eq!(out.copy.pixel(12, 12), &[230, 220, 200]);
    }

    #[test]
    fn deterministic_and_bounded() {
        let img = page();
        let polys = vec![Polygon::rect(10.0, 10.0, 16.0, 14.0), Polygon::rect(40.0, 30.0, 55.0, 36.0)];
        let a = synthesize_text_displacement(&img, &img, &polys, 11, 16).unwrap();
        let b = synthesize_text_displacement(&img, &img, &polys, 11, 16).unwrap();
        assert_eq!(a, b);
        for seed in 0..100 {
            let o = synthesize_text_displacement(&img, &img, &polys, seed, 16).unwrap();
            for m in &o.moves {
                assert!(m.offset[0].abs() <= 16 && m.offset[1].abs() <= 16);
                let (x0, y0, x1, y1) = m.polygon.translated(m.offset[0] as f64, m.offset[1] as f64).bbox();
                assert!(x0 >= 0.0 && y0 >= 0.0 && x1 <= 59.0 && y1 <= 39.0);
            }
        }
    }
}
