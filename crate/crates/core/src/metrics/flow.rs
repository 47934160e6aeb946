use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{compose_fields, DisplacementField};

/// Mean variation: sum over pixels of the L1 difference to each in-bounds
/// 4-neighbour, divided by the pixel count.
pub fn mean_variation(field: &DisplacementField) -> Result<f64> {
    let (w, h) = (field.width(), field.height());
    if w < 2 || h < 2 {
        return Err(Error::Dimension(format!("mean variation needs at least 2x2, got {w}x{h}")));
    }
    let l1 = |a: [f32; 2], b: [f32; 2]| (a[0] as f64 - b[0] as f64).abs() + (a[1] as f64 - b[1] as f64).abs();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let u = field.get(x, y);
            if x + 1 < w {
                sum += l1(u, field.get(x + 1, y));
            }
            if y + 1 < h {
                sum += l1(u, field.get(x, y + 1));
            }
        }
    }
    // every unordered neighbour pair is visited from both ends
    Ok(2.0 * sum / (w * h) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyL1 {
    /// `None` when no pixel is valid.
    pub mean: Option<f64>,
    pub valid_fraction: f64,
}

/// Mean over valid pixels of `|f12 + f23(x + f12(x)) - f13|_1`.
pub fn triplet_consistency_l1(
    f12: &DisplacementField,
    f23: &DisplacementField,
    f13: &DisplacementField,
) -> Result<ConsistencyL1> {
    if !f12.same_plane(f13) {
        return Err(Error::Dimension("f12 and f13 must share a plane".into()));
    }
    let (composed, mask) = compose_fields(f12, f23);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (c, d)) in composed.vectors().iter().zip(f13.vectors()).enumerate() {
        if mask.bits()[i] {
            sum += (c[0] as f64 - d[0] as f64).abs() + (c[1] as f64 - d[1] as f64).abs();
            n += 1;
        }
    }
    let total = composed.vectors().len();
    Ok(ConsistencyL1 {
        mean: (n > 0).then(|| sum / n as f64),
        valid_fraction: n as f64 / total as f64,
    })
}
