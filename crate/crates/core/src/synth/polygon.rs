use serde::{Deserialize, Serialize};

/// Simple polygon in pixel coordinates (exterior ring only; closing vertex optional).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<[f64; 2]>,
    #[serde(default)]
    pub class: Option<String>,
}

/// Pixels covered by a polygon, clipped to a raster.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PolygonMask {
    /// Covered `(x, y)` pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// Some coverage fell outside the raster and was dropped.
    pub clipped: bool,
}

impl Polygon {
    pub fn new(exterior: Vec<[f64; 2]>) -> Self {
        Polygon { exterior, class: None }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.class = Some(class.into());
        self
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            exterior: self.exterior.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
            class: self.class.clone(),
        }
    }

    /// `(xmin, ymin, xmax, ymax)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.exterior.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
        )
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.exterior.len();
        (0..n).map(move |i| (self.exterior[i], self.exterior[(i + 1) % n]))
    }

    /// Scanline rasterization: pixel `(x, y)` is covered when the point
    /// `(x, y)` is inside under the even-odd rule, with edges half-open so
    /// the rectangle `[x0, x1) x [y0, y1)` covers exactly its integer points.
    pub fn rasterize(&self, width: usize, height: usize) -> PolygonMask {
        let mut mask = PolygonMask::default();
        if self.exterior.len() < 3 {
            return mask;
        }
        let (_, ymin, _, ymax) = self.bbox();
        if !ymin.is_finite() || !ymax.is_finite() {
            return mask;
        }
        let mut xs = Vec::new();
        let r0 = ymin.ceil() as i64;
        let r1 = ymax.ceil() as i64;
        for r in r0..r1.max(r0) {
            let y = r as f64;
            xs.clear();
            for (a, b) in self.edges() {
                let (lo, hi) = if a[1] <= b[1] { (a, b) } else { (b, a) };
                if lo[1] <= y && y < hi[1] {
                    let t = (y - lo[1]) / (hi[1] - lo[1]);
                    xs.push(lo[0] + t * (hi[0] - lo[0]));
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                let c0 = span[0].ceil() as i64;
                let c1 = span[1].ceil() as i64;
                for c in c0..c1 {
                    if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                        mask.pixels.push((c as usize, r as usize));
                    } else {
                        mask.clipped = true;
                    }
                }
            }
        }
        mask.pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        mask.pixels.dedup();
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_covers_integer_points() {
        let m = Polygon::rect(5.0, 5.0, 15.0, 15.0).rasterize(40, 40);
        assert_eq!(m.pixels.len(), 100);
        assert!(!m.clipped);
        assert_eq!(m.pixels[0], (5, 5));
        assert_eq!(*m.pixels.last().unwrap(), (14, 14));
    }

    #[test]
    fn clipping_is_reported() {
        let m = Polygon::rect(-2.0, 0.0, 3.0, 2.0).rasterize(10, 10);
        assert!(m.clipped);
        assert_eq!(m.pixels.len(), 6);
    }

    #[test]
    fn triangle_area_close() {
        let t = Polygon::new(vec![[0.0, 0.0], [40.0, 0.0], [0.0, 40.0]]);
        let n = t.rasterize(50, 50).pixels.len() as f64;
        assert!((n - 800.0).abs() < 45.0, "{n}");
    }
}
