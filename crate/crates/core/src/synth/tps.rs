//! Interpolating thin-plate splines with kernel `U(r) = r^2 log r^2`.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};

/// Fitted 2D thin-plate spline mapping control sources onto control targets.
///
/// Internally the control points are centered and scaled to unit size for
/// conditioning; the accessors report pixel-space coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Tps {
    centers: Vec<[f64; 2]>,
    /// Radial weights in normalized space, one per center and output axis.
    weights: Vec<[f64; 2]>,
    /// Normalized affine part of the displacement:
    /// `out[k] - p[k] = a[k][0] + a[k][1]*qx + a[k][2]*qy + radial`.
    affine: [[f64; 3]; 2],
    mean: [f64; 2],
    scale: f64,
}

#[inline]
fn kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// Fits the interpolating spline with side conditions
/// `sum w = sum w*x = sum w*y = 0`.
pub fn tps_fit(control_src: &[[f64; 2]], control_dst: &[[f64; 2]]) -> Result<Tps> {
    let n = control_src.len();
    if n != control_dst.len() {
        return Err(Error::Dimension(format!(
            "{} source points but {} targets",
            n,
            control_dst.len()
        )));
    }
    if n < 3 {
        return Err(Error::SingularSystem(format!("need at least 3 control points, got {n}")));
    }
    if control_src.iter().chain(control_dst).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::SingularSystem("non-finite control point".into()));
    }

    let mean = {
        let (sx, sy) = control_src.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n as f64, sy / n as f64]
    };
    let scale = control_src
        .iter()
        .map(|p| (p[0] - mean[0]).hypot(p[1] - mean[1]))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::SingularSystem("all control points coincide".into()));
    }
    let centers: Vec<[f64; 2]> = control_src
        .iter()
        .map(|p| [(p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale])
        .collect();

    for i in 0..n {
        for j in i + 1..n {
            let d = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            if d < 1e-12 {
                return Err(Error::SingularSystem(format!("control points {i} and {j} coincide")));
            }
        }
    }
    let spread = centers
        .iter()
        .flat_map(|a| centers.iter().map(move |b| (a, b)))
        .map(|(a, b)| {
            centers
                .iter()
                .map(|c| ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if spread < 1e-12 {
        return Err(Error::SingularSystem("control points are collinear".into()));
    }

    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let dx = centers[i][0] - centers[j][0];
            let dy = centers[i][1] - centers[j][1];
            a[(i, j)] = kernel(dx * dx + dy * dy);
        }
        let row = [1.0, centers[i][0], centers[i][1]];
        for (k, v) in row.iter().enumerate() {
            a[(i, n + k)] = *v;
            a[(n + k, i)] = *v;
        }
    }
    let lu = a.lu();
    let solve_axis = |axis: usize| -> Result<DVector<f64>> {
        let mut b = DVector::<f64>::zeros(m);
        for i in 0..n {
            b[i] = control_dst[i][axis] - control_src[i][axis];
        }
        lu.solve(&b)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::SingularSystem("TPS system is singular".into()))
    };
    let sx = solve_axis(0)?;
    let sy = solve_axis(1)?;

    let weights = (0..n).map(|i| [sx[i], sy[i]]).collect();
    let affine = [
        [sx[n], sx[n + 1], sx[n + 2]],
        [sy[n], sy[n + 1], sy[n + 2]],
    ];
    Ok(Tps {
        centers,
        weights,
        affine,
        mean,
        scale,
    })
}

impl Tps {
    #[inline]
    fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.mean[0]) / self.scale, (p[1] - self.mean[1]) / self.scale]
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let q = self.normalize(p);
        let mut out = [
            p[0] + self.affine[0][0] + self.affine[0][1] * q[0] + self.affine[0][2] * q[1],
            p[1] + self.affine[1][0] + self.affine[1][1] * q[0] + self.affine[1][2] * q[1],
        ];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let dx = q[0] - c[0];
            let dy = q[1] - c[1];
            let u = kernel(dx * dx + dy * dy);
            out[0] += w[0] * u;
            out[1] += w[1] * u;
        }
        out
    }

    /// Jacobian `d eval / d p` in pixel units.
    pub fn jacobian(&self, p: [f64; 2]) -> Matrix2<f64> {
        let q = self.normalize(p);
        let mut j = Matrix2::new(
            self.affine[0][1],
            self.affine[0][2],
            self.affine[1][1],
            self.affine[1][2],
        );
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let dx = q[0] - c[0];
            let dy = q[1] - c[1];
            let r2 = dx * dx + dy * dy;
            if r2 > 0.0 {
                let g = 2.0 * (r2.ln() + 1.0);
                j[(0, 0)] += w[0] * g * dx;
                j[(0, 1)] += w[0] * g * dy;
                j[(1, 0)] += w[1] * g * dx;
                j[(1, 1)] += w[1] * g * dy;
            }
        }
        Matrix2::identity() + j / self.scale
    }

    /// Solves `eval(q) = p` by Newton iteration started at `guess`.
    pub fn invert(&self, p: [f64; 2], guess: [f64; 2]) -> Option<[f64; 2]> {
        let mut q = guess;
        for _ in 0..60 {
            let f = self.eval(q);
            let r = [f[0] - p[0], f[1] - p[1]];
            if r[0].abs() < 1e-10 && r[1].abs() < 1e-10 {
                return Some(q);
            }
            let inv = self.jacobian(q).try_inverse()?;
            let step = inv * nalgebra::Vector2::new(r[0], r[1]);
            q = [q[0] - step[0], q[1] - step[1]];
            if !q[0].is_finite() || !q[1].is_finite() {
                return None;
            }
        }
        let f = self.eval(q);
        ((f[0] - p[0]).abs() < 1e-6 && (f[1] - p[1]).abs() < 1e-6).then_some(q)
    }

    /// Radial weights of `sum w_i U(|p - p_i|)` in pixel space.
    pub fn radial_weights(&self) -> Vec<[f64; 2]> {
        let s2 = self.scale * self.scale;
        self.weights.iter().map(|w| [w[0] / s2, w[1] / s2]).collect()
    }

    /// Pixel-space affine part `[c, a_x, a_y]` per output axis.
    pub fn affine_part(&self) -> [[f64; 3]; 2] {
        let s = self.scale;
        let ln_s2 = (s * s).ln();
        let mut out = [[0.0; 3]; 2];
        for axis in 0..2 {
            let a = self.affine[axis];
            let moment: f64 = self
                .centers
                .iter()
                .zip(&self.weights)
                .map(|(c, w)| w[axis] * (c[0] * c[0] + c[1] * c[1]))
                .sum();
            out[axis] = [
                a[0] - (a[1] * self.mean[0] + a[2] * self.mean[1]) / s - ln_s2 * moment,
                a[1] / s,
                a[2] / s,
            ];
            out[axis][axis + 1] += 1.0;
        }
        out
    }
}
