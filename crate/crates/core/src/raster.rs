//! Rasters, world-file georeferencing and group rectification.
//!
//! Pixel coordinates refer to pixel centers: pixel `(col, row)` sits at
//! `(col, row)` and covers `[col - 0.5, col + 0.5] x [row - 0.5, row + 0.5]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Row-major 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("raster must be at least 1x1, got {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!("unsupported channel count {channels}")));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Dimension("raster size overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "raster data has {} samples, expected {expected}",
                data.len()
            )));
        }
        Ok(Raster {
            height,
            width,
            channels,
            data,
        })
    }

    /// Raster filled with a constant value.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Raster::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Raster::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Copy of the `height x width` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Raster> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Raster::new(height, width, self.channels, data)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Raster> {
        let path = path.as_ref();
        let img = image::open(path)?;
        let raster = match img {
            image::DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                Raster::new(h as usize, w as usize, 1, buf.into_raw())?
            }
            image::DynamicImage::ImageLumaA8(_) | image::DynamicImage::ImageLuma16(_) => {
                let buf = img.to_luma8();
                let (w, h) = buf.dimensions();
                Raster::new(h as usize, w as usize, 1, buf.into_raw())?
            }
            other => {
                let buf = other.to_rgb8();
                let (w, h) = buf.dimensions();
                Raster::new(h as usize, w as usize, 3, buf.into_raw())?
            }
        };
        Ok(raster)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path.as_ref(),
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

/// Bilinear footprint of a sample position inside a `width x height` grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Bilinear {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
}

impl Bilinear {
    /// `None` when the position lies outside `[0, w-1] x [0, h-1]`.
    ///
    /// Positions within 1e-9 of an integer are snapped so that exact
    /// integer offsets never blur.
    #[inline]
    pub fn at(x: f64, y: f64, width: usize, height: usize) -> Option<Bilinear> {
        let x = snap(x);
        let y = snap(y);
        if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
            return None;
        }
        let (x0, fx) = split(x, width);
        let (y0, fy) = split(y, height);
        Some(Bilinear {
            x0,
            y0,
            x1: (x0 + 1).min(width - 1),
            y1: (y0 + 1).min(height - 1),
            fx,
            fy,
        })
    }

    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ]
    }

    /// Interpolates a value accessed through `get(x, y)`.
    #[inline]
    pub fn interpolate(&self, get: impl Fn(usize, usize) -> f64) -> f64 {
        let w = self.weights();
        w[0] * get(self.x0, self.y0)
            + w[1] * get(self.x1, self.y0)
            + w[2] * get(self.x0, self.y1)
            + w[3] * get(self.x1, self.y1)
    }

}

/// Nearest pixel to a position, accepting positions within half a pixel of the grid.
#[inline]
pub(crate) fn nearest_pixel(x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let xi = (snap(x) + 0.5).floor();
    let yi = (snap(y) + 0.5).floor();
    if xi >= 0.0 && yi >= 0.0 && xi < width as f64 && yi < height as f64 {
        Some((xi as usize, yi as usize))
    } else {
        None
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

#[inline]
fn split(v: f64, len: usize) -> (usize, f64) {
    if len == 1 {
        return (0, 0.0);
    }
    let i = (v.floor() as usize).min(len - 2);
    (i, v - i as f64)
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Affine pixel-center to world mapping:
/// `x = a*col + b*row + c`, `y = d*col + e*row + f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl GeoTransform {
    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<Self> {
        let gt = GeoTransform { a, b, c, d, e, f };
        let det = gt.determinant();
        let scale = a.abs().max(b.abs()).max(d.abs()).max(e.abs());
        if !(det.is_finite() && det.abs() > 1e-12 * scale * scale) {
            return Err(Error::DegenerateGeoreference(det));
        }
        Ok(gt)
    }

    /// North-up transform with square pixels of size `resolution`.
    pub fn north_up(origin_x: f64, origin_y: f64, resolution: f64) -> Result<Self> {
        GeoTransform::new(resolution, 0.0, origin_x, 0.0, -resolution, origin_y)
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.e - self.b * self.d
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.a * col + self.b * row + self.c,
            self.d * col + self.e * row + self.f,
        )
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let det = self.determinant();
        let dx = x - self.c;
        let dy = y - self.f;
        ((self.e * dx - self.b * dy) / det, (self.a * dy - self.d * dx) / det)
    }

    /// Ground size of one pixel along columns and rows.
    pub fn pixel_size(&self) -> (f64, f64) {
        (self.a.hypot(self.d), self.b.hypot(self.e))
    }

    /// World-space bounding box `(xmin, ymin, xmax, ymax)` of the pixel footprints.
    pub fn footprint(&self, width: usize, height: usize) -> (f64, f64, f64, f64) {
        let (w, h) = (width as f64 - 0.5, height as f64 - 0.5);
        let corners = [(-0.5, -0.5), (w, -0.5), (-0.5, h), (w, h)];
        corners.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), &(c, r)| {
                let (x, y) = self.pixel_to_world(c, r);
                (x0.min(x), y0.min(y), x1.max(x), y1.max(y))
            },
        )
    }

    /// Parses ESRI world-file text (six numbers: a, d, b, e, c, f).
    pub fn parse_world_file(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() != 6 {
            return Err(Error::Format(format!(
                "world file must have 6 numeric lines, found {}",
                lines.len()
            )));
        }
        let mut v = [0.0f64; 6];
        for (slot, line) in v.iter_mut().zip(&lines) {
            *slot = line
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Format(format!("world file line `{line}` is not a number")))?;
        }
        let [a, d, b, e, c, f] = v;
        GeoTransform::new(a, b, c, d, e, f)
    }

    pub fn to_world_file(&self) -> String {
        [self.a, self.d, self.b, self.e, self.c, self.f]
            .iter()
            .map(|v| format!("{v:.12}\n"))
            .collect()
    }
}

pub fn load_world_file(path: impl AsRef<Path>) -> Result<GeoTransform> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GeoTransform::parse_world_file(&text)
}

pub fn write_world_file(path: impl AsRef<Path>, gt: &GeoTransform) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, gt.to_world_file()).map_err(|e| Error::io(path, e))
}

/// Shared north-up pixel plane produced by [`rectify_group`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifyPlan {
    /// World x of the center of pixel (0, 0).
    pub origin_x: f64,
    /// World y of the center of pixel (0, 0).
    pub origin_y: f64,
    /// World units per pixel.
    pub resolution: f64,
    pub height: usize,
    pub width: usize,
}

impl RectifyPlan {
    pub fn new(origin_x: f64, origin_y: f64, resolution: f64, height: usize, width: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!("target resolution must be positive, got {resolution}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::Config("plan extent must be at least 1x1".into()));
        }
        Ok(RectifyPlan {
            origin_x,
            origin_y,
            resolution,
            height,
            width,
        })
    }

    pub fn geo_transform(&self) -> GeoTransform {
        GeoTransform {
            a: self.resolution,
            b: 0.0,
            c: self.origin_x,
            d: 0.0,
            e: -self.resolution,
            f: self.origin_y,
        }
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.resolution,
            self.origin_y - row * self.resolution,
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: RectifyPlan = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        RectifyPlan::new(plan.origin_x, plan.origin_y, plan.resolution, plan.height, plan.width)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RectifyPlan::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Bilinear,
    /// For label rasters.
    Nearest,
}

/// Plan covering the intersection of all input footprints at `target_resolution`.
pub fn plan_intersection(inputs: &[(usize, usize, GeoTransform)], target_resolution: f64) -> Result<RectifyPlan> {
    if inputs.is_empty() {
        return Err(Error::Config("rectification needs at least one raster".into()));
    }
    if !(target_resolution > 0.0 && target_resolution.is_finite()) {
        return Err(Error::Config(format!(
            "target resolution must be positive, got {target_resolution}"
        )));
    }
    let (xmin, ymin, xmax, ymax) = inputs.iter().fold(
        (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY),
        |(x0, y0, x1, y1), (w, h, gt)| {
            let (a0, b0, a1, b1) = gt.footprint(*w, *h);
            (x0.max(a0), y0.max(b0), x1.min(a1), y1.min(b1))
        },
    );
    let width = ((xmax - xmin) / target_resolution + 1e-9).floor();
    let height = ((ymax - ymin) / target_resolution + 1e-9).floor();
    if !(width >= 1.0 && height >= 1.0) {
        return Err(Error::NoOverlap);
    }
    RectifyPlan::new(
        xmin + 0.5 * target_resolution,
        ymax - 0.5 * target_resolution,
        target_resolution,
        height as usize,
        width as usize,
    )
}

/// Resamples one raster onto `plan`. Pixels with no source coverage are 0.
pub fn rectify_onto(raster: &Raster, gt: &GeoTransform, plan: &RectifyPlan, resampling: Resampling) -> Raster {
    let ch = raster.channels();
    let mut data = vec![0u8; plan.height * plan.width * ch];
    par::for_each_row(&mut data, plan.width * ch, |row, out| {
        for col in 0..plan.width {
            let (wx, wy) = plan.pixel_to_world(col as f64, row as f64);
            let (sx, sy) = gt.world_to_pixel(wx, wy);
            let px = &mut out[col * ch..(col + 1) * ch];
            match resampling {
                Resampling::Bilinear => {
                    let Some(bl) = Bilinear::at(sx, sy, raster.width(), raster.height()) else {
                        continue;
                    };
                    for (c, v) in px.iter_mut().enumerate() {
                        *v = quantize(bl.interpolate(|x, y| raster.get(x, y, c) as f64));
                    }
                }
                Resampling::Nearest => {
                    if let Some((x, y)) = nearest_pixel(sx, sy, raster.width(), raster.height()) {
                        px.copy_from_slice(raster.pixel(x, y));
                    }
                }
            }
        }
    });
    Raster::new(plan.height, plan.width, ch, data).expect("plan extent is non-empty")
}

/// Rectifies a group of georeferenced rasters onto a common north-up plane
/// spanning the intersection of their extents.
pub fn rectify_group(rasters: &[(Raster, GeoTransform)], target_resolution: f64) -> Result<(Vec<Raster>, RectifyPlan)> {
    rectify_group_with(rasters, target_resolution, Resampling::Bilinear)
}

pub fn rectify_group_with(
    rasters: &[(Raster, GeoTransform)],
    target_resolution: f64,
    resampling: Resampling,
) -> Result<(Vec<Raster>, RectifyPlan)> {
    let shapes: Vec<_> = rasters.iter().map(|(r, gt)| (r.width(), r.height(), *gt)).collect();
    let plan = plan_intersection(&shapes, target_resolution)?;
    let out = rasters
        .iter()
        .map(|(r, gt)| rectify_onto(r, gt, &plan, resampling))
        .collect();
    Ok((out, plan))
}
