//! Merging overlapping tile predictions into one sheet-level instance map.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::components::label_regions;
use super::map::{InstanceClass, InstanceMap};
use crate::error::{Error, Result};
use crate::par;

/// Tiling of an `height x width` sheet into `patch_size` squares every `step` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub patch_size: usize,
    pub step: usize,
    pub height: usize,
    pub width: usize,
}

impl TileGrid {
    pub fn new(patch_size: usize, step: usize, height: usize, width: usize) -> Result<Self> {
        if step == 0 || step > patch_size {
            return Err(Error::Config(format!(
                "tile step {step} must be in 1..={patch_size}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::Config("sheet must be at least 1x1".into()));
        }
        Ok(TileGrid {
            patch_size,
            step,
            height,
            width,
        })
    }

    pub fn overlap(&self) -> usize {
        self.patch_size - self.step
    }

    fn count(&self, extent: usize) -> usize {
        if extent <= self.patch_size {
            1
        } else {
            (extent - self.patch_size).div_ceil(self.step) + 1
        }
    }

    /// Tile rows; equals `height / step - 1` when the sheet is a multiple
    /// of the step and `patch_size = 2 * step`.
    pub fn rows(&self) -> usize {
        self.count(self.height)
    }

    pub fn cols(&self) -> usize {
        self.count(self.width)
    }

    /// Sheet extent after padding so the last tile fits.
    pub fn padded(&self) -> (usize, usize) {
        (
            (self.rows() - 1) * self.step + self.patch_size,
            (self.cols() - 1) * self.step + self.patch_size,
        )
    }

    /// Top-left pixel `(x, y)` of tile `index` in row-major order.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        let c = self.cols();
        ((index % c) * self.step, (index / c) * self.step)
    }

    pub fn tile_name(row: usize, col: usize) -> String {
        format!("r{row}_c{col}.imap")
    }
}

/// Cuts a sheet into row-major tiles, padding with background.
pub fn split_tiles(map: &InstanceMap, grid: &TileGrid) -> Result<Vec<InstanceMap>> {
    if (map.height(), map.width()) != (grid.height, grid.width) {
        return Err(Error::Dimension("map does not match tile grid".into()));
    }
    let n = grid.rows() * grid.cols();
    Ok((0..n)
        .map(|i| {
            let (x0, y0) = grid.origin(i);
            map.crop_padded(x0, y0, grid.patch_size, grid.patch_size)
        })
        .collect())
}

/// Adopt-or-allocate decision for one tile instance.
fn best_match(
    tile: &InstanceMap,
    pixels: &[usize],
    canvas: &[u32],
    canvas_width: usize,
    origin: (usize, usize),
    region: (usize, usize, usize, usize),
    region_area: &HashMap<u32, usize>,
) -> Option<u32> {
    let (rx0, ry0, rx1, ry1) = region;
    let s = tile.width();
    let mut inter: BTreeMap<u32, usize> = BTreeMap::new();
    let mut own = 0usize;
    for &p in pixels {
        let (x, y) = (p % s, p / s);
        if x < rx0 || x >= rx1 || y < ry0 || y >= ry1 {
            continue;
        }
        own += 1;
        let g = canvas[(origin.1 + y) * canvas_width + origin.0 + x];
        if g != 0 {
            *inter.entry(g).or_insert(0) += 1;
        }
    }
    let mut best: Option<(u32, f64)> = None;
    // BTreeMap order makes ties resolve to the smaller id
    for (&g, &i) in &inter {
        let iou = i as f64 / (own + region_area[&g] - i) as f64;
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    best.filter(|&(_, iou)| iou > 0.0).map(|(g, _)| g)
}

fn region_areas(canvas: &[u32], canvas_width: usize, origin: (usize, usize), region: (usize, usize, usize, usize)) -> HashMap<u32, usize> {
    let (rx0, ry0, rx1, ry1) = region;
    let mut m = HashMap::new();
    for y in ry0..ry1 {
        for x in rx0..rx1 {
            let g = canvas[(origin.1 + y) * canvas_width + origin.0 + x];
            if g != 0 {
                *m.entry(g).or_insert(0) += 1;
            }
        }
    }
    m
}

/// Stitches row-major tiles.
///
/// Each tile instance adopts the id of its best-IoU instance in the upper
/// overlap; failing that, in the left overlap; failing that, it gets a fresh
/// id (starting at 1). The tile then overwrites its full footprint. Ids in
/// the output are not compacted.
pub fn stitch_tiles(patches: &[InstanceMap], grid: &TileGrid) -> Result<InstanceMap> {
    let (rows, cols) = (grid.rows(), grid.cols());
    if patches.len() != rows * cols {
        return Err(Error::Layout(format!(
            "{} patches for a {rows}x{cols} tile grid",
            patches.len()
        )));
    }
    let s = grid.patch_size;
    if let Some((i, p)) = patches.iter().enumerate().find(|(_, p)| p.height() != s || p.width() != s) {
        return Err(Error::Layout(format!(
            "patch {i} is {}x{}, expected {s}x{s}",
            p.width(),
            p.height()
        )));
    }
    let o = grid.overlap();
    let (ph, pw) = grid.padded();
    let mut canvas = vec![0u32; ph * pw];
    let mut classes: BTreeMap<u32, InstanceClass> = BTreeMap::new();
    let mut next_id = 1u32;

    for (idx, tile) in patches.iter().enumerate() {
        let (r, c) = (idx / cols, idx % cols);
        let origin = grid.origin(idx);
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (p, &l) in tile.labels().iter().enumerate() {
            if l != 0 {
                groups.entry(l).or_default().push(p);
            }
        }
        let upper = (0, 0, s, o);
        let left = (0, 0, o, s);
        let upper_area = if r > 0 { region_areas(&canvas, pw, origin, upper) } else { HashMap::new() };
        let left_area = if c > 0 { region_areas(&canvas, pw, origin, left) } else { HashMap::new() };
        let groups: Vec<(u32, Vec<usize>)> = groups.into_iter().collect();
        let adopted: Vec<Option<u32>> = par::map_slice(&groups, |(_, pixels)| {
            let up = (r > 0)
                .then(|| best_match(tile, pixels, &canvas, pw, origin, upper, &upper_area))
                .flatten();
            up.or_else(|| {
                (c > 0)
                    .then(|| best_match(tile, pixels, &canvas, pw, origin, left, &left_area))
                    .flatten()
            })
        });
        let mut remap: HashMap<u32, u32> = HashMap::with_capacity(groups.len());
        for ((label, _), adopt) in groups.iter().zip(adopted) {
            let g = adopt.unwrap_or_else(|| {
                let g = next_id;
                next_id += 1;
                g
            });
            remap.insert(*label, g);
            let class = tile.class_of(*label).expect("tile labels have classes");
            classes.entry(g).or_insert(class);
        }
        for y in 0..s {
            let row = &mut canvas[(origin.1 + y) * pw + origin.0..][..s];
            for (x, v) in row.iter_mut().enumerate() {
                let l = tile.get(x, y);
                *v = if l == 0 { 0 } else { remap[&l] };
            }
        }
    }

    let (h, w) = (grid.height, grid.width);
    let labels: Vec<u32> = (0..h).flat_map(|y| canvas[y * pw..y * pw + w].iter().copied()).collect();
    let mut out = InstanceMap::new(h, w, labels, classes)?;
    out.prune_classes();
    Ok(out)
}

/// Extra 4-connected pieces beyond one per label, i.e. how fragmented the
/// instances are.
pub fn count_fragments(map: &InstanceMap) -> usize {
    let (_, pieces) = label_regions(map.labels(), map.width(), map.height());
    pieces - map.label_set().len()
}

/// Reads tiles `r{row}_c{col}.imap` for every cell of the grid.
pub fn load_tile_dir(dir: impl AsRef<Path>, grid: &TileGrid) -> Result<Vec<InstanceMap>> {
    let dir = dir.as_ref();
    let mut out = Vec::with_capacity(grid.rows() * grid.cols());
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let p = dir.join(TileGrid::tile_name(r, c));
            if !p.exists() {
                return Err(Error::Layout(format!(
                    "missing tile {} for a {}x{} grid",
                    p.display(),
                    grid.rows(),
                    grid.cols()
                )));
            }
            out.push(InstanceMap::load(&p)?);
        }
    }
    Ok(out)
}

pub fn write_tile_dir(dir: impl AsRef<Path>, grid: &TileGrid, tiles: &[InstanceMap]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, t) in tiles.iter().enumerate() {
        t.save(dir.join(TileGrid::tile_name(i / grid.cols(), i % grid.cols())))?;
    }
    Ok(())
}

/// True when `a` and `b` agree up to a bijection of nonzero labels (0 fixed).
pub fn equal_up_to_relabel(a: &InstanceMap, b: &InstanceMap) -> bool {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return false;
    }
    let mut fwd: HashMap<u32, u32> = HashMap::new();
    let mut bwd: HashMap<u32, u32> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}
