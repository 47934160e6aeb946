//! Two-epoch synthetic city used for end-to-end regression runs.
//!
//! The city is a 4x4 grid of blocks split by 16 px streets on a 512 px plane.
//! The second epoch carries scripted changes (removal, addition, translation,
//! shrinking, demolition) and is drawn with a constant cartographic offset.
//! Expected block scores follow from rectangle arithmetic alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde_json::Map;

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::geojson::{polygon_feature, write_collection};
use crate::instances::{split_tiles, write_tile_dir, InstanceClass, InstanceMap, TileGrid};
use crate::raster::{write_world_file, GeoTransform, Raster};
use crate::synth::{derive_seed, rng_for};

pub const SIZE: usize = 512;
pub const RESOLUTION: f64 = 0.5;
/// Where epoch-1 content appears on the second sheet, in plane pixels.
pub const SHIFT: (i64, i64) = (3, -2);
pub const PATCH: usize = 256;
pub const STEP: usize = 128;
pub const MIN_AREA_M2: f64 = 500.0;
const MARGIN: usize = 8;
const ORIGIN: (f64, f64) = (500_000.0, 5_400_000.0);
const YEARS: [u32; 2] = [1890, 1910];
const CELLS: [(i64, i64); 4] = [(0, 120), (136, 248), (264, 376), (392, 512)];

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Rect {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> i64 {
        (self.x1 - self.x0).max(0) * (self.y1 - self.y0).max(0)
    }

    pub fn intersect(&self, o: &Rect) -> Rect {
        Rect::new(self.x0.max(o.x0), self.y0.max(o.y0), self.x1.min(o.x1), self.y1.min(o.y1))
    }

    pub fn shifted(&self, dx: i64, dy: i64) -> Rect {
        Rect::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }

    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// A building of the first epoch and what became of it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lot {
    pub cell: (usize, usize),
    pub t1: Rect,
    pub t2: Option<Rect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub lots: Vec<Lot>,
    /// Second-epoch buildings without a predecessor.
    pub added: Vec<Rect>,
    pub texts: Vec<Rect>,
}

fn cell_rect(i: usize, j: usize) -> Rect {
    Rect::new(CELLS[j].0, CELLS[i].0, CELLS[j].1, CELLS[i].1)
}

fn quadrants(c: Rect) -> [Rect; 4] {
    let (mx, my) = ((c.x0 + c.x1) / 2, (c.y0 + c.y1) / 2);
    [
        Rect::new(c.x0, c.y0, mx, my),
        Rect::new(mx, c.y0, c.x1, my),
        Rect::new(c.x0, my, mx, c.y1),
        Rect::new(mx, my, c.x1, c.y1),
    ]
}

/// The scripted city. Quadrant order is TL, TR, BL, BR.
pub fn scene() -> Scene {
    let mut lots = Vec::new();
    let mut added = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            let c = cell_rect(i, j);
            let q = quadrants(c);
            let lot = |r: Rect, t2: Option<Rect>| Lot { cell: (i, j), t1: r, t2 };
            match (i, j) {
                // one building removed
                (1, 1) => {
                    lots.extend(q[..3].iter().map(|&r| lot(r, Some(r))));
                    lots.push(lot(q[3], None));
                }
                // empty lot built on
                (1, 2) => {
                    lots.extend([q[0], q[1], q[3]].iter().map(|&r| lot(r, Some(r))));
                    added.push(q[2]);
                }
                // whole-block building shifted east
                (2, 1) => lots.push(lot(c, Some(c.shifted(10, 0)))),
                // demolished
                (2, 2) => lots.extend(q.iter().map(|&r| lot(r, None))),
                // one building cut to half its width
                (3, 3) => {
                    lots.extend(q[..3].iter().map(|&r| lot(r, Some(r))));
                    let r = q[3];
                    lots.push(lot(r, Some(Rect::new(r.x0, r.y0, (r.x0 + r.x1) / 2, r.y1))));
                }
                _ => lots.extend(q.iter().map(|&r| lot(r, Some(r)))),
            }
        }
    }
    // street names
    let texts = vec![
        Rect::new(30, 124, 90, 132),
        Rect::new(290, 252, 350, 260),
        Rect::new(244, 300, 252, 350),
        Rect::new(420, 380, 480, 388),
    ];
    Scene { lots, added, texts }
}

fn in_plane(x: i64, y: i64) -> bool {
    x >= 0 && y >= 0 && x < SIZE as i64 && y < SIZE as i64
}

fn is_street(x: i64, y: i64) -> bool {
    let inside = |v: i64| CELLS.iter().any(|&(a, b)| v >= a && v < b);
    in_plane(x, y) && !(inside(x) && inside(y))
}

impl Scene {
    fn buildings(&self, epoch: usize) -> Vec<Rect> {
        if epoch == 0 {
            self.lots.iter().map(|l| l.t1).collect()
        } else {
            self.lots.iter().filter_map(|l| l.t2).chain(self.added.iter().copied()).collect()
        }
    }

    /// Instance labels in scene coordinates: buildings `1..=n`, the street
    /// network `n + 1`.
    fn label_at(&self, buildings: &[Rect], x: i64, y: i64) -> u32 {
        if let Some(k) = buildings.iter().position(|r| r.contains(x, y)) {
            return k as u32 + 1;
        }
        if is_street(x, y) {
            buildings.len() as u32 + 1
        } else {
            0
        }
    }

    /// Instance map of `epoch` on the shared plane. The second epoch is
    /// offset by [`SHIFT`].
    pub fn instance_map(&self, epoch: usize) -> Result<InstanceMap> {
        let b = self.buildings(epoch);
        let (sx, sy) = if epoch == 0 { (0, 0) } else { SHIFT };
        let labels = (0..SIZE * SIZE)
            .map(|k| {
                let (x, y) = ((k % SIZE) as i64, (k / SIZE) as i64);
                self.label_at(&b, x - sx, y - sy)
            })
            .collect();
        let mut classes: std::collections::BTreeMap<u32, InstanceClass> =
            (1..=b.len() as u32).map(|l| (l, InstanceClass::Building)).collect();
        classes.insert(b.len() as u32 + 1, InstanceClass::Road);
        InstanceMap::new(SIZE, SIZE, labels, classes)
    }

    /// Sheet raster of `epoch` in its native grid, with seeded paper noise.
    pub fn render(&self, epoch: usize, seed: u64) -> Result<Raster> {
        let b = self.buildings(epoch);
        let (n, off) = if epoch == 0 { (SIZE, 0i64) } else { (SIZE + 2 * MARGIN, MARGIN as i64) };
        let (sx, sy) = if epoch == 0 { (0, 0) } else { SHIFT };
        let mut rng = rng_for(derive_seed(seed, epoch as u64));
        let noise: Vec<i16> = (0..n * n).map(|_| rng.random_range(-3i16..=3)).collect();
        let texts = &self.texts;
        let color = |x: i64, y: i64| -> [u8; 3] {
            if let Some(t) = texts.iter().find(|t| t.contains(x, y)) {
                // glyph-like strokes along the long side
                let along = if t.x1 - t.x0 >= t.y1 - t.y0 { x - t.x0 } else { y - t.y0 };
                return if along % 5 < 3 { [40, 30, 30] } else { [252, 250, 244] };
            }
            if let Some(k) = b.iter().position(|r| r.contains(x, y)) {
                let r = &b[k];
                let edge = (x - r.x0).min(r.x1 - 1 - x).min(y - r.y0).min(r.y1 - 1 - y);
                if edge < 2 {
                    return [120, 60, 55];
                }
                let tint = (k as i64 * 37 % 40) as u8;
                return [200 + tint / 2, 120 + tint, 110];
            }
            if is_street(x, y) {
                [252, 250, 244]
            } else {
                [238, 228, 205]
            }
        };
        Raster::from_fn(n, n, 3, |x, y, c| {
            let (px, py) = (x as i64 - off - sx, y as i64 - off - sy);
            let v = color(px, py)[c] as i16 + noise[y * n + x];
            v.clamp(0, 255) as u8
        })
    }

    /// Block scores of the first epoch in block-id order: ids follow the
    /// raster order of each block's first pixel.
    pub fn expected_scores(&self) -> Vec<ExpectedScore> {
        let (sx, sy) = SHIFT;
        let plane = Rect::new(0, 0, SIZE as i64, SIZE as i64);
        // t1 pixels whose partner lies on the second sheet
        let visible = plane.intersect(&plane.shifted(-sx, -sy));
        let px_m2 = RESOLUTION * RESOLUTION;
        let eligible = |a: i64| a as f64 * px_m2 >= MIN_AREA_M2;
        let mut cells: Vec<(usize, usize)> = self.lots.iter().map(|l| l.cell).collect();
        cells.sort_by_key(|&(i, j)| (CELLS[i].0, CELLS[j].0));
        cells.dedup();
        cells
            .iter()
            .enumerate()
            .map(|(k, &cell)| {
                let (mut sum, mut matched, mut unmatched) = (0.0, 0, 0);
                for l in self.lots.iter().filter(|l| l.cell == cell) {
                    if !eligible(l.t1.area()) {
                        continue;
                    }
                    let iou = l.t2.map(|r2| {
                        let w = r2.intersect(&visible);
                        let inter = l.t1.intersect(&w).area();
                        let union = l.t1.area() + w.area() - inter;
                        (eligible(w.area()) && inter > 0).then(|| inter as f64 / union as f64)
                    });
                    match iou.flatten() {
                        Some(v) => {
                            sum += v;
                            matched += 1;
                        }
                        None => unmatched += 1,
                    }
                }
                let n = matched + unmatched;
                ExpectedScore {
                    block_id: k as u32 + 1,
                    mean_iou: (n > 0).then(|| sum / n as f64),
                    n_matched: matched,
                    n_unmatched: unmatched,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedScore {
    pub block_id: u32,
    pub mean_iou: Option<f64>,
    pub n_matched: usize,
    pub n_unmatched: usize,
}

pub const EXPECTED_HEADER: &str = "block_id,mean_iou,n_matched,n_unmatched";

pub fn expected_csv(scores: &[ExpectedScore]) -> String {
    let mut s = format!("{EXPECTED_HEADER}\n");
    for e in scores {
        let v = e.mean_iou.map(|v| format!("{v:.12}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.block_id, v, e.n_matched, e.n_unmatched);
    }
    s
}

pub fn parse_expected_csv(text: &str) -> Result<Vec<ExpectedScore>> {
    let mut lines = text.lines();
    if lines.next() != Some(EXPECTED_HEADER) {
        return Err(Error::Format("expected.csv: bad header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Format(format!("expected.csv: bad row `{l}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(ExpectedScore {
                block_id: f[0].parse().map_err(|_| bad())?,
                mean_iou: if f[1].is_empty() { None } else { Some(f[1].parse().map_err(|_| bad())?) },
                n_matched: f[2].parse().map_err(|_| bad())?,
                n_unmatched: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Paths of a written fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub expected: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes rasters, world files, instance tiles, the inter-epoch field,
/// annotations, `expected.csv` and a pipeline `config.toml` into `dir`.
pub fn write_fixture(dir: impl AsRef<Path>, seed: u64) -> Result<FixtureFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sc = scene();
    let grid = TileGrid::new(PATCH, STEP, SIZE, SIZE)?;
    for (epoch, year) in YEARS.iter().enumerate() {
        sc.render(epoch, seed)?.save_png(dir.join(format!("city_{year}.png")))?;
        let m = (epoch * MARGIN) as f64 * RESOLUTION;
        let gt = GeoTransform::north_up(ORIGIN.0 - m, ORIGIN.1 + m, RESOLUTION)?;
        write_world_file(dir.join(format!("city_{year}.pgw")), &gt)?;
        let map = sc.instance_map(epoch)?;
        write_tile_dir(dir.join(format!("tiles_{year}")), &grid, &split_tiles(&map, &grid)?)?;
    }
    DisplacementField::constant(SIZE, SIZE, SHIFT.0 as f32, SHIFT.1 as f32)
        .save(dir.join(format!("city_{}_{}.dfld", YEARS[0], YEARS[1])), None)?;

    let mut features = Vec::new();
    for l in &sc.lots {
        let mut p = Map::new();
        p.insert("class".into(), "building".into());
        features.push(polygon_feature(&ring(&l.t1), p));
    }
    for t in &sc.texts {
        let mut p = Map::new();
        p.insert("class".into(), "text".into());
        features.push(polygon_feature(&ring(t), p));
    }
    write_collection(dir.join(format!("city_{}.geojson", YEARS[0])), features)?;

    let expected = dir.join("expected.csv");
    write(&expected, &expected_csv(&sc.expected_scores()))?;
    let config = dir.join("config.toml");
    write(&config, &config_text(seed))?;
    Ok(FixtureFiles {
        dir: dir.to_path_buf(),
        config,
        expected,
    })
}

fn ring(r: &Rect) -> Vec<[f64; 2]> {
    let (x0, y0, x1, y1) = (r.x0 as f64, r.y0 as f64, r.x1 as f64, r.y1 as f64);
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

fn config_text(seed: u64) -> String {
    let (a, b) = (YEARS[0], YEARS[1]);
    format!(
        r#"seed = {seed}
output = "out"
resolution = {RESOLUTION}

[[sheets]]
id = "city"

[[sheets.epochs]]
year = {a}
raster = "city_{a}.png"
world_file = "city_{a}.pgw"
tiles = "tiles_{a}"
field = "city_{a}_{b}.dfld"
annotations = "city_{a}.geojson"

[[sheets.epochs]]
year = {b}
raster = "city_{b}.png"
world_file = "city_{b}.pgw"
tiles = "tiles_{b}"

[stitch]
patch_size = {PATCH}
step = {STEP}

[change]
min_area_m2 = {MIN_AREA_M2}

[synth]
count = 4

[synth.triplet]
patch = 256
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_arithmetic() {
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.intersect(&Rect::new(5, 8, 20, 20)).area(), 10);
        assert_eq!(a.intersect(&Rect::new(10, 0, 20, 10)).area(), 0);
        assert_eq!(a.shifted(3, -2), Rect::new(3, -2, 13, 8));
    }

    #[test]
    fn expected_scores_by_hand() {
        let e = scene().expected_scores();
        assert_eq!(e.len(), 16);
        // interior untouched block
        assert_eq!(e[5 - 1].mean_iou, Some(1.0));
        // top row loses two of its 60 rows to the offset
        let top = 58.0 / 60.0;
        assert!((e[1].mean_iou.unwrap() - (2.0 * top + 2.0) / 4.0).abs() < 1e-12);
        // one of four removed
        assert_eq!(e[5].mean_iou, Some(0.75));
        assert_eq!((e[5].n_matched, e[5].n_unmatched), (3, 1));
        // addition is invisible from the first epoch
        assert_eq!(e[6].mean_iou, Some(1.0));
        assert_eq!(e[6].n_matched, 3);
        // 112 px block shifted by 10
        assert!((e[9].mean_iou.unwrap() - 102.0 / 122.0).abs() < 1e-12);
        assert_eq!(e[10].mean_iou, Some(0.0));
        assert_eq!(e[10].n_unmatched, 4);
    }

    #[test]
    fn instance_maps_are_offset() {
        let sc = scene();
        let a = sc.instance_map(0).unwrap();
        let b = sc.instance_map(1).unwrap();
        let w = SIZE;
        // a building pixel of the untouched block (0,1) moves with the shift
        let (x, y) = (150usize, 40usize);
        let la = a.labels()[y * w + x];
        let lb = b.labels()[(y - 2) * w + x + 3];
        assert_eq!(a.class_of(la), Some(InstanceClass::Building));
        assert_eq!(b.class_of(lb), Some(InstanceClass::Building));
        assert_eq!(a.class_of(a.labels()[128 * w + 5]), Some(InstanceClass::Road));
    }

    #[test]
    fn csv_round_trip() {
        let e = scene().expected_scores();
        let back = parse_expected_csv(&expected_csv(&e)).unwrap();
        assert_eq!(back.len(), e.len());
        for (a, b) in e.iter().zip(&back) {
            assert!((a.mean_iou.unwrap() - b.mean_iou.unwrap()).abs() < 1e-11);
            assert_eq!(a.n_matched, b.n_matched);
        }
    }
}
