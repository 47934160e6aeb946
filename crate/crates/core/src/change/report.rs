use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::profile::BlockChangeProfile;
use crate::error::{Error, Result};
use crate::geojson::{polygon_feature, write_collection};
use crate::instances::BlockMap;
use crate::raster::{Raster, RectifyPlan};

pub const CSV_HEADER: &str = "block_id,epoch_pair,mean_iou,n_matched,n_unmatched";

/// Outer boundary of block `id` along pixel edges, in corner coordinates
/// (pixel `(x, y)` spans `[x, x+1) x [y, y+1)`), clockwise on screen.
/// Only corners where the direction changes are kept.
pub fn block_outline(blocks: &BlockMap, id: u32) -> Option<Vec<[i64; 2]>> {
    let (w, h) = (blocks.width() as i64, blocks.height() as i64);
    let first = blocks.labels().iter().position(|&l| l == id)?;
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && blocks.get(x as usize, y as usize) == id;
    // doubled coordinates: the pixel right of edge (v, e) has centre 2v + e + right(e)
    let right = |e: [i64; 2]| [-e[1], e[0]];
    let is_edge = |v: [i64; 2], e: [i64; 2]| {
        let r = right(e);
        let mx = 2 * v[0] + e[0];
        let my = 2 * v[1] + e[1];
        let px = |cx: i64, cy: i64| inside((cx - 1).div_euclid(2), (cy - 1).div_euclid(2));
        px(mx + r[0], my + r[1]) && !px(mx - r[0], my - r[1])
    };
    let v0 = [first as i64 % w, first as i64 / w];
    let (mut v, mut d) = (v0, [1i64, 0]);
    let mut ring = Vec::new();
    loop {
        v = [v[0] + d[0], v[1] + d[1]];
        let left = [d[1], -d[0]];
        let e = [right(d), d, left]
            .into_iter()
            .find(|&e| is_edge(v, e))
            .expect("boundary is closed");
        if e != d {
            ring.push(v);
        }
        d = e;
        if v == v0 && d == [1, 0] {
            break;
        }
    }
    Some(ring)
}

fn check_plane(blocks: &BlockMap, plan: &RectifyPlan) -> Result<()> {
    if (blocks.height(), blocks.width()) != (plan.height, plan.width) {
        return Err(Error::Dimension(format!(
            "block map is {}x{} but plan is {}x{}",
            blocks.width(),
            blocks.height(),
            plan.width,
            plan.height
        )));
    }
    Ok(())
}

pub fn report_csv(profiles: &[BlockChangeProfile]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for p in profiles {
        for b in &p.blocks {
            let mean = b.mean_iou.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{},{},{}", b.block_id, p.epoch_pair, mean, b.n_matched, b.n_unmatched).unwrap();
        }
    }
    s
}

/// One polygon feature per (profile, block) in world coordinates.
pub fn report_features(profiles: &[BlockChangeProfile], blocks: &BlockMap, plan: &RectifyPlan) -> Result<Vec<Value>> {
    check_plane(blocks, plan)?;
    let mut features = Vec::new();
    for p in profiles {
        for b in &p.blocks {
            let Some(ring) = block_outline(blocks, b.block_id) else {
                continue;
            };
            let world: Vec<[f64; 2]> = ring
                .iter()
                .map(|c| {
                    let (x, y) = plan.pixel_to_world(c[0] as f64 - 0.5, c[1] as f64 - 0.5);
                    [x, y]
                })
                .collect();
            let mut props = Map::new();
            props.insert("block_id".into(), b.block_id.into());
            props.insert("epoch_pair".into(), p.epoch_pair.clone().into());
            props.insert("mean_iou".into(), b.mean_iou.map_or(Value::Null, Value::from));
            props.insert("n_matched".into(), b.n_matched.into());
            props.insert("n_unmatched".into(), b.n_unmatched.into());
            features.push(polygon_feature(&world, props));
        }
    }
    Ok(features)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub geojson: PathBuf,
}

/// Writes `change.csv` and `change.geojson` into `dir`.
pub fn export_change_report(
    profiles: &[BlockChangeProfile],
    blocks: &BlockMap,
    plan: &RectifyPlan,
    dir: impl AsRef<Path>,
) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    let features = report_features(profiles, blocks, plan)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("change.csv");
    fs::write(&csv, report_csv(profiles)).map_err(|e| Error::io(&csv, e))?;
    let geojson = dir.join("change.geojson");
    write_collection(&geojson, features)?;
    Ok(ReportFiles { csv, geojson })
}

const RAMP: [(f64, [f64; 3]); 3] = [
    (0.0, [165.0, 0.0, 38.0]),
    (0.5, [255.0, 255.0, 191.0]),
    (1.0, [49.0, 54.0, 149.0]),
];

/// Diverging ramp: low IoU red, high IoU blue.
pub fn ramp_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let k = if v <= RAMP[1].0 { 0 } else { 1 };
    let (t0, c0) = RAMP[k];
    let (t1, c1) = RAMP[k + 1];
    let t = (v - t0) / (t1 - t0);
    [0, 1, 2].map(|i| (c0[i] + t * (c1[i] - c0[i])).round() as u8)
}

/// RGB map of block scores; blocks without a score are grey, the rest white.
pub fn render_choropleth(profile: &BlockChangeProfile, blocks: &BlockMap) -> Result<Raster> {
    let colors: Vec<[u8; 3]> = (0..=blocks.len() as u32)
        .map(|id| match id {
            0 => [255, 255, 255],
            id => profile
                .get(id)
                .and_then(|b| b.mean_iou)
                .map_or([200, 200, 200], ramp_color),
        })
        .collect();
    Raster::from_fn(blocks.height(), blocks.width(), 3, |x, y, c| {
        colors.get(blocks.get(x, y) as usize).map_or(255, |col| col[c])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::change::BlockScore;
    use crate::geojson::parse_polygons;

    fn blocks(h: usize, w: usize, cells: &[(u32, usize, usize)]) -> BlockMap {
        let mut labels = vec![0u32; h * w];
        for &(id, x, y) in cells {
            labels[y * w + x] = id;
        }
        BlockMap::from_labels(h, w, labels, 1.0).unwrap()
    }

    fn rect_cells(id: u32, x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<(u32, usize, usize)> {
        (y0..y1).flat_map(|y| (x0..x1).map(move |x| (id, x, y))).collect()
    }

    fn profile(scores: &[Option<f64>]) -> BlockChangeProfile {
        BlockChangeProfile {
            epoch_pair: "1900-1950".into(),
            blocks: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| BlockScore {
                    block_id: i as u32 + 1,
                    mean_iou: s,
                    n_matched: 1,
                    n_unmatched: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn outline_of_rectangle_and_l_shape() {
        let b = blocks(6, 6, &rect_cells(1, 1, 2, 4, 4));
        assert_eq!(block_outline(&b, 1).unwrap(), vec![[4, 2], [4, 4], [1, 4], [1, 2]]);
        let mut cells = rect_cells(1, 0, 0, 3, 1);
        cells.push((1, 0, 1));
        let b = blocks(3, 3, &cells);
        assert_eq!(block_outline(&b, 1).unwrap().len(), 6);
        assert!(block_outline(&b, 2).is_none());
    }

    #[test]
    fn outline_ignores_holes() {
        let mut cells = rect_cells(1, 0, 0, 5, 5);
        cells.retain(|&(_, x, y)| (x, y) != (2, 2));
        let b = blocks(5, 5, &cells);
        assert_eq!(block_outline(&b, 1).unwrap().len(), 4);
    }

    #[test]
    fn empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let b = blocks(4, 4, &[]);
        let plan = RectifyPlan::new(0.0, 0.0, 1.0, 4, 4).unwrap();
        let files = export_change_report(&[], &b, &plan, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(files.csv).unwrap(), format!("{CSV_HEADER}\n"));
        let text = fs::read_to_string(files.geojson).unwrap();
        assert!(parse_polygons(&text).unwrap().is_empty());
    }

    #[test]
    fn one_block_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cells = rect_cells(1, 1, 1, 5, 3);
        cells.extend(rect_cells(1, 1, 3, 3, 6));
        let b = blocks(8, 8, &cells);
        let plan = RectifyPlan::new(1000.5, 2000.5, 1.0, 8, 8).unwrap();
        let files = export_change_report(&[profile(&[Some(0.6)])], &b, &plan, dir.path()).unwrap();
        let csv = fs::read_to_string(files.csv).unwrap();
        assert_eq!(csv.lines().collect::<Vec<_>>(), vec![CSV_HEADER, "1,1900-1950,0.6,1,0"]);
        let text = fs::read_to_string(files.geojson).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["features"][0]["properties"]["mean_iou"], 0.6);
        let polys = parse_polygons(&text).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].exterior.len(), block_outline(&b, 1).unwrap().len());
        assert_eq!(polys[0].exterior.len(), 6);
        // corner (1, 1) sits half a pixel up-left of pixel centre (1, 1)
        assert!(polys[0].exterior.contains(&[1001.0, 2000.0]));
    }

    #[test]
    fn plan_mismatch() {
        let b = blocks(4, 4, &[]);
        let plan = RectifyPlan::new(0.0, 0.0, 1.0, 4, 5).unwrap();
        assert!(matches!(report_features(&[], &b, &plan), Err(Error::Dimension(_))));
    }

    #[test]
    fn choropleth_colors() {
        let b = blocks(2, 3, &[(1, 0, 0), (2, 1, 0)]);
        let img = render_choropleth(&profile(&[Some(0.0), None]), &b).unwrap();
        assert_eq!(img.pixel(0, 0), &[165, 0, 38]);
        assert_eq!(img.pixel(1, 0), &[200, 200, 200]);
        assert_eq!(img.pixel(2, 0), &[255, 255, 255]);
        assert_eq!(ramp_color(1.0), [49, 54, 149]);
        assert_eq!(ramp_color(0.5), [255, 255, 191]);
    }
}
