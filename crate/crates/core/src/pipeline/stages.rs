use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{Run, Stage};
use crate::change::{
    block_change_profile, export_change_report, match_instances, render_choropleth, MatchConfig, ReferenceEpoch,
};
use crate::error::{Error, Result};
use crate::field::{warp_raster, DisplacementField, ValidityMask};
use crate::geojson::load_polygons;
use crate::instances::{aggregate_blocks, label_components, load_tile_dir, stitch_tiles, BlockMap, InstanceMap, TileGrid};
use crate::metrics::{chamfer_trimmed, mean_variation, ssim_with};
use crate::network::{street_network, write_network};
use crate::raster::{load_world_file, rectify_group_with, Raster, RectifyPlan};
use crate::synth::{build_triplets, derive_seed, Annotations};

use super::config::{EpochInput, SheetInput};

fn epoch_key(sheet: &SheetInput, e: &EpochInput) -> String {
    format!("{}_{}", sheet.id, e.year)
}

fn pair_key(sheet: &SheetInput, a: &EpochInput, b: &EpochInput) -> String {
    format!("{}_{}_{}", sheet.id, a.year, b.year)
}

fn plan_key(sheet: &SheetInput) -> String {
    format!("{}.plan.toml", sheet.id)
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

pub(super) fn rectify(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    for sheet in &cfg.sheets {
        let mut group = Vec::with_capacity(sheet.epochs.len());
        for e in &sheet.epochs {
            let raster = Raster::load_png(run.input(&e.raster)?)?;
            let gt = load_world_file(run.input(&e.world_file)?)?;
            group.push((raster, gt));
        }
        let (rectified, plan) = rectify_group_with(&group, cfg.resolution, cfg.resampling)?;
        for (e, r) in sheet.epochs.iter().zip(&rectified) {
            r.save_png(run.dir().join(format!("{}.png", epoch_key(sheet, e))))?;
        }
        plan.save(run.dir().join(plan_key(sheet)))?;
    }
    Ok(())
}

fn rectified(run: &mut Run<'_>, sheet: &SheetInput, e: &EpochInput) -> Result<Raster> {
    let p = run.upstream(Stage::Rectify, &format!("{}.png", epoch_key(sheet, e)))?;
    Raster::load_png(p)
}

fn plan(run: &mut Run<'_>, sheet: &SheetInput) -> Result<RectifyPlan> {
    let p = run.upstream(Stage::Rectify, &plan_key(sheet))?;
    RectifyPlan::load(p)
}

pub(super) fn synth(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    for (si, sheet) in cfg.sheets.iter().enumerate() {
        for (k, w) in sheet.epochs.windows(2).enumerate() {
            let i = rectified(run, sheet, &w[0])?;
            let j = rectified(run, sheet, &w[1])?;
            let ann = match &w[0].annotations {
                Some(p) => Annotations::from_polygons(load_polygons(run.input(p)?)?),
                None => Annotations::default(),
            };
            let seed = derive_seed(derive_seed(cfg.seed, si as u64), k as u64);
            let samples = build_triplets(&i, &j, &ann, &cfg.synth.triplet, seed, cfg.synth.count)?;
            let dir = run.dir().join(pair_key(sheet, &w[0], &w[1]));
            for (n, s) in samples.iter().enumerate() {
                s.write_dir(dir.join(format!("sample_{n:04}")))?;
            }
        }
    }
    Ok(())
}

fn load_field(run: &mut Run<'_>, e: &EpochInput, h: usize, w: usize) -> Result<Option<DisplacementField>> {
    let Some(p) = &e.field else {
        return Ok(None);
    };
    let (field, _) = DisplacementField::load(run.input(p)?)?;
    if (field.height(), field.width()) != (h, w) {
        return Err(Error::Dimension(format!(
            "field {} is {}x{} but the plane is {}x{}",
            p.display(),
            field.width(),
            field.height(),
            w,
            h
        )));
    }
    Ok(Some(field))
}

/// Centroids of 4-connected dark regions, optionally restricted to `valid`.
fn ink_centroids(r: &Raster, threshold: u8, valid: Option<&ValidityMask>) -> Vec<[f64; 2]> {
    let (w, h) = (r.width(), r.height());
    let mask: Vec<bool> = (0..w * h)
        .map(|k| {
            let (x, y) = (k % w, k / w);
            let p = r.pixel(x, y);
            let luma = if p.len() >= 3 {
                (299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32) / 1000
            } else {
                p[0] as u32
            };
            luma < threshold as u32 && valid.is_none_or(|v| v.get(x, y))
        })
        .collect();
    let (labels, n) = label_components(&mask, w, h);
    let mut acc = vec![(0.0, 0.0, 0usize); n];
    for (k, &l) in labels.iter().enumerate() {
        if l > 0 {
            let a = &mut acc[l as usize - 1];
            a.0 += (k % w) as f64;
            a.1 += (k / w) as f64;
            a.2 += 1;
        }
    }
    acc.into_iter().map(|(x, y, c)| [x / c as f64, y / c as f64]).collect()
}

#[derive(Serialize)]
struct SsimReport {
    before: f64,
    after: f64,
}

#[derive(Serialize)]
struct ChamferReport {
    mode: crate::metrics::ChamferMode,
    trim: Vec<f64>,
    before: Vec<f64>,
    after: Vec<f64>,
}

#[derive(Serialize)]
struct AlignReport {
    pair: String,
    valid_fraction: f64,
    mean_variation: f64,
    ssim: SsimReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    chamfer: Option<ChamferReport>,
}

pub(super) fn align_eval(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let mc = &cfg.metrics;
    for sheet in &cfg.sheets {
        for w in sheet.epochs.windows(2) {
            let key = pair_key(sheet, &w[0], &w[1]);
            let i = rectified(run, sheet, &w[0])?;
            let j = rectified(run, sheet, &w[1])?;
            let Some(field) = load_field(run, &w[0], i.height(), i.width())? else {
                run.warn(format!("{key}: no field; alignment not evaluated"));
                continue;
            };
            let (aligned, valid) = warp_raster(&j, &field);
            let s_i = ink_centroids(&i, mc.ink_threshold, None);
            let before = ink_centroids(&j, mc.ink_threshold, None);
            let after = ink_centroids(&aligned, mc.ink_threshold, Some(&valid));
            let chamfer = if s_i.is_empty() || before.is_empty() || after.is_empty() {
                run.warn(format!("{key}: no ink objects; Chamfer distance skipped"));
                None
            } else {
                let cd = |s: &[[f64; 2]]| -> Result<Vec<f64>> {
                    mc.trim_fractions.iter().map(|&t| chamfer_trimmed(&s_i, s, t, mc.chamfer_mode)).collect()
                };
                Some(ChamferReport {
                    mode: mc.chamfer_mode,
                    trim: mc.trim_fractions.clone(),
                    before: cd(&before)?,
                    after: cd(&after)?,
                })
            };
            let report = AlignReport {
                pair: format!("{}-{}", w[0].year, w[1].year),
                valid_fraction: valid.fraction(),
                mean_variation: mean_variation(&field)?,
                ssim: SsimReport {
                    before: ssim_with(&i, &j, &mc.ssim)?,
                    after: ssim_with(&i, &aligned, &mc.ssim)?,
                },
                chamfer,
            };
            let text = toml::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
            write(&run.dir().join(format!("{key}.toml")), &text)?;
        }
    }
    Ok(())
}

pub(super) fn stitch(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    for sheet in &cfg.sheets {
        let plan = plan(run, sheet)?;
        let grid = TileGrid::new(cfg.stitch.patch_size, cfg.stitch.step, plan.height, plan.width)?;
        for e in &sheet.epochs {
            let Some(tiles) = &e.tiles else {
                run.warn(format!("{}: no instance tiles", epoch_key(sheet, e)));
                continue;
            };
            let dir = run.input(tiles)?;
            let map = stitch_tiles(&load_tile_dir(dir, &grid)?, &grid)?;
            map.save(run.dir().join(format!("{}.imap", epoch_key(sheet, e))))?;
        }
    }
    Ok(())
}

fn stitched(run: &mut Run<'_>, sheet: &SheetInput, e: &EpochInput) -> Result<InstanceMap> {
    InstanceMap::load(run.upstream(Stage::Stitch, &format!("{}.imap", epoch_key(sheet, e)))?)
}

fn block_map(run: &mut Run<'_>, sheet: &SheetInput, e: &EpochInput, res: f64) -> Result<BlockMap> {
    BlockMap::load(run.upstream(Stage::Blocks, &format!("{}.blocks.imap", epoch_key(sheet, e)))?, res)
}

pub(super) fn blocks(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    for sheet in &cfg.sheets {
        let plan = plan(run, sheet)?;
        for e in sheet.epochs.iter().filter(|e| e.tiles.is_some()) {
            let map = stitched(run, sheet, e)?;
            let b = aggregate_blocks(&map, plan.resolution, cfg.blocks.area_threshold_m2, cfg.blocks.hole_threshold_px)?;
            b.save(run.dir().join(format!("{}.blocks.imap", epoch_key(sheet, e))))?;
        }
    }
    Ok(())
}

pub(super) fn change(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let cc = cfg.change;
    for sheet in &cfg.sheets {
        let plan = plan(run, sheet)?;
        for w in sheet.epochs.windows(2) {
            let key = pair_key(sheet, &w[0], &w[1]);
            if w[0].tiles.is_none() || w[1].tiles.is_none() {
                run.warn(format!("{key}: an epoch has no instances; change skipped"));
                continue;
            }
            let t1 = stitched(run, sheet, &w[0])?;
            let t2 = stitched(run, sheet, &w[1])?;
            let field = match load_field(run, &w[0], plan.height, plan.width)? {
                Some(f) => f,
                None => {
                    run.warn(format!("{key}: no field; epochs compared as already aligned"));
                    DisplacementField::zeros(plan.height, plan.width)
                }
            };
            let (ref_epoch, reference) = match cc.reference {
                ReferenceEpoch::T1 => (&w[0], &t1),
                ReferenceEpoch::T2 => (&w[1], &t2),
            };
            let blocks = block_map(run, sheet, ref_epoch, plan.resolution)?;
            let m = match_instances(
                &t1,
                &t2,
                &field,
                &MatchConfig {
                    resolution: plan.resolution,
                    min_area_m2: cc.min_area_m2,
                },
            )?;
            let pair = format!("{}-{}", w[0].year, w[1].year);
            let profile = block_change_profile(&m, &blocks, reference, cc.reference, &pair)?;
            let dir = run.dir().join(&key);
            export_change_report(std::slice::from_ref(&profile), &blocks, &plan, &dir)?;
            if cc.choropleth {
                render_choropleth(&profile, &blocks)?.save_png(dir.join("choropleth.png"))?;
            }
        }
    }
    Ok(())
}

pub(super) fn network(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    for sheet in &cfg.sheets {
        let plan = plan(run, sheet)?;
        for e in sheet.epochs.iter().filter(|e| e.tiles.is_some()) {
            let key = epoch_key(sheet, e);
            let b = block_map(run, sheet, e, plan.resolution)?;
            let net = street_network(&b, cfg.network.mode, cfg.network.percentile)?;
            for msg in &net.warnings {
                run.warn(format!("{key}: {msg}"));
            }
            write_network(
                run.dir().join(format!("{key}.geojson")),
                &net.graph,
                &net.centrality,
                &net.top,
                &plan,
            )?;
        }
    }
    Ok(())
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

pub(super) fn report(run: &mut Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let mut change = String::from("sheet,epoch_pair,blocks,scored_blocks,mean_block_iou\n");
    let mut net = String::from("sheet,year,nodes,edges,top_nodes\n");
    for sheet in &cfg.sheets {
        for w in sheet.epochs.windows(2) {
            if w[0].tiles.is_none() || w[1].tiles.is_none() {
                continue;
            }
            let p = run.upstream(Stage::Change, &format!("{}/change.csv", pair_key(sheet, &w[0], &w[1])))?;
            let text = read(&p)?;
            let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
            let scores: Vec<f64> = rows.iter().filter_map(|r| r.get(2).and_then(|v| v.parse().ok())).collect();
            let mean = if scores.is_empty() {
                String::new()
            } else {
                format!("{:.6}", scores.iter().sum::<f64>() / scores.len() as f64)
            };
            let _ = writeln!(
                change,
                "{},{}-{},{},{},{}",
                sheet.id,
                w[0].year,
                w[1].year,
                rows.len(),
                scores.len(),
                mean
            );
        }
        for e in sheet.epochs.iter().filter(|e| e.tiles.is_some()) {
            let p = run.upstream(Stage::Network, &format!("{}.geojson", epoch_key(sheet, e)))?;
            let doc: Value = serde_json::from_str(&read(&p)?).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            let feats = doc["features"].as_array().cloned().unwrap_or_default();
            let kind = |f: &Value, t: &str| f["geometry"]["type"] == t;
            let nodes = feats.iter().filter(|f| kind(f, "Point")).count();
            let edges = feats.iter().filter(|f| kind(f, "LineString")).count();
            let top = feats.iter().filter(|f| f["properties"]["top"] == true).count();
            let _ = writeln!(net, "{},{},{},{},{}", sheet.id, e.year, nodes, edges, top);
        }
    }
    write(&run.dir().join("change_summary.csv"), &change)?;
    write(&run.dir().join("network_summary.csv"), &net)
}
