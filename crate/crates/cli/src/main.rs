use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use histmap::change::{
    block_change_profile, export_change_report, match_instances, render_choropleth, MatchConfig, ReferenceEpoch,
};
use histmap::field::{compose_masked, warp_field, warp_labels, warp_raster, DisplacementField, ValidityMask};
use histmap::geojson::load_polygons;
use histmap::instances::{aggregate_blocks, load_tile_dir, stitch_tiles, BlockMap, InstanceMap, TileGrid};
use histmap::metrics::{
    average_precision, chamfer_trimmed, mean_variation, ssim_with, triplet_consistency_l1, DetectionSet, SizeStratum,
};
use histmap::network::{street_network, write_network, DistanceMode};
use histmap::pipeline::{load_settings, run_pipeline, MetricSettings, PipelineConfig, Stage};
use histmap::raster::{load_world_file, rectify_group_with, Raster, RectifyPlan, Resampling};
use histmap::synth::{build_triplets, Annotations, TripletConfig};

#[derive(Parser)]
#[command(name = "histmap", version, about = "Align and compare historical map series")]
struct Cli {
    /// TOML configuration (pipeline config for `run`, stage settings elsewhere).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Resample georeferenced rasters onto their common plane.
    Rectify(RectifyArgs),
    /// Generate training triplets with exact ground-truth fields.
    Synth(SynthArgs),
    /// Pull an image, label map or field through a displacement field.
    Warp(WarpArgs),
    /// Compose two displacement fields.
    Compose(ComposeArgs),
    /// Alignment and extraction metrics.
    Metrics(MetricsArgs),
    /// Merge tiled instance predictions into one sheet.
    Stitch(StitchArgs),
    /// Aggregate building units into blocks.
    Blocks(BlocksArgs),
    /// Block-level change between two epochs.
    Change(ChangeArgs),
    /// Street network and betweenness centrality from a block map.
    Network(NetworkArgs),
    /// Run pipeline stages over a sheet inventory.
    Run(RunArgs),
    /// Write the two-epoch synthetic city fixture.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct RectifyArgs {
    /// PNG sheets; world files are found next to them (`.pgw`, `.wld`).
    #[arg(long = "raster", required = true)]
    rasters: Vec<PathBuf>,
    /// Target metres per pixel.
    #[arg(long)]
    resolution: f64,
    #[arg(long, value_enum, default_value = "bilinear")]
    resampling: ResamplingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResamplingArg {
    Bilinear,
    Nearest,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    i: PathBuf,
    #[arg(long)]
    j: PathBuf,
    /// Object and text polygons (pixel coordinates of I).
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WarpArgs {
    /// `.png`, `.imap` or `.dfld` to resample.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the validity mask as PNG.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    first: PathBuf,
    #[arg(long)]
    second: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Two images for SSIM.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    ssim: Option<Vec<PathBuf>>,
    /// Two GeoJSON polygon sets; objects are compared by vertex centroid.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    chamfer: Option<Vec<PathBuf>>,
    /// Field whose mean variation is reported.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Fields f12, f23, f13 for the triplet L1 error.
    #[arg(long, num_args = 3, value_names = ["F12", "F23", "F13"])]
    triplet: Option<Vec<PathBuf>>,
    /// Predicted and ground-truth instance maps for AP.
    #[arg(long, num_args = 2, value_names = ["PRED", "GT"])]
    ap: Option<Vec<PathBuf>>,
    /// `label,score` CSV for the predictions.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    #[arg(long, default_value_t = 0.4)]
    resolution: f64,
    /// Report path; `.csv` gives CSV, anything else TOML.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StitchArgs {
    #[arg(long)]
    tiles: PathBuf,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    patch: usize,
    #[arg(long, default_value_t = 256)]
    step: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BlocksArgs {
    #[arg(long)]
    instances: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    resolution: f64,
    #[arg(long, default_value_t = histmap::instances::DEFAULT_AREA_THRESHOLD_M2)]
    area_threshold: f64,
    #[arg(long, default_value_t = histmap::instances::DEFAULT_HOLE_THRESHOLD_PX)]
    hole_threshold: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChangeArgs {
    #[arg(long)]
    t1: PathBuf,
    #[arg(long)]
    t2: PathBuf,
    /// Field from t1's plane to t2's; identity when omitted.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Block map of the reference epoch.
    #[arg(long)]
    blocks: PathBuf,
    /// Rectification plan for world coordinates; pixel units when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = 0.4)]
    resolution: f64,
    #[arg(long, default_value_t = 500.0)]
    min_area: f64,
    #[arg(long, value_enum, default_value = "t1")]
    reference: EpochArg,
    #[arg(long, default_value = "t1-t2")]
    epoch_pair: String,
    /// Also render `choropleth.png`.
    #[arg(long)]
    choropleth: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpochArg {
    T1,
    T2,
}

#[derive(Args)]
struct NetworkArgs {
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    resolution: f64,
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
    #[arg(long, value_enum, default_value = "metric")]
    mode: ModeArg,
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Metric,
    Hops,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated stages; all when omitted.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
    /// Output root; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match histmap::par::with_jobs(jobs, || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<histmap::Error>().map(|e| e.exit_code()).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let (config, seed) = (cli.config.as_deref(), cli.seed);
    match cli.cmd {
        Cmd::Rectify(a) => rectify(a),
        Cmd::Synth(a) => synth(a, config, seed.unwrap_or(0)),
        Cmd::Warp(a) => warp(a),
        Cmd::Compose(a) => compose(a),
        Cmd::Metrics(a) => metrics(a, config),
        Cmd::Stitch(a) => stitch(a),
        Cmd::Blocks(a) => blocks(a),
        Cmd::Change(a) => change(a),
        Cmd::Network(a) => network(a),
        Cmd::Run(a) => run(a, config, seed),
        Cmd::Fixture(a) => {
            let f = histmap::fixture::write_fixture(&a.out, seed.unwrap_or(0))?;
            println!("{}", f.config.display());
            Ok(())
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn world_file_for(raster: &Path) -> Result<PathBuf> {
    for ext in ["pgw", "wld", "pngw"] {
        let p = raster.with_extension(ext);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(histmap::Error::Dependency {
        stage: "rectify".into(),
        path: raster.with_extension("pgw"),
    }
    .into())
}

fn rectify(a: RectifyArgs) -> Result<()> {
    let mut group = Vec::new();
    for r in &a.rasters {
        group.push((Raster::load_png(r)?, load_world_file(world_file_for(r)?)?));
    }
    let resampling = match a.resampling {
        ResamplingArg::Bilinear => Resampling::Bilinear,
        ResamplingArg::Nearest => Resampling::Nearest,
    };
    let (out, plan) = rectify_group_with(&group, a.resolution, resampling)?;
    mkdir(&a.out)?;
    for (src, r) in a.rasters.iter().zip(&out) {
        let stem = src.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        r.save_png(a.out.join(format!("{stem}.png")))?;
    }
    plan.save(a.out.join("plan.toml"))?;
    Ok(())
}

fn synth(a: SynthArgs, config: Option<&Path>, seed: u64) -> Result<()> {
    let cfg: TripletConfig = load_settings(config)?;
    let i = Raster::load_png(&a.i)?;
    let j = Raster::load_png(&a.j)?;
    let ann = match &a.annotations {
        Some(p) => Annotations::from_polygons(load_polygons(p)?),
        None => Annotations::default(),
    };
    let samples = build_triplets(&i, &j, &ann, &cfg, seed, a.count)?;
    for (n, s) in samples.iter().enumerate() {
        s.write_dir(a.out.join(format!("sample_{n:04}")))?;
    }
    Ok(())
}

fn save_mask(mask: &ValidityMask, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        mask.to_raster().save_png(p)?;
    }
    Ok(())
}

fn extension(p: &Path) -> String {
    p.extension().map(|e| e.to_string_lossy().to_lowercase()).unwrap_or_default()
}

fn warp(a: WarpArgs) -> Result<()> {
    let (field, _) = DisplacementField::load(&a.field)?;
    match extension(&a.input).as_str() {
        "png" => {
            let (out, mask) = warp_raster(&Raster::load_png(&a.input)?, &field);
            out.save_png(&a.out)?;
            save_mask(&mask, a.mask.as_deref())
        }
        "imap" => {
            let m = InstanceMap::load(&a.input)?;
            let labels = warp_labels(m.labels(), m.height(), m.width(), &field, 0u32);
            let present: std::collections::BTreeSet<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
            let classes = m.classes().iter().filter(|(l, _)| present.contains(l)).map(|(&l, &c)| (l, c)).collect();
            InstanceMap::new(field.height(), field.width(), labels, classes)?.save(&a.out)?;
            Ok(())
        }
        "dfld" => {
            let (inner, _) = DisplacementField::load(&a.input)?;
            let (out, mask) = warp_field(&inner, &field);
            out.save(&a.out, Some(&mask))?;
            save_mask(&mask, a.mask.as_deref())
        }
        other => Err(histmap::Error::Format(format!("cannot warp a `.{other}` file")).into()),
    }
}

fn compose(a: ComposeArgs) -> Result<()> {
    let load = |p: &Path| -> Result<(DisplacementField, ValidityMask)> {
        let (f, m) = DisplacementField::load(p)?;
        let m = m.unwrap_or_else(|| ValidityMask::filled(f.height(), f.width(), true));
        Ok((f, m))
    };
    let (f1, m1) = load(&a.first)?;
    let (f2, m2) = load(&a.second)?;
    let (out, mask) = compose_masked(&f1, &m1, &f2, &m2)?;
    out.save(&a.out, Some(&mask))?;
    Ok(())
}

fn centroids(p: &Path) -> Result<Vec<[f64; 2]>> {
    Ok(load_polygons(p)?
        .iter()
        .filter(|poly| !poly.exterior.is_empty())
        .map(|poly| {
            let n = poly.exterior.len() as f64;
            let (x, y) = poly.exterior.iter().fold((0.0, 0.0), |(x, y), q| (x + q[0], y + q[1]));
            [x / n, y / n]
        })
        .collect())
}

fn load_scores(p: &Path) -> Result<BTreeMap<u32, f64>> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with("label")) {
        let (l, s) = line
            .split_once(',')
            .ok_or_else(|| histmap::Error::Format(format!("bad score row `{line}`")))?;
        let l = l.trim().parse().map_err(|_| histmap::Error::Format(format!("bad label `{l}`")))?;
        let s = s.trim().parse().map_err(|_| histmap::Error::Format(format!("bad score `{s}`")))?;
        out.insert(l, s);
    }
    Ok(out)
}

fn metrics(a: MetricsArgs, config: Option<&Path>) -> Result<()> {
    let cfg: MetricSettings = load_settings(config)?;
    let mut report: Vec<(String, f64)> = Vec::new();
    if let Some(p) = &a.ssim {
        let (x, y) = (Raster::load_png(&p[0])?, Raster::load_png(&p[1])?);
        report.push(("ssim".into(), ssim_with(&x, &y, &cfg.ssim)?));
    }
    if let Some(p) = &a.chamfer {
        let (s1, s2) = (centroids(&p[0])?, centroids(&p[1])?);
        for &t in &cfg.trim_fractions {
            let v = chamfer_trimmed(&s1, &s2, t, cfg.chamfer_mode)?;
            report.push((format!("chamfer_{}", (t * 100.0).round() as u32), v));
        }
    }
    if let Some(p) = &a.field {
        report.push(("mean_variation".into(), mean_variation(&DisplacementField::load(p)?.0)?));
    }
    if let Some(p) = &a.triplet {
        let f: Vec<DisplacementField> = p
            .iter()
            .map(|q| DisplacementField::load(q).map(|x| x.0))
            .collect::<histmap::Result<_>>()?;
        let l1 = triplet_consistency_l1(&f[0], &f[1], &f[2])?;
        report.push(("triplet_l1".into(), l1.mean.unwrap_or(f64::NAN)));
        report.push(("triplet_valid_fraction".into(), l1.valid_fraction));
    }
    if let Some(p) = &a.ap {
        let (pred, gt) = (InstanceMap::load(&p[0])?, InstanceMap::load(&p[1])?);
        let scores = match &a.scores {
            Some(s) => load_scores(s)?,
            None => BTreeMap::new(),
        };
        let dets = DetectionSet::from_maps(&pred, &scores, &gt)?;
        for (name, st) in [
            ("ap", SizeStratum::All),
            ("ap_small", SizeStratum::Small),
            ("ap_medium", SizeStratum::Medium),
            ("ap_large", SizeStratum::Large),
        ] {
            report.push((name.into(), average_precision(&dets.restrict(st, a.resolution), a.iou_threshold)?));
        }
    }
    if report.is_empty() {
        bail!(histmap::Error::Config("no metric requested".into()));
    }
    let mut text = String::new();
    if extension(&a.out) == "csv" {
        text.push_str("metric,value\n");
        for (k, v) in &report {
            let _ = writeln!(text, "{k},{v}");
        }
    } else {
        for (k, v) in &report {
            let v = if v.is_nan() { "nan".to_string() } else { format!("{v:?}") };
            let _ = writeln!(text, "{k} = {v}");
        }
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))
}

fn stitch(a: StitchArgs) -> Result<()> {
    let grid = TileGrid::new(a.patch, a.step, a.height, a.width)?;
    let map = stitch_tiles(&load_tile_dir(&a.tiles, &grid)?, &grid)?;
    map.save(&a.out)?;
    Ok(())
}

fn blocks(a: BlocksArgs) -> Result<()> {
    let m = InstanceMap::load(&a.instances)?;
    aggregate_blocks(&m, a.resolution, a.area_threshold, a.hole_threshold)?.save(&a.out)?;
    Ok(())
}

fn plan_or_pixels(plan: Option<&Path>, resolution: f64, h: usize, w: usize) -> Result<RectifyPlan> {
    match plan {
        Some(p) => Ok(RectifyPlan::load(p)?),
        None => Ok(RectifyPlan::new(0.0, 0.0, resolution, h, w)?),
    }
}

fn change(a: ChangeArgs) -> Result<()> {
    let t1 = InstanceMap::load(&a.t1)?;
    let t2 = InstanceMap::load(&a.t2)?;
    let field = match &a.field {
        Some(p) => DisplacementField::load(p)?.0,
        None => DisplacementField::zeros(t1.height(), t1.width()),
    };
    let blocks = BlockMap::load(&a.blocks, a.resolution)?;
    let reference = match a.reference {
        EpochArg::T1 => ReferenceEpoch::T1,
        EpochArg::T2 => ReferenceEpoch::T2,
    };
    let cfg = MatchConfig {
        resolution: a.resolution,
        min_area_m2: a.min_area,
    };
    let m = match_instances(&t1, &t2, &field, &cfg)?;
    let ref_map = if reference == ReferenceEpoch::T1 { &t1 } else { &t2 };
    let profile = block_change_profile(&m, &blocks, ref_map, reference, &a.epoch_pair)?;
    let plan = plan_or_pixels(a.plan.as_deref(), a.resolution, blocks.height(), blocks.width())?;
    export_change_report(std::slice::from_ref(&profile), &blocks, &plan, &a.out)?;
    if a.choropleth {
        render_choropleth(&profile, &blocks)?.save_png(a.out.join("choropleth.png"))?;
    }
    Ok(())
}

fn network(a: NetworkArgs) -> Result<()> {
    let blocks = BlockMap::load(&a.blocks, a.resolution)?;
    let mode = match a.mode {
        ModeArg::Metric => DistanceMode::Metric,
        ModeArg::Hops => DistanceMode::Hops,
    };
    let net = street_network(&blocks, mode, a.percentile)?;
    for w in &net.warnings {
        log::warn!("{w}");
    }
    let plan = plan_or_pixels(a.plan.as_deref(), a.resolution, blocks.height(), blocks.width())?;
    mkdir(&a.out)?;
    write_network(a.out.join("network.geojson"), &net.graph, &net.centrality, &net.top, &plan)?;
    Ok(())
}

fn run(a: RunArgs, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let Some(path) = config else {
        bail!(histmap::Error::Config("`run` needs --config".into()));
    };
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = a.out {
        cfg.output = std::env::current_dir()?.join(o);
    }
    let stages: Vec<Stage> = if a.stages.is_empty() {
        Stage::ALL.to_vec()
    } else {
        a.stages.iter().map(|s| s.trim().parse()).collect::<histmap::Result<_>>()?
    };
    let m = run_pipeline(&cfg, &stages)?;
    for s in &m.stages {
        println!("{:<11} {:>4} outputs {:>7} ms", s.stage.name(), s.outputs.len(), s.millis);
    }
    Ok(())
}
