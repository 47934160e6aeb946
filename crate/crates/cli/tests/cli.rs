use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use histmap::field::DisplacementField;
use histmap::raster::Raster;

fn histmap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn fixture_run_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(histmap(&["fixture", "--out", "fx", "--seed", "4"], p));

    // change before its upstream stages exist
    let o = histmap(&["--config", "fx/config.toml", "run", "--stages", "change"], p);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("change"));

    let o = histmap(&["run"], p);
    assert_eq!(code(&o), 2);
    let o = histmap(&["--config", "fx/config.toml", "run", "--stages", "nonsense"], p);
    assert_eq!(code(&o), 2);

    ok(histmap(&["--config", "fx/config.toml", "--jobs", "1", "run"], p));
    ok(histmap(&["--config", "fx/config.toml", "--jobs", "2", "run", "--out", "again"], p));
    for f in [
        "change/city_1890_1910/change.csv",
        "change/city_1890_1910/change.geojson",
        "network/city_1910.geojson",
        "stitch/city_1910.imap",
        "synth/city_1890_1910/sample_0002/W.dfld",
    ] {
        let a = fs::read(p.join("fx/out").join(f)).unwrap();
        let b = fs::read(p.join("again").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between job counts");
    }
}

#[test]
fn stage_subcommands_on_fixture() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(histmap(&["fixture", "--out", "fx"], p));
    ok(histmap(
        &["rectify", "--raster", "fx/city_1890.png", "--raster", "fx/city_1910.png", "--resolution", "0.5", "--out", "rect"],
        p,
    ));
    assert!(p.join("rect/plan.toml").is_file());
    for y in ["1890", "1910"] {
        ok(histmap(
            &["stitch", "--tiles", &format!("fx/tiles_{y}"), "--height", "512", "--width", "512", "--patch", "256", "--step", "128", "--out", &format!("{y}.imap")],
            p,
        ));
    }
    ok(histmap(&["blocks", "--instances", "1890.imap", "--resolution", "0.5", "--out", "1890.blocks.imap"], p));
    ok(histmap(
        &[
            "change", "--t1", "1890.imap", "--t2", "1910.imap", "--field", "fx/city_1890_1910.dfld", "--blocks",
            "1890.blocks.imap", "--resolution", "0.5", "--plan", "rect/plan.toml", "--choropleth", "--out", "report",
        ],
        p,
    ));
    let csv = fs::read_to_string(p.join("report/change.csv")).unwrap();
    let expected = fs::read_to_string(p.join("fx/expected.csv")).unwrap();
    assert_eq!(csv.lines().count(), expected.lines().count());
    assert!(csv.contains("\n6,t1-t2,0.75,3,1\n"), "{csv}");
    assert!(p.join("report/choropleth.png").is_file());

    ok(histmap(&["network", "--blocks", "1890.blocks.imap", "--resolution", "0.5", "--percentile", "90", "--out", "net"], p));
    let net = fs::read_to_string(p.join("net/network.geojson")).unwrap();
    assert!(net.contains("betweenness"));

    ok(histmap(&["--seed", "3", "synth", "--i", "rect/city_1890.png", "--j", "rect/city_1910.png", "--count", "2", "--out", "tri"], p));
    assert!(p.join("tri/sample_0001/meta.toml").is_file());
}

#[test]
fn field_commands_and_metrics() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    DisplacementField::constant(20, 30, 1.0, 0.0).save(p.join("a.dfld"), None).unwrap();
    DisplacementField::constant(20, 30, 0.0, 2.0).save(p.join("b.dfld"), None).unwrap();
    DisplacementField::constant(20, 30, 1.0, 2.0).save(p.join("ab.dfld"), None).unwrap();
    let img = Raster::from_fn(20, 30, 1, |x, y, _| (x * 7 + y * 3) as u8).unwrap();
    img.save_png(p.join("img.png")).unwrap();

    ok(histmap(&["compose", "--first", "a.dfld", "--second", "b.dfld", "--out", "c.dfld"], p));
    let (c, mask) = DisplacementField::load(p.join("c.dfld")).unwrap();
    assert_eq!(c.get(0, 0), [1.0, 2.0]);
    let mask = mask.unwrap();
    // only the second field's sampling position has to be on the plane
    assert!(!mask.get(29, 0) && mask.get(0, 19) && mask.get(0, 0));

    ok(histmap(&["warp", "--input", "img.png", "--field", "a.dfld", "--out", "w.png", "--mask", "m.png"], p));
    let w = Raster::load_png(p.join("w.png")).unwrap();
    assert_eq!(w.get(3, 4, 0), img.get(4, 4, 0));
    assert_eq!(w.get(29, 4, 0), 0);

    ok(histmap(&["metrics", "--ssim", "img.png", "img.png", "--field", "a.dfld", "--triplet", "a.dfld", "b.dfld", "ab.dfld", "--out", "r.toml"], p));
    let r = fs::read_to_string(p.join("r.toml")).unwrap();
    assert!(r.contains("ssim = 1.0\n"), "{r}");
    assert!(r.contains("mean_variation = 0.0\n"));
    assert!(r.contains("triplet_l1 = 0.0\n"));
    ok(histmap(&["metrics", "--field", "a.dfld", "--out", "r.csv"], p));
    assert_eq!(fs::read_to_string(p.join("r.csv")).unwrap(), "metric,value\nmean_variation,0\n");

    // format and precondition failures
    fs::write(p.join("bad.dfld"), b"not a field").unwrap();
    assert_eq!(code(&histmap(&["warp", "--input", "img.png", "--field", "bad.dfld", "--out", "x.png"], p)), 4);
    assert_eq!(code(&histmap(&["metrics", "--out", "r.toml"], p)), 2);
    assert_eq!(code(&histmap(&["warp", "--input", "img.tif", "--field", "a.dfld", "--out", "x.png"], p)), 4);
}
