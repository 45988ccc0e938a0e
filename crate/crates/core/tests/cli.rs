use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spd_forge::spectral::SpectralGrid;
use spd_forge::{RgbImage, SceneConfig, Spd};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spd-forge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_scene(dir: &Path) -> PathBuf {
    let path = dir.join("scene.json");
    SceneConfig { image_size: 48, n_radial_bins: 16, ..SceneConfig::default() }.write(&path).unwrap();
    path
}

fn flat_spd(dir: &Path) -> PathBuf {
    let path = dir.join("flat.csv");
    Spd::flat(SpectralGrid::default()).write_csv(&path).unwrap();
    path
}

#[test]
fn gen_rejects_zero_count() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["gen", "--count", "0", "--out", s(&tmp.path().join("ds"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["gen", "--count", "12", "--seed", "42", "--out", s(&a)]);
    ok(&["gen", "--count", "12", "--seed", "42", "--out", s(&b)]);
    let names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 13);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 42);
    assert_eq!(manifest["count"], 12);
}

#[test]
fn gen_with_config_and_custom_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(&cfg, r#"{"n_spikes": [0, 0]}"#).unwrap();
    let ds = tmp.path().join("ds");
    ok(&["gen", "--count", "3", "--config", s(&cfg), "--grid", "380,780,81", "--out", s(&ds)]);
    let spd = Spd::read_csv(&ds.join("spd_00002.csv")).unwrap();
    assert_eq!(*spd.grid(), SpectralGrid::new(380.0, 780.0, 81).unwrap());

    fs::write(&cfg, r#"{"mix_weights": {"smooth": 0, "noisy": 0, "spiky": 0, "combined": 0}}"#).unwrap();
    let out = run(&["gen", "--count", "3", "--config", s(&cfg), "--out", s(&ds)]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn render_masks_outside_annulus_and_writes_png() {
    let tmp = TempDir::new().unwrap();
    let scene_path = small_scene(tmp.path());
    let pfm = tmp.path().join("img.pfm");
    let png = tmp.path().join("img.png");
    ok(&["render", "--spd", s(&flat_spd(tmp.path())), "--scene", s(&scene_path), "--out", s(&pfm), "--png", s(&png)]);

    let scene = SceneConfig::read(&scene_path).unwrap();
    let img = RgbImage::read_pfm(&pfm).unwrap();
    let mut lit = 0;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let r = scene.pixel_radius(x, y, img.width(), img.height());
            let px = img.get(x, y);
            if !(scene.r_inner..=scene.r_outer).contains(&r) {
                assert_eq!(px, [0.0; 3], "pixel ({x}, {y}) at r={r}");
            } else if px.iter().any(|c| *c > 0.0) {
                lit += 1;
            }
        }
    }
    assert!(lit > 0);
    assert_eq!(&fs::read(&png).unwrap()[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn render_missing_scene_names_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("no-such-scene.json");
    let out = run(&["render", "--spd", s(&flat_spd(tmp.path())), "--scene", s(&missing), "--out", "x.pfm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn train_predict_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let scene = small_scene(dir);
    let ds = dir.join("ds");
    ok(&["gen", "--count", "40", "--seed", "5", "--out", s(&ds)]);
    let tc = dir.join("tc.json");
    fs::write(&tc, r#"{"max_epochs": 15, "hidden_dims": [24], "batch_size": 8}"#).unwrap();

    let model = dir.join("run/model.json");
    ok(&["train", "--dataset", s(&ds), "--scene", s(&scene), "--train-config", s(&tc), "--seed", "9", "--out", s(&model)]);
    let history = fs::read_to_string(dir.join("run/model.history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), 16);
    assert!(lines[1].starts_with("1,"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("run/model.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dataset_seed"], 5);
    assert_eq!(manifest["train_seed"], 9);
    assert_eq!(manifest["tool_version"], spd_forge::VERSION);
    let cache = PathBuf::from(manifest["feature_cache_dir"].as_str().unwrap());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 40);

    let checkpoint: serde_json::Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    assert_eq!(checkpoint["layer_dims"], serde_json::json!([48, 24, 61]));
    assert_eq!(checkpoint["train_config"]["seed"], 9);
    assert!(checkpoint["val_metrics"]["mae"].is_number());

    // Second run reads the feature cache and must reproduce the checkpoint.
    let again = dir.join("run2/model.json");
    ok(&["train", "--dataset", s(&ds), "--scene", s(&scene), "--train-config", s(&tc), "--seed", "9", "--out", s(&again)]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let img = dir.join("img.pfm");
    ok(&["render", "--spd", s(&ds.join("spd_00000.csv")), "--scene", s(&scene), "--out", s(&img)]);
    let pred = dir.join("pred.csv");
    ok(&["predict", "--model", s(&model), "--image", s(&img), "--scene", s(&scene), "--out", s(&pred)]);
    let spd = Spd::read_csv(&pred).unwrap();
    assert_eq!(spd.power().len(), 61);
    assert!((spd.peak() - 1.0).abs() < 1e-12);
    assert!(spd.power().iter().all(|v| *v >= 0.0));

    // A different resolution still yields features of the right length.
    let big_scene = dir.join("big.json");
    SceneConfig { image_size: 80, n_radial_bins: 16, ..SceneConfig::default() }.write(&big_scene).unwrap();
    let big = dir.join("big.pfm");
    ok(&["render", "--spd", s(&ds.join("spd_00000.csv")), "--scene", s(&big_scene), "--out", s(&big)]);
    ok(&["predict", "--model", s(&model), "--image", s(&big), "--scene", s(&scene), "--out", s(&pred)]);

    let other_scene = dir.join("other.json");
    SceneConfig { image_size: 48, n_radial_bins: 20, ..SceneConfig::default() }.write(&other_scene).unwrap();
    let out = run(&["predict", "--model", s(&model), "--image", s(&img), "--scene", s(&other_scene), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));

    let corrupt = dir.join("corrupt.pfm");
    fs::write(&corrupt, b"P6\n4 4\n255\n").unwrap();
    let out = run(&["predict", "--model", s(&model), "--image", s(&corrupt), "--scene", s(&scene), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed PFM"));
}

#[test]
fn eval_identical_and_misaligned() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["gen", "--count", "6", "--seed", "1", "--out", s(&ds)]);
    let report = tmp.path().join("report.json");
    ok(&["eval", "--pred", s(&ds), "--truth", s(&ds), "--out", s(&report)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["mae"], 0.0);
    assert_eq!(v["rmse"], 0.0);
    assert!((v["pearson"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["n_samples"], 6);

    let other = tmp.path().join("other");
    ok(&["gen", "--count", "5", "--seed", "1", "--out", s(&other)]);
    let out = run(&["eval", "--pred", s(&other), "--truth", s(&ds), "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("misaligned"));
}

#[test]
fn render_compare_identical_is_infinite() {
    let tmp = TempDir::new().unwrap();
    let scene = small_scene(tmp.path());
    let ds = tmp.path().join("ds");
    ok(&["gen", "--count", "1", "--seed", "3", "--out", s(&ds)]);
    let spd = ds.join("spd_00000.csv");
    let report = tmp.path().join("cmp.json");
    ok(&["render-compare", "--pred", s(&spd), "--truth", s(&spd), "--scene", s(&scene), "--out", s(&report)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["psnr_db"], "inf");
    assert_eq!(v["mae"], 0.0);
    assert!(tmp.path().join("cmp.pred.pfm").is_file());
    assert!(tmp.path().join("cmp.truth.pfm").is_file());

    let flat = flat_spd(tmp.path());
    ok(&["render-compare", "--pred", s(&flat), "--truth", s(&spd), "--scene", s(&scene), "--out", s(&report)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!(v["psnr_db"].as_f64().unwrap().is_finite());
    assert!(v["pearson"].is_null());
}

#[test]
fn plot_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["gen", "--count", "2", "--seed", "8", "--out", s(&ds)]);
    let a = tmp.path().join("a.svg");
    let b = tmp.path().join("b.svg");
    let spds = [s(&ds.join("spd_00000.csv")).to_owned(), s(&ds.join("spd_00001.csv")).to_owned()];
    for out in [&a, &b] {
        ok(&["plot", "--spd", &spds[0], "--spd", &spds[1], "--out", s(out)]);
    }
    let svg = fs::read_to_string(&a).unwrap();
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">spd_00000</text>") && svg.contains(">spd_00001</text>"));

    let out = run(&["plot", "--out", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scene_presets_and_coverage() {
    let tmp = TempDir::new().unwrap();
    let cov = tmp.path().join("cov.json");
    let fine = tmp.path().join("fine.json");
    ok(&["scene", "--out", s(&cov)]);
    ok(&["scene", "--preset", "fine-pitch", "--out", s(&fine)]);
    let full: serde_json::Value = serde_json::from_slice(&ok(&["coverage", "--scene", s(&cov)]).stdout).unwrap();
    let partial: serde_json::Value = serde_json::from_slice(&ok(&["coverage", "--scene", s(&fine)]).stdout).unwrap();
    assert_eq!(full["fraction"], 1.0);
    assert!(partial["fraction"].as_f64().unwrap() < 1.0);
}
