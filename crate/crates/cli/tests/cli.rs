use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use efie_core::datagen::{read_dataset, MNIST_PATH_ENV};
use efie_core::em::{incident_field, PhysicsConstants, TransmitterConfig};
use efie_core::geometry::{
    load_mnist_idx, rasterize_extent, scene_from_mnist, DoiConfig, ImageRaster, Point, Scene, ShapePrimitive,
};

const LAMBDA: f64 = 0.125;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/mnist-sample-500-idx3-ubyte")
}

fn efie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efie")).args(args).env_remove(MNIST_PATH_ENV).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn generate_mnist(dir: &Path, count: usize, extra: &[&str]) -> Output {
    let (count, source) = (count.to_string(), fixture());
    let mut args = vec!["generate", "--recipe", "mnist", "--count", &count, "--seed", "5", "--chunk-records", "32"];
    args.extend(["--out", dir.to_str().unwrap(), "--mnist-path", source.to_str().unwrap()]);
    args.extend_from_slice(extra);
    efie(&args)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn generation_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&generate_mnist(&a, 40, &["--threads", "1"])), 0);
    assert_eq!(code(&generate_mnist(&b, 40, &["--threads", "3"])), 0);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn mnist_without_a_source_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = efie(&["generate", "--recipe", "mnist", "--count", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(MNIST_PATH_ENV));
}

#[test]
fn mnist_source_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_efie"))
        .args(["generate", "--recipe", "mnist", "--count", "3", "--out", dir.path().to_str().unwrap()])
        .env(MNIST_PATH_ENV, fixture())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_dataset(dir.path()).unwrap().len(), 3);
}

fn raw(path: &Path) -> ImageRaster<f64> {
    ImageRaster::from_raw_f64(&std::fs::read(path).unwrap()).unwrap()
}

/// Grid node `(row, col)` of a `res x res` render spanning `side`.
fn node(row: usize, col: usize, res: usize, side: f64) -> Point {
    let step = side / (res - 1) as f64;
    Point::new(-0.5 * side + col as f64 * step, 0.5 * side - row as f64 * step)
}

#[test]
fn empty_scene_renders_the_incident_field() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("empty");
    let out = efie(&["render-field", "--scene-spec", "empty", "--grid-res", "21", "--out", prefix.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("empty.pgm").exists());
    let grid = raw(&dir.path().join("empty.f64"));
    assert_eq!((grid.height, grid.width), (21, 21));
    let c = PhysicsConstants::new(LAMBDA);
    let tx = TransmitterConfig::standard(LAMBDA);
    for row in 0..21 {
        for col in 0..21 {
            let want = incident_field(node(row, col, 21, 10.0 * LAMBDA), &tx, &c).unwrap().norm();
            let got = grid.get(row, col);
            assert!((got - want).abs() <= 1e-12 * want, "({row}, {col}): {got} vs {want}");
        }
    }
}

#[test]
fn bad_grid_resolution_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("x");
    let out = efie(&["render-field", "--scene-spec", "empty", "--grid-res", "0", "--out", prefix.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fig2_is_dark_at_the_collocation_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("fig2");
    let out = efie(&["--json", "render-field", "--scene-spec", "fig2", "--out", prefix.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = raw(&dir.path().join("fig2.f64"));
    let res = grid.height;
    assert_eq!(res, 201);

    let l = LAMBDA;
    let shapes = vec![
        ShapePrimitive::Square { center: Point::new(-2.0 * l, 1.5 * l), width: 1.2 * l },
        ShapePrimitive::Disc { center: Point::new(1.5 * l, 2.0 * l), diameter: 1.2 * l },
        ShapePrimitive::Disc { center: Point::new(0.5 * l, -2.0 * l), diameter: 1.2 * l },
    ];
    let scene = Scene::from_shapes(DoiConfig::new(l), shapes).unwrap();
    let step = 10.0 * l / (res - 1) as f64;
    let mut checked = 0;
    let mut brightest = 0.0f64;
    for p in &scene.points {
        let col = ((p.x + 5.0 * l) / step).round() as usize;
        let row = ((5.0 * l - p.y) / step).round() as usize;
        if node(row, col, res, 10.0 * l).dist(*p) < 1e-9 * l {
            brightest = brightest.max(grid.get(row, col));
            checked += 1;
        }
    }
    assert_eq!(checked, scene.len());
    assert!(brightest <= 1e-6, "brightest collocation node {brightest:e}");
    let max = grid.values.iter().copied().fold(0.0, f64::max);
    assert!(max > 1e-3);
}

#[test]
fn inspect_reports_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&generate_mnist(&data, 100, &[])), 0);

    let out = efie(&["inspect", "--in", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().any(|l| l == "count=100"), "{}", stdout(&out));

    let out = efie(&["inspect", "--in", data.to_str().unwrap(), "--index", "100"]);
    assert_eq!(code(&out), 2);

    let prefix = dir.path().join("rec7");
    let out = efie(&["inspect", "--in", data.to_str().unwrap(), "--index", "7", "--dump", prefix.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dataset = read_dataset(&data).unwrap();
    let record = dataset.get(7).unwrap().unwrap();
    let cfg = &dataset.manifest().config;
    let digits = load_mnist_idx(fixture()).unwrap();
    let digit = &digits[record.source_index.unwrap() as usize];
    let scene = scene_from_mnist(digit, &cfg.doi, cfg.mnist_pixel_size, cfg.mnist_threshold).unwrap();
    let target = rasterize_extent(&scene, cfg.image_height, cfg.image_width, cfg.image_side).unwrap();
    assert_eq!(std::fs::read(dir.path().join("rec7-target.pgm")).unwrap(), target.to_pgm());
    assert!(dir.path().join("rec7-e.pgm").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&efie(&["generate", "--recipe", "shapes", "--bogus"])), 2);
}

#[test]
fn json_summary_is_one_line() {
    let out = efie(&["--json", "validate", "--suite", "noise"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(v["command"], "validate");
    assert_eq!(v["ok"], true);
}

#[test]
fn noise_suite_passes() {
    let out = efie(&["validate", "--suite", "noise"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("result=pass"));
}

#[test]
fn missing_container_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = efie(&["inspect", "--in", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}
