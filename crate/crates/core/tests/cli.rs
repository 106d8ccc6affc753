use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meshrf::commands::{CompareReport, CHECKPOINT_FILE, RUN_FILE};
use meshrf::metrics::MetricReport;
use meshrf::model::{read_checkpoint, BackendKind, GridSpec, MlpSpec, TrainableField};
use meshrf::render::read_image;

fn meshrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshrf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn render_writes_one_png_per_view() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["render", "--procedural", "icosphere", "--views", "4", "--size", "128", "--out", path(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut pngs: Vec<_> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    pngs.sort();
    assert_eq!(pngs, ["view_000.png", "view_001.png", "view_002.png", "view_003.png"]);
    let img = read_image(out.path().join("view_000.png")).unwrap();
    assert_eq!((img.width(), img.height()), (128, 128));
    assert!(out.path().join(RUN_FILE).exists());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);
}

#[test]
fn missing_mesh_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["render", "--mesh", "/nonexistent/mesh.obj", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh.obj"));
}

#[test]
fn bake_without_views_reports_no_cameras() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["bake", "--views", "0", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no cameras"));
}

#[test]
fn pixel_fit_without_images_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["fit", "--supervision", "pixel", "--iterations", "1", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--images"));
}

#[test]
fn unknown_override_key_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["bake", "--set", "scene.field.thickness=0.1", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(2));
}

fn bake_small(dir: &Path) {
    let o = meshrf(&[
        "bake", "--views", "2", "--size", "16", "--rays-per-view", "32", "--set", "scene.sampling.n_stratified=8",
        "--set", "scene.sampling.n_band=8", "--out", path(dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_iterations_store_the_initialization() {
    let data = tempfile::tempdir().unwrap();
    bake_small(data.path());
    let out = tempfile::tempdir().unwrap();
    let ds = data.path().join("dataset.m2nf");
    let o = meshrf(&[
        "fit", "--dataset", path(&ds), "--backend", "mlp", "--iterations", "0", "--train-seed", "5", "--out",
        path(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stored = read_checkpoint(out.path().join(CHECKPOINT_FILE)).unwrap();
    let fresh = TrainableField::new(BackendKind::Mlp, &MlpSpec::default(), &GridSpec::default(), 5).unwrap();
    assert_eq!(stored, fresh);
}

#[test]
fn eval_checks_the_backend_tag() {
    let data = tempfile::tempdir().unwrap();
    bake_small(data.path());
    let fit = tempfile::tempdir().unwrap();
    let ds = data.path().join("dataset.m2nf");
    let o = meshrf(&[
        "fit", "--dataset", path(&ds), "--backend", "mlp", "--iterations", "2", "--batch-rays", "4", "--out",
        path(fit.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = fit.path().join(CHECKPOINT_FILE);
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&["eval", "--checkpoint", path(&ckpt), "--backend", "grid", "--out", path(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
    let o = meshrf(&[
        "eval", "--checkpoint", path(&ckpt), "--backend", "mlp", "--size", "16", "--test-views", "2", "--samples",
        "32", "--out", path(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: MetricReport = serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.views.len(), 2);
    let mean = report.views.iter().map(|v| v.psnr).sum::<f64>() / 2.0;
    assert!((report.mean_psnr - mean).abs() < 1e-12);
}

#[test]
fn pixel_fit_reads_rendered_images() {
    let imgs = tempfile::tempdir().unwrap();
    let o = meshrf(&["render", "--views", "2", "--size", "16", "--samples", "64", "--out", path(imgs.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&[
        "fit", "--supervision", "pixel", "--images", path(imgs.path()), "--rays-per-view", "32", "--iterations", "3",
        "--batch-rays", "4", "--set", "train.pixel_samples=16", "--set", "train.grid.resolution=8", "--out",
        path(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn compare_reports_two_models_and_a_delta() {
    let out = tempfile::tempdir().unwrap();
    let o = meshrf(&[
        "compare", "--views", "2", "--size", "16", "--rays-per-view", "32", "--iterations", "3", "--batch-rays", "4",
        "--test-views", "2", "--samples", "32", "--set", "scene.sampling.n_stratified=8", "--set",
        "scene.sampling.n_band=8", "--set", "train.grid.resolution=8", "--out", path(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("compare.csv")).unwrap();
    let names: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(names, ["mesh2nerf", "pixel", "delta"]);
    let report: CompareReport = serde_json::from_str(&fs::read_to_string(out.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(report.rays, 64);
    assert_eq!(report.delta_psnr, report.mesh2nerf.mean_psnr - report.pixel.mean_psnr);
    for sub in ["mesh2nerf", "pixel"] {
        assert!(out.path().join(sub).join(CHECKPOINT_FILE).exists());
    }
}
