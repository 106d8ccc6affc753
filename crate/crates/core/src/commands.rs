//! End-to-end runs behind the `meshrf` binary: render, bake, fit, eval and
//! compare. Each command takes one resolved config, writes its artifacts
//! under an output directory together with that config as `run.json`, and
//! returns a summary for the caller to print.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::field::FieldConfig;
use crate::geometry::{load_mesh, make_test_mesh, normalize_mesh, Scene, TestMeshKind, TestTexture};
use crate::metrics::MetricReport;
use crate::model::{
    read_checkpoint, train, write_checkpoint, BackendKind, MetricsRow, PixelRays, Supervision, TrainConfig,
    TrainableField, TrainingData,
};
use crate::render::{read_image, render_analytic, render_field, write_image, Camera, ImageBuffer};
use crate::sampling::{cameras_on_sphere, SamplingConfig};
use crate::shading::LightConfig;
use crate::supervision::{bake_dataset, read_dataset, write_dataset, BakeStats, Dataset};
use crate::{Error, Result, Vec3};

/// Lattice seed of the held-out cameras; training cameras use the unrotated lattice.
pub const TEST_LATTICE_SEED: u64 = 1;

pub const RUN_FILE: &str = "run.json";
pub const DATASET_FILE: &str = "dataset.m2nf";
pub const DATASET_SIDECAR: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "model.m2nc";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CAMERAS_FILE: &str = "cameras.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedural {
    Cube,
    Icosphere,
    TwoPlanes,
}

impl std::str::FromStr for Procedural {
    type Err = Error;

    fn from_str(s: &str) -> Result<Procedural> {
        match s {
            "cube" => Ok(Procedural::Cube),
            "icosphere" => Ok(Procedural::Icosphere),
            "two_planes" | "two-planes" => Ok(Procedural::TwoPlanes),
            _ => Err(Error::Config(format!("unknown procedural scene {s:?}"))),
        }
    }
}

/// Fibonacci camera sphere around the origin, looking inward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSphere {
    pub count: usize,
    pub radius: f64,
    pub fov_deg: f64,
    /// Square image side in pixels.
    pub resolution: usize,
}

impl Default for CameraSphere {
    fn default() -> Self {
        CameraSphere {
            count: 30,
            radius: 3.0,
            fov_deg: 50.0,
            resolution: 128,
        }
    }
}

impl CameraSphere {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 3f64.sqrt() && self.radius.is_finite()) {
            return Err(Error::Config(format!("camera radius {} must put cameras outside the scene", self.radius)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config(format!("fov {} must be in (0, 180)", self.fov_deg)));
        }
        if self.resolution == 0 {
            return Err(Error::Config("resolution must be >= 1".into()));
        }
        Ok(())
    }

    pub fn train_cameras(&self) -> Vec<Camera> {
        self.lattice(self.count, 0)
    }

    /// `n` cameras on a rotated lattice, disjoint from the training views.
    pub fn test_cameras(&self, n: usize) -> Vec<Camera> {
        self.lattice(n, TEST_LATTICE_SEED)
    }

    fn lattice(&self, n: usize, seed: u64) -> Vec<Camera> {
        let r = self.resolution;
        cameras_on_sphere(n, self.radius, Vec3::ZERO, self.fov_deg, (r, r), seed)
    }
}

/// Where the mesh comes from plus everything that defines its radiance field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// OBJ file, normalized into [-1, 1]³ on load.
    pub mesh: Option<PathBuf>,
    pub procedural: Option<Procedural>,
    /// Icosphere subdivision level.
    pub subdivisions: u32,
    /// Texture of procedural meshes.
    pub texture: TestTexture,
    pub light: LightConfig,
    pub field: FieldConfig,
    pub sampling: SamplingConfig,
    pub cameras: CameraSphere,
    /// Seeds pixel selection and sample placement; replaces `sampling.seed`.
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            mesh: None,
            procedural: None,
            subdivisions: 3,
            texture: TestTexture::Checker(8),
            light: LightConfig::default(),
            field: FieldConfig::default(),
            sampling: SamplingConfig::default(),
            cameras: CameraSphere::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn procedural(kind: Procedural) -> SceneConfig {
        SceneConfig {
            procedural: Some(kind),
            ..SceneConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.is_some() == self.procedural.is_some() {
            return Err(Error::Config("scene needs exactly one of a mesh path or a procedural kind".into()));
        }
        self.light.validate()?;
        self.field.validate()?;
        self.sampling.validate()?;
        self.cameras.validate()
    }

    pub fn build(&self) -> Result<Scene> {
        self.validate()?;
        let mesh = match (&self.mesh, self.procedural) {
            (Some(path), _) => normalize_mesh(load_mesh(path)?)?,
            (None, Some(kind)) => {
                let kind = match kind {
                    Procedural::Cube => TestMeshKind::Cube,
                    Procedural::Icosphere => TestMeshKind::Icosphere(self.subdivisions),
                    Procedural::TwoPlanes => TestMeshKind::TwoPlanes,
                };
                make_test_mesh(kind, self.texture)
            }
            (None, None) => unreachable!("validated above"),
        };
        Scene::new(mesh)
    }

    /// Sampling with the scene seed applied.
    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            seed: self.seed,
            ..self.sampling
        }
    }

    pub fn background(&self) -> Vec3 {
        self.field.background
    }
}

/// Applies `key.path=value` overrides to the JSON form of `config`. Values
/// parse as JSON and fall back to plain strings; unknown keys are errors.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(config: &T, sets: &[String]) -> Result<T> {
    let mut root = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {set:?} is not key=value")))?;
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *slot = value;
    }
    serde_json::from_value(root).map_err(|e| Error::Config(format!("invalid override: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_out<T: Serialize>(out: &Path, config: &T) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(config, out.join(RUN_FILE))
}

/// Images plus the cameras and background they were rendered with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    pub background: Vec3,
    /// Seed of the scene the images came from; pixel training selects rays with it.
    pub seed: u64,
    pub cameras: Vec<Camera>,
    pub files: Vec<String>,
}

impl ImageSet {
    pub fn load(dir: impl AsRef<Path>) -> Result<(ImageSet, Vec<ImageBuffer>)> {
        let dir = dir.as_ref();
        let set: ImageSet = read_json(dir.join(CAMERAS_FILE))?;
        if set.files.len() != set.cameras.len() {
            return Err(Error::Config(format!(
                "{}: {} files for {} cameras",
                dir.display(),
                set.files.len(),
                set.cameras.len()
            )));
        }
        let images = set.files.iter().map(|f| read_image(dir.join(f))).collect::<Result<Vec<_>>>()?;
        Ok((set, images))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub scene: SceneConfig,
    pub n_samples: usize,
    /// Render only this sphere camera.
    pub index: Option<usize>,
    /// Render this camera instead of the sphere.
    pub camera: Option<Camera>,
    /// Use the held-out lattice instead of the training one.
    pub test_split: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            scene: SceneConfig::default(),
            n_samples: 800,
            index: None,
            camera: None,
            test_split: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderSummary {
    pub files: Vec<PathBuf>,
    pub times: Vec<Duration>,
}

/// Analytic volume renders of the scene, one PNG per camera, plus `cameras.json`.
pub fn cmd_render(cfg: &RenderConfig, out: &Path) -> Result<RenderSummary> {
    let scene = cfg.scene.build()?;
    if cfg.n_samples < 2 {
        return Err(Error::Config("n_samples must be >= 2".into()));
    }
    let sphere = &cfg.scene.cameras;
    let mut cameras = match &cfg.camera {
        Some(c) => vec![c.clone()],
        None if cfg.test_split => sphere.test_cameras(sphere.count),
        None => sphere.train_cameras(),
    };
    if let Some(i) = cfg.index {
        if i >= cameras.len() {
            return Err(Error::Config(format!("camera index {i} out of range for {} views", cameras.len())));
        }
        cameras = vec![cameras.swap_remove(i)];
    }
    if cameras.is_empty() {
        return Err(Error::NoCameras);
    }
    prepare_out(out, cfg)?;
    let mut summary = RenderSummary {
        files: Vec::new(),
        times: Vec::new(),
    };
    let mut names = Vec::new();
    for (i, cam) in cameras.iter().enumerate() {
        let start = Instant::now();
        let img = render_analytic(&scene, &cfg.scene.light, &cfg.scene.field, cam, cfg.n_samples);
        let name = format!("view_{i:03}.png");
        let path = out.join(&name);
        write_image(&img, &path)?;
        summary.times.push(start.elapsed());
        summary.files.push(path);
        names.push(name);
    }
    let set = ImageSet {
        background: cfg.scene.background(),
        seed: cfg.scene.seed,
        cameras,
        files: names,
    };
    write_json(&set, out.join(CAMERAS_FILE))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BakeConfig {
    pub scene: SceneConfig,
    pub rays_per_view: usize,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig {
            scene: SceneConfig::default(),
            rays_per_view: 1024,
        }
    }
}

/// What the dataset sidecar records next to the binary file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub scene: SceneConfig,
    pub rays_per_view: usize,
    pub stats: BakeStats,
}

/// Bakes the supervision dataset of `cfg.scene` without writing anything.
pub fn bake(cfg: &BakeConfig) -> Result<(Dataset, BakeStats)> {
    let scene = cfg.scene.build()?;
    let s = &cfg.scene;
    bake_dataset(
        &scene,
        &s.light,
        &s.cameras.train_cameras(),
        cfg.rays_per_view,
        &s.sampling(),
        &s.field,
    )
}

/// Writes `dataset.m2nf` and its JSON sidecar.
pub fn cmd_bake(cfg: &BakeConfig, out: &Path) -> Result<BakeStats> {
    let (ds, stats) = bake(cfg)?;
    prepare_out(out, cfg)?;
    write_dataset(&ds, out.join(DATASET_FILE))?;
    let sidecar = DatasetSidecar {
        scene: cfg.scene.clone(),
        rays_per_view: cfg.rays_per_view,
        stats: stats.clone(),
    };
    write_json(&sidecar, out.join(DATASET_SIDECAR))?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub train: TrainConfig,
    /// Baked dataset for direct supervision.
    pub dataset: Option<PathBuf>,
    /// Scene to bake on the fly when no dataset is given.
    pub scene: Option<BakeConfig>,
    /// Directory written by `cmd_render`, for pixel supervision.
    pub images: Option<PathBuf>,
    pub rays_per_view: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            train: TrainConfig::default(),
            dataset: None,
            scene: None,
            images: None,
            rays_per_view: 1024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: TrainableField,
    pub rows: Vec<MetricsRow>,
    pub rays: usize,
}

/// Training rays for the configured supervision mode.
pub enum FitData {
    Rays(Dataset),
    Pixels(PixelRays),
}

impl FitData {
    pub fn as_training(&self) -> TrainingData<'_> {
        match self {
            FitData::Rays(d) => TrainingData::Rays(d),
            FitData::Pixels(p) => TrainingData::Pixels(p),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FitData::Rays(d) => d.rays.len(),
            FitData::Pixels(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_fit_data(cfg: &FitConfig) -> Result<FitData> {
    match cfg.train.supervision {
        Supervision::Mesh2nerf => match (&cfg.dataset, &cfg.scene) {
            (Some(path), _) => Ok(FitData::Rays(read_dataset(path)?)),
            (None, Some(bake_cfg)) => Ok(FitData::Rays(bake(bake_cfg)?.0)),
            (None, None) => Err(Error::Config("mesh2nerf supervision needs a dataset or a scene".into())),
        },
        Supervision::Pixel => {
            let dir = cfg
                .images
                .as_ref()
                .ok_or_else(|| Error::Config("pixel supervision needs --images".into()))?;
            let (set, images) = ImageSet::load(dir)?;
            let px = PixelRays::from_images(&set.cameras, &images, cfg.rays_per_view, set.seed, set.background)?;
            Ok(FitData::Pixels(px))
        }
    }
}

/// Fits a field and writes `model.m2nc` and `metrics.csv`.
pub fn cmd_fit(cfg: &FitConfig, out: &Path) -> Result<FitSummary> {
    cfg.train.validate()?;
    let data = load_fit_data(cfg)?;
    prepare_out(out, cfg)?;
    fit_into(&data, &cfg.train, out)
}

fn fit_into(data: &FitData, train_cfg: &TrainConfig, out: &Path) -> Result<FitSummary> {
    let (model, rows) = train(data.as_training(), train_cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_checkpoint(&model, out.join(CHECKPOINT_FILE))?;
    crate::model::train::write_metrics_csv(&rows, out.join(METRICS_FILE))?;
    Ok(FitSummary {
        model,
        rows,
        rays: data.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub scene: SceneConfig,
    /// Backend the checkpoint must have.
    pub backend: Option<BackendKind>,
    pub test_views: usize,
    pub n_samples: usize,
    /// Also write the predicted and reference renders.
    pub write_images: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: PathBuf::from(CHECKPOINT_FILE),
            scene: SceneConfig::default(),
            backend: None,
            test_views: 20,
            n_samples: 800,
            write_images: false,
        }
    }
}

/// Renders `model` and the analytic field on the held-out cameras and
/// compares them. Returns the report and both image sets.
pub fn evaluate(
    model: &TrainableField,
    scene_cfg: &SceneConfig,
    test_views: usize,
    n_samples: usize,
) -> Result<(MetricReport, Vec<ImageBuffer>, Vec<ImageBuffer>)> {
    let scene = scene_cfg.build()?;
    let cameras = scene_cfg.cameras.test_cameras(test_views);
    if cameras.is_empty() {
        return Err(Error::NoCameras);
    }
    let bg = scene_cfg.background();
    let mut predicted = Vec::with_capacity(cameras.len());
    let mut reference = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        predicted.push(render_field(model, cam, n_samples, bg));
        reference.push(render_analytic(&scene, &scene_cfg.light, &scene_cfg.field, cam, n_samples));
    }
    let report = MetricReport::compare(&predicted, &reference)?;
    Ok((report, predicted, reference))
}

/// Writes `report.csv` and `report.json`.
pub fn cmd_eval(cfg: &EvalConfig, out: &Path) -> Result<MetricReport> {
    let model = read_checkpoint(&cfg.checkpoint)?;
    if let Some(want) = cfg.backend {
        if model.kind() != want {
            return Err(Error::Config(format!(
                "checkpoint holds a {} field, expected {}",
                model.kind().name(),
                want.name()
            )));
        }
    }
    if cfg.n_samples < 2 {
        return Err(Error::Config("n_samples must be >= 2".into()));
    }
    let (report, predicted, reference) = evaluate(&model, &cfg.scene, cfg.test_views, cfg.n_samples)?;
    prepare_out(out, cfg)?;
    report.write(out.join("report"))?;
    if cfg.write_images {
        for (i, (p, r)) in predicted.iter().zip(&reference).enumerate() {
            write_image(p, out.join(format!("pred_{i:03}.png")))?;
            write_image(r, out.join(format!("ref_{i:03}.png")))?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub scene: SceneConfig,
    /// Shared by both runs; its supervision field is ignored.
    pub train: TrainConfig,
    pub rays_per_view: usize,
    pub test_views: usize,
    pub n_samples: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            scene: SceneConfig::default(),
            train: TrainConfig::default(),
            rays_per_view: 1024,
            test_views: 20,
            n_samples: 800,
        }
    }
}

impl CompareConfig {
    /// Desk-scale benchmark: checkered icosphere, 30 views at 128², 1024 rays
    /// per view, grid backend, 5000 steps, 20 held-out views. Sampling and
    /// batch are shrunk from the defaults to fit a CPU budget.
    pub fn desk_benchmark() -> CompareConfig {
        let mut scene = SceneConfig::procedural(Procedural::Icosphere);
        scene.sampling.n_stratified = 64;
        scene.sampling.n_band = 64;
        let mut train = TrainConfig {
            backend: BackendKind::Grid,
            iterations: 5000,
            batch_rays: 64,
            max_lr: 1e-2,
            ..TrainConfig::default()
        };
        train.grid.resolution = 32;
        CompareConfig {
            scene,
            train,
            rays_per_view: 1024,
            test_views: 20,
            n_samples: 800,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub mesh2nerf: MetricReport,
    pub pixel: MetricReport,
    pub delta_psnr: f64,
    pub delta_ssim: f64,
    /// Supervised rays per run, equal for both.
    pub rays: usize,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let row = |name: &str, m: &MetricReport| format!("{name},{},{}\n", m.mean_psnr, m.mean_ssim);
        let mut s = String::from("model,psnr,ssim\n");
        s += &row("mesh2nerf", &self.mesh2nerf);
        s += &row("pixel", &self.pixel);
        s += &format!("delta,{},{}\n", self.delta_psnr, self.delta_ssim);
        s
    }
}

/// Fits the same field with direct and with pixel supervision on the same
/// rays, evaluates both on held-out views and reports the difference.
pub fn cmd_compare(cfg: &CompareConfig, out: &Path) -> Result<CompareReport> {
    let scene = cfg.scene.build()?;
    cfg.train.validate()?;
    prepare_out(out, cfg)?;
    let s = &cfg.scene;
    let cameras = s.cameras.train_cameras();
    let (dataset, _) = bake_dataset(&scene, &s.light, &cameras, cfg.rays_per_view, &s.sampling(), &s.field)?;
    let images: Vec<ImageBuffer> =
        cameras.iter().map(|c| render_analytic(&scene, &s.light, &s.field, c, cfg.n_samples)).collect();
    let pixels = PixelRays::from_images(&cameras, &images, cfg.rays_per_view, s.seed, s.background())?;
    if pixels.len() != dataset.rays.len() {
        return Err(Error::LengthMismatch {
            what: "supervised rays",
            left: dataset.rays.len(),
            right: pixels.len(),
        });
    }
    let direct_cfg = TrainConfig {
        supervision: Supervision::Mesh2nerf,
        ..cfg.train.clone()
    };
    let pixel_cfg = TrainConfig {
        supervision: Supervision::Pixel,
        pixel_samples: s.sampling.samples_per_train_ray(),
        ..cfg.train.clone()
    };
    let direct = fit_into(&FitData::Rays(dataset), &direct_cfg, &out.join("mesh2nerf"))?;
    let pixel = fit_into(&FitData::Pixels(pixels), &pixel_cfg, &out.join("pixel"))?;
    let (m_direct, _, _) = evaluate(&direct.model, s, cfg.test_views, cfg.n_samples)?;
    let (m_pixel, _, _) = evaluate(&pixel.model, s, cfg.test_views, cfg.n_samples)?;
    m_direct.write(out.join("mesh2nerf").join("report"))?;
    m_pixel.write(out.join("pixel").join("report"))?;
    let report = CompareReport {
        delta_psnr: m_direct.mean_psnr - m_pixel.mean_psnr,
        delta_ssim: m_direct.mean_ssim - m_pixel.mean_ssim,
        mesh2nerf: m_direct,
        pixel: m_pixel,
        rays: direct.rays,
    };
    fs::write(out.join("compare.csv"), report.to_csv()).map_err(|e| Error::io(out.join("compare.csv"), e))?;
    write_json(&report, out.join("compare.json"))?;
    Ok(report)
}

/// Sizes the global worker pool from `M2NF_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("M2NF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("M2NF_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_needs_exactly_one_source() {
        assert!(matches!(SceneConfig::default().validate(), Err(Error::Config(_))));
        let both = SceneConfig {
            mesh: Some("a.obj".into()),
            ..SceneConfig::procedural(Procedural::Cube)
        };
        assert!(matches!(both.validate(), Err(Error::Config(_))));
        assert!(SceneConfig::procedural(Procedural::Cube).validate().is_ok());
    }

    #[test]
    fn overrides_follow_paths() {
        let cfg = SceneConfig::procedural(Procedural::Icosphere);
        let got = apply_overrides(
            &cfg,
            &["field.half_thickness=0.02".into(), "seed=7".into(), "procedural=cube".into()],
        )
        .unwrap();
        assert_eq!(got.field.half_thickness, 0.02);
        assert_eq!(got.seed, 7);
        assert_eq!(got.procedural, Some(Procedural::Cube));
        assert!(apply_overrides(&cfg, &["field.thickness=1".into()]).is_err());
        assert!(apply_overrides(&cfg, &["seed".into()]).is_err());
        assert!(apply_overrides(&cfg, &["seed=\"x\"".into()]).is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = CompareConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<CompareConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<BakeConfig>(r#"{"rays_per_vew": 3}"#).is_err());
    }

    #[test]
    fn test_split_is_disjoint() {
        let s = CameraSphere::default();
        let train = s.train_cameras();
        let test = s.test_cameras(20);
        for a in &test {
            for b in &train {
                assert!((a.position - b.position).length() > 1e-3);
            }
        }
    }

    #[test]
    fn compare_csv_shape() {
        let m = MetricReport::from_views(Vec::new());
        let r = CompareReport {
            mesh2nerf: m.clone(),
            pixel: m,
            delta_psnr: 0.5,
            delta_ssim: 0.0,
            rays: 4,
        };
        let csv = r.to_csv();
        let rows: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(rows, ["mesh2nerf", "pixel", "delta"]);
    }
}
