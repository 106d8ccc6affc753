//! The training loop for both supervision modes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step_scaled, onecycle_lr, AdamState, OneCycleSchedule};
use super::{BackendKind, GridSpec, MlpSpec, TrainableField};
use crate::field::deltas;
use crate::geometry::{Ray, Rgb};
use crate::render::{pixel_ray, Camera, ImageBuffer};
use crate::sampling::{salt, stratified_samples, RayBounds, RngState};
use crate::supervision::{pixel_loss, select_pixels, total_loss, Dataset, LossReport, LossWeights, PixelSample, SupervisedRay};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Per-sample alpha and color targets plus the integral term.
    #[default]
    Mesh2nerf,
    /// Composited color against observed pixels only.
    Pixel,
}

impl std::str::FromStr for Supervision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Supervision> {
        match s {
            "mesh2nerf" => Ok(Supervision::Mesh2nerf),
            "pixel" => Ok(Supervision::Pixel),
            _ => Err(Error::Config(format!("unknown supervision {s:?} (mesh2nerf or pixel)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub backend: BackendKind,
    pub mlp: MlpSpec,
    pub grid: GridSpec,
    pub iterations: usize,
    pub batch_rays: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub supervision: Supervision,
    pub max_lr: f64,
    pub pct_start: f64,
    /// Stratified samples per ray in pixel mode, redrawn every step.
    pub pixel_samples: usize,
    /// Learning-rate multiplier of the density head.
    pub density_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            backend: BackendKind::Grid,
            mlp: MlpSpec::default(),
            grid: GridSpec::default(),
            iterations: 50_000,
            batch_rays: 1024,
            seed: 0,
            weights: LossWeights::default(),
            supervision: Supervision::Mesh2nerf,
            max_lr: 1e-3,
            pct_start: 0.001,
            pixel_samples: 1024,
            density_lr_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> OneCycleSchedule {
        OneCycleSchedule {
            max_lr: self.max_lr,
            pct_start: self.pct_start,
            total_steps: self.iterations.max(1),
            ..OneCycleSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_rays == 0 {
            return Err(Error::Config("batch_rays must be >= 1".into()));
        }
        if self.supervision == Supervision::Pixel && self.pixel_samples == 0 {
            return Err(Error::Config("pixel_samples must be >= 1".into()));
        }
        if !(self.density_lr_scale > 0.0 && self.density_lr_scale.is_finite()) {
            return Err(Error::Config("density_lr_scale must be > 0".into()));
        }
        self.weights.validate()?;
        self.schedule().validate()?;
        match self.backend {
            BackendKind::Mlp => self.mlp.validate(),
            BackendKind::Grid => self.grid.validate(),
        }
    }
}

/// Pixel-supervised rays: one camera ray and observed color per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRays {
    pub rays: Vec<Ray>,
    pub targets: Vec<Rgb>,
    pub background: Rgb,
    pub bounds: RayBounds,
}

impl PixelRays {
    /// The same seeded pixels a baked dataset would use for these cameras.
    pub fn from_images(
        cameras: &[Camera],
        images: &[ImageBuffer],
        rays_per_view: usize,
        seed: u64,
        background: Rgb,
    ) -> Result<PixelRays> {
        if cameras.is_empty() {
            return Err(Error::NoCameras);
        }
        if cameras.len() != images.len() {
            return Err(Error::Config(format!("{} cameras but {} images", cameras.len(), images.len())));
        }
        let mut rays = Vec::new();
        let mut targets = Vec::new();
        for (ci, (cam, img)) in cameras.iter().zip(images).enumerate() {
            if (img.width(), img.height()) != (cam.width, cam.height) {
                return Err(Error::Config(format!(
                    "image {ci} is {}x{}, camera expects {}x{}",
                    img.width(),
                    img.height(),
                    cam.width,
                    cam.height
                )));
            }
            for p in select_pixels(seed, ci, cam.width, cam.height, rays_per_view)? {
                let (x, y) = (p % cam.width, p / cam.width);
                rays.push(pixel_ray(cam, x, y));
                targets.push(img.get(x, y));
            }
        }
        Ok(PixelRays {
            rays,
            targets,
            background,
            bounds: RayBounds::SceneCube,
        })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TrainingData<'a> {
    Rays(&'a Dataset),
    Pixels(&'a PixelRays),
}

impl TrainingData<'_> {
    fn len(&self) -> usize {
        match self {
            TrainingData::Rays(d) => d.rays.len(),
            TrainingData::Pixels(p) => p.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub lr: f64,
    pub l_alpha: f64,
    pub l_color: f64,
    pub l_integral: f64,
    pub total: f64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("step,lr,l_alpha,l_color,l_integral,total\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e},{:e},{:e},{:e}", r.step, r.lr, r.l_alpha, r.l_color, r.l_integral, r.total).unwrap();
    }
    s
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Ray indices of step `step`, drawn uniformly with replacement.
pub fn batch_indices(seed: u64, step: usize, batch: usize, n: usize) -> Vec<usize> {
    let mut rng = RngState::salted(seed, salt::BATCH, step as u64);
    (0..batch).map(|_| rng.gen_range(0..n)).collect()
}

fn pixel_batch<'a>(data: &'a PixelRays, idx: &[usize], cfg: &TrainConfig, step: usize) -> Vec<PixelSample<'a>> {
    idx.iter()
        .enumerate()
        .map(|(slot, &i)| {
            let ray = &data.rays[i];
            let (ts, ds) = match data.bounds.interval(ray) {
                Some((near, far)) => {
                    let stream = (step * cfg.batch_rays + slot) as u64;
                    let mut rng = RngState::salted(cfg.seed, salt::PIXEL_SAMPLES, stream);
                    let ts = stratified_samples(near, far, cfg.pixel_samples, &mut rng);
                    let ds = deltas(&ts, (far - near) / cfg.pixel_samples as f64);
                    (ts, ds)
                }
                None => (Vec::new(), Vec::new()),
            };
            PixelSample {
                ray,
                target: data.targets[i],
                ts,
                deltas: ds,
            }
        })
        .collect()
}

/// Loss and gradient of one step's batch.
pub fn step_loss(
    model: &TrainableField,
    data: TrainingData<'_>,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(LossReport, super::GradBuffer)> {
    let idx = batch_indices(cfg.seed, step, cfg.batch_rays, data.len());
    match data {
        TrainingData::Rays(ds) => {
            let rays: Vec<&SupervisedRay> = idx.iter().map(|&i| &ds.rays[i]).collect();
            total_loss(&rays, model, &cfg.weights, ds.background())
        }
        TrainingData::Pixels(px) => pixel_loss(&pixel_batch(px, &idx, cfg, step), model, px.background),
    }
}

/// Fits a freshly initialized field. Returns the model and one metrics row
/// per step (losses measured before that step's update).
pub fn train(data: TrainingData<'_>, cfg: &TrainConfig) -> Result<(TrainableField, Vec<MetricsRow>)> {
    let model = TrainableField::new(cfg.backend, &cfg.mlp, &cfg.grid, cfg.seed)?;
    train_from(model, data, cfg)
}

/// [`train`] starting from an existing model.
pub fn train_from(
    mut model: TrainableField,
    data: TrainingData<'_>,
    cfg: &TrainConfig,
) -> Result<(TrainableField, Vec<MetricsRow>)> {
    cfg.validate()?;
    match (cfg.supervision, data) {
        (Supervision::Mesh2nerf, TrainingData::Pixels(_)) => {
            return Err(Error::Config("mesh2nerf supervision needs a baked dataset".into()))
        }
        (Supervision::Pixel, TrainingData::Rays(_)) => {
            return Err(Error::Config("pixel supervision needs images".into()))
        }
        _ => {}
    }
    if data.len() == 0 {
        return Err(Error::Config("training data is empty".into()));
    }
    let schedule = cfg.schedule();
    let n = model.param_count();
    let mut adam = AdamState::new(n);
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut full = vec![0.0; n];
    let scaled = [(model.density_head_range(), cfg.density_lr_scale)];
    for step in 0..cfg.iterations {
        let lr = onecycle_lr(step, &schedule)?;
        let (report, grad) = step_loss(&model, data, cfg, step)?;
        if !report.total.is_finite() {
            return Err(Error::Config(format!("loss diverged at step {step}")));
        }
        full.fill(0.0);
        grad.scatter_into(&mut full);
        adam_step_scaled(model.params_mut(), &full, &mut adam, lr, &scaled)?;
        rows.push(MetricsRow {
            step,
            lr,
            l_alpha: report.l_alpha,
            l_color: report.l_color,
            l_integral: report.l_integral,
            total: report.total,
        });
        if (step + 1) % 500 == 0 || step + 1 == cfg.iterations {
            log::info!("step {}/{} lr {:.2e} loss {:.5}", step + 1, cfg.iterations, lr, report.total);
        }
    }
    Ok((model, rows))
}
