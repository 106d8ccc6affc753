#![allow(dead_code)]

use meshrf::field::FieldConfig;
use meshrf::geometry::{make_test_mesh, TestMeshKind, TestTexture};
use meshrf::model::{BackendKind, GridSpec, MlpSpec, TrainableField};
use meshrf::sampling::{cameras_on_sphere, RngState, SamplingConfig};
use meshrf::shading::LightConfig;
use meshrf::supervision::{bake_dataset, pixel_loss, total_loss, Dataset, LossWeights, PixelSample, SupervisedRay};
use meshrf::{Scene, Vec3};
use rand::seq::index::sample;

pub fn icosphere() -> Scene {
    Scene::new(make_test_mesh(TestMeshKind::Icosphere(3), TestTexture::Checker(8))).unwrap()
}

/// A few hundred seeded rays with short sample lists.
pub fn small_dataset(seed: u64, per_part: usize) -> Dataset {
    let scene = icosphere();
    let cams = cameras_on_sphere(4, 3.0, Vec3::ZERO, 50.0, (32, 32), 0);
    let sampling = SamplingConfig {
        n_stratified: per_part,
        n_band: per_part,
        seed,
        ..SamplingConfig::default()
    };
    bake_dataset(&scene, &LightConfig::default(), &cams, 64, &sampling, &FieldConfig::default())
        .unwrap()
        .0
}

/// Hit rays first, then one miss, `n` in total.
pub fn fd_batch(ds: &Dataset, n: usize) -> Vec<&SupervisedRay> {
    let mut out: Vec<&SupervisedRay> = ds.rays.iter().filter(|r| r.in_band.iter().any(|&b| b)).take(n - 1).collect();
    out.extend(ds.rays.iter().find(|r| !r.in_band.iter().any(|&b| b) && !r.is_empty()));
    out
}

/// Small architectures so every layer carries a measurable gradient.
pub fn fd_model(kind: BackendKind, seed: u64) -> TrainableField {
    let mlp = MlpSpec {
        trunk_depth: 3,
        trunk_width: 32,
        feature_dim: 8,
        color_width: 16,
        ..MlpSpec::default()
    };
    let grid = GridSpec {
        resolution: 9,
        features: 4,
        hidden: 16,
        ..GridSpec::default()
    };
    let mut model = TrainableField::new(kind, &mlp, &grid, seed).unwrap();
    if let TrainableField::Grid(g) = &mut model {
        // Lift the features off their near-zero initialization.
        let start = g.decoder_len();
        let mut rng = RngState::new(seed, 99);
        for v in &mut g.params[start..] {
            *v = rng.uniform() * 2.0 - 1.0;
        }
    }
    model
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdLoss {
    Direct,
    Pixel,
}

#[derive(Debug, Default)]
pub struct FdOutcome {
    pub checked: usize,
    pub skipped: usize,
    /// Draws replaced because the loss has a kink within ±ε of them.
    pub redrawn: usize,
    pub max_rel: f64,
    pub failures: Vec<String>,
}

pub const FD_EPS: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_MIN_GRAD: f64 = 1e-6;
/// Central differences at ε and ε/2 of a smooth loss agree far below this.
const SMOOTH_TOL: f64 = 1e-6;

fn loss_and_grad(model: &TrainableField, rays: &[&SupervisedRay], loss: FdLoss) -> (f64, Vec<f64>) {
    let bg = Vec3::ZERO;
    let (report, grad) = match loss {
        FdLoss::Direct => total_loss(rays, model, &LossWeights::default(), bg).unwrap(),
        FdLoss::Pixel => {
            let owned: Vec<_> = rays.iter().map(|r| r.ray()).collect();
            let batch: Vec<PixelSample> = rays
                .iter()
                .zip(&owned)
                .map(|(r, ray)| PixelSample {
                    ray,
                    target: r.integral(),
                    ts: r.ts_f64(),
                    deltas: r.deltas_f64(),
                })
                .collect();
            pixel_loss(&batch, model, bg).unwrap()
        }
    };
    (report.total, grad.to_dense(model.param_count()))
}

fn central_difference(model: &TrainableField, rays: &[&SupervisedRay], loss: FdLoss, i: usize, eps: f64) -> f64 {
    let mut plus = model.clone();
    plus.params_mut()[i] += eps;
    let mut minus = model.clone();
    minus.params_mut()[i] -= eps;
    (loss_and_grad(&plus, rays, loss).0 - loss_and_grad(&minus, rays, loss).0) / (2.0 * eps)
}

/// Central differences on `per_layer` random parameters of every layer. In
/// the grid feature table the draws come from the entries the batch touches.
/// A draw whose differences at ε and ε/2 disagree sits on a ReLU kink, where
/// differencing does not estimate the derivative; it is replaced by another
/// draw from the same layer. The analytic gradient plays no part in that test.
pub fn finite_difference_check(kind: BackendKind, loss: FdLoss, per_layer: usize, seed: u64) -> FdOutcome {
    let ds = small_dataset(seed, 12);
    let rays = fd_batch(&ds, 3);
    let model = fd_model(kind, seed);
    let (_, grad) = loss_and_grad(&model, &rays, loss);
    let mut rng = RngState::new(seed, 7);
    let mut out = FdOutcome::default();
    let ranges = model.layer_ranges();
    for (li, range) in ranges.iter().enumerate() {
        let pool: Vec<usize> = if kind == BackendKind::Grid && li + 1 == ranges.len() {
            range.clone().filter(|&i| grad[i] != 0.0).collect()
        } else {
            range.clone().collect()
        };
        let mut done = 0;
        for j in sample(&mut rng, pool.len(), pool.len()) {
            if done == per_layer {
                break;
            }
            let i = pool[j];
            let fd = central_difference(&model, &rays, loss, i, FD_EPS);
            let fd_half = central_difference(&model, &rays, loss, i, FD_EPS / 2.0);
            if (fd - fd_half).abs() > SMOOTH_TOL * fd.abs().max(FD_MIN_GRAD) {
                out.redrawn += 1;
                continue;
            }
            done += 1;
            let g = grad[i];
            if g.abs() <= FD_MIN_GRAD && fd.abs() <= FD_MIN_GRAD {
                out.skipped += 1;
                continue;
            }
            out.checked += 1;
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            out.max_rel = out.max_rel.max(rel);
            if rel >= FD_REL_TOL {
                out.failures.push(format!("layer {li} param {i}: analytic {g:e} vs fd {fd:e} (rel {rel:.2e})"));
            }
        }
    }
    out
}
