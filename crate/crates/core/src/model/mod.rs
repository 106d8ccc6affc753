//! Trainable radiance fields, their optimizer, and the training loop.
//!
//! Two backends share one interface: [`MlpField`] (frequency-encoded MLP)
//! and [`GridField`] (trilinear feature grid with a tiny decoder). Both
//! output a softplus density that depends only on position and a sigmoid
//! color that also sees the view direction. Gradients are computed by hand,
//! per ray, into a [`GradBuffer`].

pub mod dense;
pub mod encoding;
pub mod grid;
pub mod mlp;
pub mod optim;
pub mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use encoding::{positional_encode, FrequencyEncodingSpec};
pub use grid::{GridCache, GridField, GridSpec};
pub use mlp::{MlpCache, MlpField, MlpSpec};
pub use optim::{adam_step, adam_step_scaled, onecycle_lr, AdamState, OneCycleSchedule};
pub use train::{train, MetricsRow, PixelRays, Supervision, TrainConfig, TrainingData};

use crate::geometry::{Ray, Rgb, Vec3};
use crate::render::{RenderField, EARLY_STOP_TRANSMITTANCE};
use crate::supervision::{alpha_from_density, RayModel};
use crate::{Error, Result};

/// Samples whose compositing weight falls below this skip the color branch
/// when rendering.
pub const RENDER_WEIGHT_EPS: f64 = 1e-7;

/// A gradient: dense entries for the leading parameters plus sparse
/// `(index, value)` contributions anywhere in the parameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradBuffer {
    pub dense: Vec<f64>,
    pub sparse: Vec<(u32, f64)>,
}

impl GradBuffer {
    pub fn new(n_dense: usize) -> Self {
        GradBuffer {
            dense: vec![0.0; n_dense],
            sparse: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: GradBuffer) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            *a += b;
        }
        if self.sparse.is_empty() {
            self.sparse = other.sparse;
        } else {
            self.sparse.extend(other.sparse);
        }
    }

    /// Adds the buffer into a full-length gradient, sparse entries in order.
    pub fn scatter_into(&self, out: &mut [f64]) {
        for (a, b) in out.iter_mut().zip(&self.dense) {
            *a += b;
        }
        for &(i, v) in &self.sparse {
            out[i as usize] += v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.scatter_into(&mut out);
        out
    }
}

/// Density-first evaluation used by the renderer and single-point queries.
pub trait Backend {
    type Probe;
    type DirContext;

    fn dir_context(&self, d: Vec3) -> Self::DirContext;
    fn new_probe(&self) -> Self::Probe;
    /// Density at `x`; `probe` keeps what the color branch needs.
    fn density_probe(&self, x: Vec3, probe: &mut Self::Probe) -> f64;
    fn color_from_probe(&self, probe: &mut Self::Probe, ctx: &Self::DirContext) -> Rgb;
}

/// `(σ, rgb)` at `x` viewed along `d`.
pub fn backend_forward<B: Backend>(b: &B, x: Vec3, d: Vec3) -> (f64, Rgb) {
    let mut probe = b.new_probe();
    let sigma = b.density_probe(x, &mut probe);
    let ctx = b.dir_context(d);
    (sigma, b.color_from_probe(&mut probe, &ctx))
}

fn march<B: Backend>(b: &B, ray: &Ray, ts: &[f64], delta: f64, background: Rgb) -> Rgb {
    let ctx = b.dir_context(ray.direction);
    let mut probe = b.new_probe();
    let mut transmittance = 1.0;
    let mut acc = Vec3::ZERO;
    for &t in ts {
        let sigma = b.density_probe(ray.at(t), &mut probe);
        let alpha = alpha_from_density(sigma, delta);
        let w = transmittance * alpha;
        if w > RENDER_WEIGHT_EPS {
            acc += b.color_from_probe(&mut probe, &ctx) * w;
        }
        transmittance *= 1.0 - alpha;
        if transmittance < EARLY_STOP_TRANSMITTANCE {
            break;
        }
    }
    acc + background * transmittance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mlp,
    #[default]
    Grid,
}

impl BackendKind {
    pub fn tag(self) -> u32 {
        match self {
            BackendKind::Mlp => 0,
            BackendKind::Grid => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Mlp => "mlp",
            BackendKind::Grid => "grid",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<BackendKind> {
        match s {
            "mlp" => Ok(BackendKind::Mlp),
            "grid" => Ok(BackendKind::Grid),
            _ => Err(Error::Config(format!("unknown backend {s:?} (mlp or grid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainableField {
    Mlp(MlpField),
    Grid(GridField),
}

pub enum FieldCache {
    Mlp(MlpCache),
    Grid(GridCache),
}

impl TrainableField {
    pub fn new(kind: BackendKind, mlp: &MlpSpec, grid: &GridSpec, seed: u64) -> Result<TrainableField> {
        Ok(match kind {
            BackendKind::Mlp => TrainableField::Mlp(MlpField::new(*mlp, seed)?),
            BackendKind::Grid => TrainableField::Grid(GridField::new(*grid, seed)?),
        })
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            TrainableField::Mlp(_) => BackendKind::Mlp,
            TrainableField::Grid(_) => BackendKind::Grid,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            TrainableField::Mlp(m) => &m.params,
            TrainableField::Grid(g) => &g.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut Vec<f64> {
        match self {
            TrainableField::Mlp(m) => &mut m.params,
            TrainableField::Grid(g) => &mut g.params,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Parameter index ranges of each layer (the grid's features form the last one).
    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            TrainableField::Mlp(m) => m.layer_ranges(),
            TrainableField::Grid(g) => g.layer_ranges(),
        }
    }

    /// Parameters of the layer producing the density pre-activation.
    pub fn density_head_range(&self) -> std::ops::Range<usize> {
        match self {
            TrainableField::Mlp(m) => m.density_head_range(),
            TrainableField::Grid(g) => g.density_head_range(),
        }
    }

    fn arch_words(&self) -> Vec<u32> {
        match self {
            TrainableField::Mlp(m) => m.spec.arch_words(),
            TrainableField::Grid(g) => g.spec.arch_words(),
        }
    }
}

/// `(σ, rgb)` of a field at `x` viewed along unit `d`.
pub fn field_forward(model: &TrainableField, x: Vec3, d: Vec3) -> (f64, Rgb) {
    match model {
        TrainableField::Mlp(m) => backend_forward(m, x, d),
        TrainableField::Grid(g) => backend_forward(g, x, d),
    }
}

impl RayModel for TrainableField {
    type Cache = FieldCache;

    fn new_grad(&self) -> GradBuffer {
        match self {
            TrainableField::Mlp(m) => GradBuffer::new(m.param_count()),
            TrainableField::Grid(g) => GradBuffer::new(g.decoder_len()),
        }
    }

    fn forward_ray(&self, ray: &Ray, ts: &[f64]) -> (Vec<f64>, Vec<Rgb>, FieldCache) {
        match self {
            TrainableField::Mlp(m) => {
                let (s, c, k) = m.forward_ray(ray.origin, ray.direction, ts);
                (s, c, FieldCache::Mlp(k))
            }
            TrainableField::Grid(g) => {
                let (s, c, k) = g.forward_ray(ray.origin, ray.direction, ts);
                (s, c, FieldCache::Grid(k))
            }
        }
    }

    fn backward_ray(&self, cache: &FieldCache, d_sigma: &[f64], d_color: &[Rgb], grad: &mut GradBuffer) -> Result<()> {
        match (self, cache) {
            (TrainableField::Mlp(m), FieldCache::Mlp(c)) => m.backward_ray(c, d_sigma, d_color, grad),
            (TrainableField::Grid(g), FieldCache::Grid(c)) => g.backward_ray(c, d_sigma, d_color, grad),
            _ => Err(Error::CacheMismatch("cache belongs to the other backend".into())),
        }
    }
}

impl RenderField for TrainableField {
    fn render_ray(&self, ray: &Ray, ts: &[f64], delta: f64, background: Rgb) -> Rgb {
        match self {
            TrainableField::Mlp(m) => march(m, ray, ts, delta, background),
            TrainableField::Grid(g) => march(g, ray, ts, delta, background),
        }
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"M2NC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Checkpoint bytes; parameters are stored as little-endian `f32`.
pub fn encode_checkpoint(model: &TrainableField) -> Vec<u8> {
    let arch = model.arch_words();
    let params = model.params();
    let mut out = Vec::with_capacity(28 + 4 * arch.len() + 4 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.kind().tag().to_le_bytes());
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    for w in arch {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(data: &[u8]) -> Result<TrainableField> {
    let bad = |msg: String| Error::Format { what: "checkpoint", msg };
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        if data.len() - pos < n {
            return Err(bad(format!("truncated at byte {pos}")));
        }
        pos += n;
        Ok(&data[pos - n..pos])
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let tag = u32_at(take(4)?);
    let n_words = u32_at(take(4)?) as usize;
    let words: Vec<u32> = take(4 * n_words)?.chunks_exact(4).map(u32_at).collect();
    let n_params = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut model = match tag {
        0 => TrainableField::Mlp(MlpField::zeroed(
            MlpSpec::from_arch_words(&words).ok_or_else(|| bad("bad mlp architecture".into()))?,
        )?),
        1 => TrainableField::Grid(GridField::zeroed(
            GridSpec::from_arch_words(&words).ok_or_else(|| bad("bad grid architecture".into()))?,
        )?),
        t => return Err(bad(format!("unknown backend tag {t}"))),
    };
    if n_params != model.param_count() {
        return Err(bad(format!("{n_params} parameters, architecture needs {}", model.param_count())));
    }
    let body = take(4 * n_params)?;
    for (p, b) in model.params_mut().iter_mut().zip(body.chunks_exact(4)) {
        *p = f32::from_le_bytes(b.try_into().unwrap()) as f64;
    }
    if pos != data.len() {
        return Err(bad(format!("{} trailing bytes", data.len() - pos)));
    }
    Ok(model)
}

pub fn write_checkpoint(model: &TrainableField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<TrainableField> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
