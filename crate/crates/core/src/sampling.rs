//! Sample placement along rays, and camera poses on spheres.
//!
//! All randomness flows through [`RngState`], a ChaCha8 stream keyed by a
//! seed and a stream id, so each ray (or camera, or training step) draws
//! from its own reproducible sequence regardless of evaluation order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, HitRecord, Ray, Vec3};
use crate::render::Camera;

/// Smallest allowed ray parameter for primary samples.
pub const T_NEAR_FLOOR: f64 = 1e-4;

/// Nudge applied to restore strict ordering after merging sample sets.
pub const DEDUP_NUDGE: f64 = 1e-9;

/// Domains that keep independent streams apart under one user seed.
pub mod salt {
    pub const PIXELS: u64 = 0x7069_7865_6c73_0001;
    pub const RAYS: u64 = 0x7261_7973_0000_0002;
    pub const BATCH: u64 = 0x6261_7463_6800_0003;
    pub const INIT: u64 = 0x696e_6974_0000_0004;
    pub const CAMERAS: u64 = 0x6361_6d65_7261_0005;
    pub const PIXEL_SAMPLES: u64 = 0x7073_616d_7000_0006;
}

/// Deterministic counter-based generator: a (seed, stream) pair.
#[derive(Debug, Clone)]
pub struct RngState {
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngState { rng }
    }

    /// Stream in a salted domain, e.g. `RngState::salted(seed, salt::RAYS, ray_index)`.
    pub fn salted(seed: u64, domain: u64, stream: u64) -> Self {
        RngState::new(seed ^ domain, stream)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// How the sampled interval of a ray is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RayBounds {
    /// The part of the ray inside [-1, 1]³, starting no earlier than [`T_NEAR_FLOOR`].
    #[default]
    SceneCube,
    Fixed { t_near: f64, t_far: f64 },
}

impl RayBounds {
    pub fn interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        match *self {
            RayBounds::SceneCube => ray
                .clip(&Aabb::scene_cube(), T_NEAR_FLOOR, f64::INFINITY)
                .filter(|(a, b)| b > a),
            RayBounds::Fixed { t_near, t_far } => Some((t_near, t_far)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub n_stratified: usize,
    pub n_band: usize,
    pub n_inference: usize,
    pub bounds: RayBounds,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_stratified: 512,
            n_band: 512,
            n_inference: 800,
            bounds: RayBounds::SceneCube,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.n_stratified == 0 || self.n_band == 0 || self.n_inference < 2 {
            return Err(crate::Error::Config("sample counts must be >= 1 (inference >= 2)".into()));
        }
        if let RayBounds::Fixed { t_near, t_far } = self.bounds {
            if !(t_near >= 0.0 && t_near < t_far) {
                return Err(crate::Error::Config(format!("need 0 <= t_near < t_far, got {t_near}..{t_far}")));
            }
        }
        Ok(())
    }

    pub fn samples_per_train_ray(&self) -> usize {
        self.n_stratified + self.n_band
    }
}

/// Pushes any non-increasing entry just past its predecessor.
pub fn make_strictly_increasing(ts: &mut [f64]) {
    for i in 1..ts.len() {
        if ts[i] <= ts[i - 1] {
            ts[i] = ts[i - 1] + DEDUP_NUDGE;
        }
    }
}

/// One uniform draw in each of `n` equal-width bins of `[t_near, t_far)`.
pub fn stratified_samples(t_near: f64, t_far: f64, n: usize, rng: &mut RngState) -> Vec<f64> {
    let width = (t_far - t_near) / n as f64;
    let mut ts: Vec<f64> = (0..n)
        .map(|i| t_near + (i as f64 + rng.uniform()) * width)
        .collect();
    make_strictly_increasing(&mut ts);
    ts
}

/// `m` sorted uniform draws inside the band `(t_hit - h, t_hit + h)`, with
/// the band interval clipped to `[t_near, t_far)`.
pub fn band_samples(t_hit: f64, h: f64, m: usize, t_near: f64, t_far: f64, rng: &mut RngState) -> Vec<f64> {
    let lo_band = t_hit - h;
    let lo = lo_band.max(t_near);
    let hi = (t_hit + h).min(t_far);
    if !(hi > lo) {
        return Vec::new();
    }
    let mut ts = Vec::with_capacity(m);
    while ts.len() < m {
        let t = lo + rng.uniform() * (hi - lo);
        // The band is open; reject its exact lower edge.
        if t > lo_band && t < hi {
            ts.push(t);
        }
    }
    ts.sort_by(f64::total_cmp);
    ts
}

/// Training samples: stratified plus band samples (half-width `h`) for hit
/// rays, or the same total count of unstratified uniform draws for misses.
/// Rays that do not cross the sampling bounds get no samples.
pub fn sample_ray_train(
    ray: &Ray,
    hit: Option<&HitRecord>,
    h: f64,
    cfg: &SamplingConfig,
    rng: &mut RngState,
) -> Vec<f64> {
    let Some((t_near, t_far)) = cfg.bounds.interval(ray) else {
        return Vec::new();
    };
    let mut ts = match hit {
        Some(hit) if hit.t_hit < t_far => {
            let mut ts = stratified_samples(t_near, t_far, cfg.n_stratified, rng);
            ts.extend(band_samples(hit.t_hit, h, cfg.n_band, t_near, t_far, rng));
            ts
        }
        _ => {
            let n = cfg.samples_per_train_ray();
            (0..n).map(|_| t_near + rng.uniform() * (t_far - t_near)).collect()
        }
    };
    ts.sort_by(f64::total_cmp);
    make_strictly_increasing(&mut ts);
    ts
}

/// `n` evenly spaced samples starting at `t_near`, spacing `(t_far - t_near) / n`.
pub fn uniform_inference_samples(t_near: f64, t_far: f64, n: usize) -> Vec<f64> {
    let step = (t_far - t_near) / n as f64;
    (0..n).map(|i| t_near + i as f64 * step).collect()
}

/// Fibonacci-lattice cameras on a sphere around `look_at`. The seed rotates
/// the lattice about the vertical axis, so lattices with different seeds
/// interleave.
pub fn cameras_on_sphere(
    n: usize,
    radius: f64,
    look_at: Vec3,
    fov_deg: f64,
    resolution: (usize, usize),
    seed: u64,
) -> Vec<Camera> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let offset = if seed == 0 {
        0.0
    } else {
        RngState::salted(seed, salt::CAMERAS, 0).uniform() * std::f64::consts::TAU
    };
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = i as f64 * golden_angle + offset;
            let dir = Vec3::new(r * phi.cos(), y, r * phi.sin());
            Camera::look_at(look_at + dir * radius, look_at, Vec3::Y, fov_deg, resolution.0, resolution.1)
        })
        .collect()
}
