//! Dense feature-grid field. Features at the vertices of a regular grid over
//! `[-1, 1]³` are trilinearly interpolated and decoded by a tiny MLP: a
//! hidden layer on the feature gives the density, and a second hidden layer
//! on that plus the encoded view direction gives the color.

use serde::{Deserialize, Serialize};

use super::dense::{relu_inplace, relu_mask, sigmoid, softplus, Dense};
use super::encoding::{encode, encoded_dim};
use super::{Backend, GradBuffer};
use crate::geometry::{Rgb, Vec3};
use crate::sampling::{salt, RngState};
use crate::{Error, Result};

pub const FEATURE_INIT_BOUND: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Vertices per axis.
    pub resolution: usize,
    pub features: usize,
    pub hidden: usize,
    pub l_dir: usize,
    pub include_input: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 64,
            features: 8,
            hidden: 32,
            l_dir: 4,
            include_input: true,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Config("grid resolution must be >= 2".into()));
        }
        if self.features == 0 || self.hidden == 0 {
            return Err(Error::Config("grid feature and hidden sizes must be positive".into()));
        }
        if self.dir_dim() == 0 {
            return Err(Error::Config("grid direction encoding must be non-empty".into()));
        }
        Ok(())
    }

    pub fn dir_dim(&self) -> usize {
        encoded_dim(self.l_dir, self.include_input)
    }

    pub(crate) fn arch_words(&self) -> Vec<u32> {
        [self.resolution, self.features, self.hidden, self.l_dir, self.include_input as usize]
            .iter()
            .map(|&v| v as u32)
            .collect()
    }

    pub(crate) fn from_arch_words(w: &[u32]) -> Option<GridSpec> {
        let [resolution, features, hidden, l_dir, inc] = w.try_into().ok()?;
        Some(GridSpec {
            resolution: resolution as usize,
            features: features as usize,
            hidden: hidden as usize,
            l_dir: l_dir as usize,
            include_input: inc != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    l1: Dense,
    density: Dense,
    l2: Dense,
    l3: Dense,
    /// Decoder parameters first, then the grid features.
    pub params: Vec<f64>,
}

pub struct GridCache {
    n: usize,
    param_count: usize,
    dir_enc: Vec<f64>,
    corners: Vec<[u32; 8]>,
    buf: Vec<f64>,
}

/// Per-sample cache layout: weights 8, feature F, h1 H, h2 H, raw sigma, raw rgb 3.
struct Layout {
    feat: usize,
    h1: usize,
    h2: usize,
    raw_sigma: usize,
    raw_rgb: usize,
    stride: usize,
}

impl GridField {
    pub fn zeroed(spec: GridSpec) -> Result<GridField> {
        spec.validate()?;
        let (f, h) = (spec.features, spec.hidden);
        let l1 = Dense::new(0, f, h);
        let density = Dense::new(l1.end(), h, 1);
        let l2 = Dense::new(density.end(), h + spec.dir_dim(), h);
        let l3 = Dense::new(l2.end(), h, 3);
        let n = l3.end() + spec.resolution.pow(3) * f;
        Ok(GridField {
            spec,
            l1,
            density,
            l2,
            l3,
            params: vec![0.0; n],
        })
    }

    /// Kaiming-uniform decoder, features uniform in ±1e-4, from `seed`.
    pub fn new(spec: GridSpec, seed: u64) -> Result<GridField> {
        let mut g = GridField::zeroed(spec)?;
        let mut rng = RngState::salted(seed, salt::INIT, 0);
        for l in [g.l1, g.density, g.l2, g.l3] {
            l.init(&mut g.params, &mut rng);
        }
        let mut rng = RngState::salted(seed, salt::INIT, 1);
        let start = g.decoder_len();
        for v in &mut g.params[start..] {
            *v = ((rng.uniform() * 2.0 - 1.0) * FEATURE_INIT_BOUND) as f32 as f64;
        }
        Ok(g)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn decoder_len(&self) -> usize {
        self.l3.end()
    }

    pub fn density_head_range(&self) -> std::ops::Range<usize> {
        self.density.offset..self.density.end()
    }

    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut v: Vec<_> = [self.l1, self.density, self.l2, self.l3].iter().map(|l| l.offset..l.end()).collect();
        v.push(self.decoder_len()..self.params.len());
        v
    }

    pub fn zero_decoder(&mut self) {
        let n = self.decoder_len();
        self.params[..n].fill(0.0);
    }

    /// Parameter index of feature `f` at grid vertex `(i, j, k)`.
    pub fn feature_index(&self, i: usize, j: usize, k: usize, f: usize) -> usize {
        let r = self.spec.resolution;
        self.decoder_len() + ((k * r + j) * r + i) * self.spec.features + f
    }

    /// World position of grid vertex `(i, j, k)`.
    pub fn vertex_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let s = 2.0 / (self.spec.resolution - 1) as f64;
        Vec3::new(-1.0 + i as f64 * s, -1.0 + j as f64 * s, -1.0 + k as f64 * s)
    }

    fn layout(&self) -> Layout {
        let (f, h) = (self.spec.features, self.spec.hidden);
        let feat = 8;
        let h1 = feat + f;
        let h2 = h1 + h;
        let raw_sigma = h2 + h;
        let raw_rgb = raw_sigma + 1;
        Layout {
            feat,
            h1,
            h2,
            raw_sigma,
            raw_rgb,
            stride: raw_rgb + 3,
        }
    }

    /// Feature base indices of the 8 surrounding vertices and their
    /// trilinear weights; queries are clamped to the grid.
    pub fn corners(&self, x: Vec3) -> ([u32; 8], [f64; 8]) {
        let r = self.spec.resolution;
        let scale = 0.5 * (r - 1) as f64;
        let axis = |v: f64| {
            let u = (v.clamp(-1.0, 1.0) + 1.0) * scale;
            let i = (u.floor() as usize).min(r - 2);
            (i, u - i as f64)
        };
        let (i, fx) = axis(x.x);
        let (j, fy) = axis(x.y);
        let (k, fz) = axis(x.z);
        let mut idx = [0u32; 8];
        let mut w = [0.0; 8];
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            idx[c] = self.feature_index(i + dx, j + dy, k + dz, 0) as u32;
            let wx = if dx == 1 { fx } else { 1.0 - fx };
            let wy = if dy == 1 { fy } else { 1.0 - fy };
            let wz = if dz == 1 { fz } else { 1.0 - fz };
            w[c] = wx * wy * wz;
        }
        (idx, w)
    }

    /// Interpolation, density branch; fills `s` up to the raw density.
    fn forward_density(&self, x: Vec3, s: &mut [f64]) -> [u32; 8] {
        let lay = self.layout();
        let nf = self.spec.features;
        let (idx, w) = self.corners(x);
        s[..8].copy_from_slice(&w);
        let feat = &mut s[lay.feat..lay.h1];
        feat.fill(0.0);
        for (base, &wc) in idx.iter().zip(&w) {
            let fv = &self.params[*base as usize..*base as usize + nf];
            for (a, b) in feat.iter_mut().zip(fv) {
                *a += wc * b;
            }
        }
        let (a, b) = s.split_at_mut(lay.h1);
        let h1 = &mut b[..self.spec.hidden];
        self.l1.forward(&self.params, &a[lay.feat..], h1);
        relu_inplace(h1);
        let mut raw = [0.0];
        self.density.forward(&self.params, h1, &mut raw);
        s[lay.raw_sigma] = raw[0];
        idx
    }

    fn dir_part(&self, dir_enc: &[f64]) -> Vec<f64> {
        let h = self.spec.hidden;
        let mut y = vec![0.0; h];
        self.l2.add_cols(&self.params, dir_enc, h..self.l2.n_in, &mut y);
        y
    }

    fn encode_dir(&self, d: Vec3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.dir_dim());
        encode(d, self.spec.l_dir, self.spec.include_input, &mut out);
        out
    }

    fn forward_color(&self, s: &mut [f64], dir_part: &[f64]) {
        let lay = self.layout();
        let h = self.spec.hidden;
        let (a, b) = s.split_at_mut(lay.h2);
        let h2 = &mut b[..h];
        self.l2.forward_cols(&self.params, &a[lay.h1..lay.h2], 0..h, h2);
        for (y, d) in h2.iter_mut().zip(dir_part) {
            *y += d;
        }
        relu_inplace(h2);
        let (a, b) = s.split_at_mut(lay.raw_rgb);
        self.l3.forward(&self.params, &a[lay.h2..lay.h2 + h], &mut b[..3]);
    }

    fn outputs(&self, s: &[f64]) -> (f64, Rgb) {
        let lay = self.layout();
        let r = &s[lay.raw_rgb..lay.raw_rgb + 3];
        (softplus(s[lay.raw_sigma]), Vec3::new(sigmoid(r[0]), sigmoid(r[1]), sigmoid(r[2])))
    }

    pub fn forward_ray(&self, origin: Vec3, dir: Vec3, ts: &[f64]) -> (Vec<f64>, Vec<Rgb>, GridCache) {
        let lay = self.layout();
        let dir_enc = self.encode_dir(dir);
        let dir_part = self.dir_part(&dir_enc);
        let mut buf = vec![0.0; lay.stride * ts.len()];
        let mut corners = Vec::with_capacity(ts.len());
        let mut sigma = Vec::with_capacity(ts.len());
        let mut color = Vec::with_capacity(ts.len());
        for (s, &t) in buf.chunks_exact_mut(lay.stride).zip(ts) {
            corners.push(self.forward_density(origin + dir * t, s));
            self.forward_color(s, &dir_part);
            let (sg, c) = self.outputs(s);
            sigma.push(sg);
            color.push(c);
        }
        let cache = GridCache {
            n: ts.len(),
            param_count: self.params.len(),
            dir_enc,
            corners,
            buf,
        };
        (sigma, color, cache)
    }

    pub fn backward_ray(&self, cache: &GridCache, d_sigma: &[f64], d_color: &[Rgb], grad: &mut GradBuffer) -> Result<()> {
        if cache.param_count != self.params.len() {
            return Err(Error::CacheMismatch("cache was produced by a different grid".into()));
        }
        if d_sigma.len() != cache.n || d_color.len() != cache.n {
            return Err(Error::CacheMismatch(format!(
                "{} cached samples, {} / {} upstream gradients",
                cache.n,
                d_sigma.len(),
                d_color.len()
            )));
        }
        if grad.dense.len() != self.decoder_len() {
            return Err(Error::CacheMismatch("gradient buffer has the wrong size".into()));
        }
        let lay = self.layout();
        let p = &self.params;
        let (nf, h) = (self.spec.features, self.spec.hidden);
        let mut dir_sum = vec![0.0; h];
        let mut dh1 = vec![0.0; h];
        let mut dh2 = vec![0.0; h];
        let mut dfeat = vec![0.0; nf];
        for (i, s) in cache.buf.chunks_exact(lay.stride).enumerate() {
            let (ds, dc) = (d_sigma[i], d_color[i]);
            if ds == 0.0 && dc == Vec3::ZERO {
                continue;
            }
            let g = &mut grad.dense;
            let r = &s[lay.raw_rgb..lay.raw_rgb + 3];
            let drgb: Vec<f64> = (0..3)
                .map(|k| {
                    let y = sigmoid(r[k]);
                    dc[k] * y * (1.0 - y)
                })
                .collect();
            let h1 = &s[lay.h1..lay.h2];
            let h2 = &s[lay.h2..lay.raw_sigma];
            dh2.fill(0.0);
            self.l3.backward(p, g, h2, &drgb, Some(&mut dh2));
            relu_mask(h2, &mut dh2);
            self.l2.grad_cols(g, h1, &dh2, 0..h, true);
            dh1.fill(0.0);
            self.l2.input_grad_cols(p, &dh2, 0..h, &mut dh1);
            for (a, b) in dir_sum.iter_mut().zip(&dh2) {
                *a += b;
            }
            let draw = ds * sigmoid(s[lay.raw_sigma]);
            self.density.backward(p, g, h1, &[draw], Some(&mut dh1));
            relu_mask(h1, &mut dh1);
            dfeat.fill(0.0);
            self.l1.backward(p, g, &s[lay.feat..lay.h1], &dh1, Some(&mut dfeat));
            for (base, &wc) in cache.corners[i].iter().zip(&s[..8]) {
                for (f, &df) in dfeat.iter().enumerate() {
                    grad.sparse.push((*base + f as u32, wc * df));
                }
            }
        }
        self.l2.grad_cols(&mut grad.dense, &cache.dir_enc, &dir_sum, h..h + cache.dir_enc.len(), false);
        Ok(())
    }
}

pub struct GridProbe {
    sample: Vec<f64>,
}

impl Backend for GridField {
    type Probe = GridProbe;
    type DirContext = Vec<f64>;

    fn dir_context(&self, d: Vec3) -> Vec<f64> {
        self.dir_part(&self.encode_dir(d))
    }

    fn new_probe(&self) -> GridProbe {
        GridProbe {
            sample: vec![0.0; self.layout().stride],
        }
    }

    fn density_probe(&self, x: Vec3, probe: &mut GridProbe) -> f64 {
        self.forward_density(x, &mut probe.sample);
        softplus(probe.sample[self.layout().raw_sigma])
    }

    fn color_from_probe(&self, probe: &mut GridProbe, ctx: &Vec<f64>) -> Rgb {
        self.forward_color(&mut probe.sample, ctx);
        self.outputs(&probe.sample).1
    }
}
