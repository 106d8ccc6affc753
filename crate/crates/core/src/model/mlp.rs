//! Frequency-encoded MLP field: a ReLU trunk on the encoded position feeds a
//! density head and a feature vector; a small color head reads the feature
//! together with the encoded view direction.

use serde::{Deserialize, Serialize};

use super::dense::{relu_inplace, relu_mask, sigmoid, softplus, Dense};
use super::encoding::{encode, FrequencyEncodingSpec};
use super::{Backend, GradBuffer};
use crate::geometry::{Rgb, Vec3};
use crate::sampling::{salt, RngState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub encoding: FrequencyEncodingSpec,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub feature_dim: usize,
    pub color_width: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            encoding: FrequencyEncodingSpec::default(),
            trunk_depth: 4,
            trunk_width: 64,
            feature_dim: 16,
            color_width: 32,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_depth == 0 || self.trunk_width == 0 || self.feature_dim == 0 || self.color_width == 0 {
            return Err(Error::Config("mlp layer sizes must be positive".into()));
        }
        if self.encoding.pos_dim() == 0 || self.encoding.dir_dim() == 0 {
            return Err(Error::Config("mlp encodings must be non-empty".into()));
        }
        Ok(())
    }

    pub(crate) fn arch_words(&self) -> Vec<u32> {
        let e = &self.encoding;
        [e.l_pos, e.l_dir, e.include_input as usize, self.trunk_depth, self.trunk_width, self.feature_dim, self.color_width]
            .iter()
            .map(|&v| v as u32)
            .collect()
    }

    pub(crate) fn from_arch_words(w: &[u32]) -> Option<MlpSpec> {
        let [l_pos, l_dir, inc, depth, width, feat, color] = w.try_into().ok()?;
        Some(MlpSpec {
            encoding: FrequencyEncodingSpec {
                l_pos: l_pos as usize,
                l_dir: l_dir as usize,
                include_input: inc != 0,
            },
            trunk_depth: depth as usize,
            trunk_width: width as usize,
            feature_dim: feat as usize,
            color_width: color as usize,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    pub spec: MlpSpec,
    trunk: Vec<Dense>,
    density: Dense,
    feature: Dense,
    color: [Dense; 3],
    pub params: Vec<f64>,
}

/// Activations of one sample for the backward pass.
pub struct MlpCache {
    n: usize,
    stride: usize,
    param_count: usize,
    dir_enc: Vec<f64>,
    buf: Vec<f64>,
}

// Offsets of each activation inside a cached sample.
struct Layout {
    enc: usize,
    trunk: usize,
    feat: usize,
    raw_sigma: usize,
    c0: usize,
    c1: usize,
    raw_rgb: usize,
    stride: usize,
}

impl MlpField {
    pub fn layers(spec: &MlpSpec) -> (Vec<Dense>, Dense, Dense, [Dense; 3]) {
        let w = spec.trunk_width;
        let mut offset = 0;
        let mut trunk = Vec::with_capacity(spec.trunk_depth);
        for k in 0..spec.trunk_depth {
            let n_in = if k == 0 { spec.encoding.pos_dim() } else { w };
            let l = Dense::new(offset, n_in, w);
            offset = l.end();
            trunk.push(l);
        }
        let density = Dense::new(offset, w, 1);
        let feature = Dense::new(density.end(), w, spec.feature_dim);
        let c0 = Dense::new(feature.end(), spec.feature_dim + spec.encoding.dir_dim(), spec.color_width);
        let c1 = Dense::new(c0.end(), spec.color_width, spec.color_width);
        let c2 = Dense::new(c1.end(), spec.color_width, 3);
        (trunk, density, feature, [c0, c1, c2])
    }

    /// Seeded Kaiming-uniform initialization.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<MlpField> {
        let mut f = MlpField::zeroed(spec)?;
        let mut rng = RngState::salted(seed, salt::INIT, 0);
        let mut layers = f.trunk.clone();
        layers.extend([f.density, f.feature]);
        layers.extend(f.color);
        for l in layers {
            l.init(&mut f.params, &mut rng);
        }
        Ok(f)
    }

    /// All parameters zero.
    pub fn zeroed(spec: MlpSpec) -> Result<MlpField> {
        spec.validate()?;
        let (trunk, density, feature, color) = MlpField::layers(&spec);
        let n = color[2].end();
        Ok(MlpField {
            spec,
            trunk,
            density,
            feature,
            color,
            params: vec![0.0; n],
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter index ranges of each layer, in storage order.
    pub fn density_head_range(&self) -> std::ops::Range<usize> {
        self.density.offset..self.density.end()
    }

    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut v: Vec<_> = self.trunk.iter().map(|l| l.offset..l.end()).collect();
        v.extend([self.density, self.feature].iter().chain(&self.color).map(|l| l.offset..l.end()));
        v
    }

    /// Zeroes the color head.
    pub fn zero_color_head(&mut self) {
        for l in self.color {
            self.params[l.offset..l.end()].fill(0.0);
        }
    }

    /// Zeroes the density and feature heads.
    pub fn zero_heads(&mut self) {
        for l in [self.density, self.feature] {
            self.params[l.offset..l.end()].fill(0.0);
        }
    }

    fn layout(&self) -> Layout {
        let s = &self.spec;
        let enc = 0;
        let trunk = enc + s.encoding.pos_dim();
        let feat = trunk + s.trunk_depth * s.trunk_width;
        let raw_sigma = feat + s.feature_dim;
        let c0 = raw_sigma + 1;
        let c1 = c0 + s.color_width;
        let raw_rgb = c1 + s.color_width;
        Layout {
            enc,
            trunk,
            feat,
            raw_sigma,
            c0,
            c1,
            raw_rgb,
            stride: raw_rgb + 3,
        }
    }

    fn encode_dir(&self, d: Vec3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.encoding.dir_dim());
        encode(d, self.spec.encoding.l_dir, self.spec.encoding.include_input, &mut out);
        out
    }

    /// Direction contribution `W_dir · enc(d)` of the first color layer.
    fn dir_part(&self, dir_enc: &[f64]) -> Vec<f64> {
        let c0 = self.color[0];
        let f = self.spec.feature_dim;
        let mut y = vec![0.0; c0.n_out];
        c0.add_cols(&self.params, dir_enc, f..c0.n_in, &mut y);
        y
    }

    /// Trunk, density and feature for one sample into `s` (one cache stride).
    fn forward_density(&self, x: Vec3, s: &mut [f64], enc_scratch: &mut Vec<f64>) {
        let lay = self.layout();
        let p = &self.params;
        let e = &self.spec.encoding;
        encode(x, e.l_pos, e.include_input, enc_scratch);
        s[lay.enc..lay.trunk].copy_from_slice(enc_scratch);
        let w = self.spec.trunk_width;
        for (k, l) in self.trunk.iter().enumerate() {
            let (prev, rest) = s.split_at_mut(lay.trunk + k * w);
            let input = if k == 0 { &prev[lay.enc..lay.trunk] } else { &prev[lay.trunk + (k - 1) * w..] };
            let out = &mut rest[..w];
            l.forward(p, input, out);
            relu_inplace(out);
        }
        let (head_in, rest) = s.split_at_mut(lay.feat);
        let h = &head_in[lay.trunk + (self.spec.trunk_depth - 1) * w..];
        self.feature.forward(p, h, &mut rest[..self.spec.feature_dim]);
        let mut raw = [0.0];
        self.density.forward(p, h, &mut raw);
        rest[lay.raw_sigma - lay.feat] = raw[0];
    }

    fn forward_color(&self, s: &mut [f64], dir_part: &[f64]) {
        let lay = self.layout();
        let p = &self.params;
        let f = self.spec.feature_dim;
        let cw = self.spec.color_width;
        let (a, b) = s.split_at_mut(lay.c0);
        let c0 = &mut b[..cw];
        self.color[0].forward_cols(p, &a[lay.feat..lay.feat + f], 0..f, c0);
        for (y, d) in c0.iter_mut().zip(dir_part) {
            *y += d;
        }
        relu_inplace(c0);
        let (a, b) = s.split_at_mut(lay.c1);
        self.color[1].forward(p, &a[lay.c0..lay.c0 + cw], &mut b[..cw]);
        relu_inplace(&mut b[..cw]);
        let (a, b) = s.split_at_mut(lay.raw_rgb);
        self.color[2].forward(p, &a[lay.c1..lay.c1 + cw], &mut b[..3]);
    }

    fn outputs(&self, s: &[f64]) -> (f64, Rgb) {
        let lay = self.layout();
        let r = &s[lay.raw_rgb..lay.raw_rgb + 3];
        (softplus(s[lay.raw_sigma]), Vec3::new(sigmoid(r[0]), sigmoid(r[1]), sigmoid(r[2])))
    }

    pub fn forward_ray(&self, origin: Vec3, dir: Vec3, ts: &[f64]) -> (Vec<f64>, Vec<Rgb>, MlpCache) {
        let lay = self.layout();
        let dir_enc = self.encode_dir(dir);
        let dir_part = self.dir_part(&dir_enc);
        let mut buf = vec![0.0; lay.stride * ts.len()];
        let mut enc = Vec::new();
        let mut sigma = Vec::with_capacity(ts.len());
        let mut color = Vec::with_capacity(ts.len());
        for (s, &t) in buf.chunks_exact_mut(lay.stride).zip(ts) {
            self.forward_density(origin + dir * t, s, &mut enc);
            self.forward_color(s, &dir_part);
            let (sg, c) = self.outputs(s);
            sigma.push(sg);
            color.push(c);
        }
        let cache = MlpCache {
            n: ts.len(),
            stride: lay.stride,
            param_count: self.params.len(),
            dir_enc,
            buf,
        };
        (sigma, color, cache)
    }

    pub fn backward_ray(&self, cache: &MlpCache, d_sigma: &[f64], d_color: &[Rgb], grad: &mut GradBuffer) -> Result<()> {
        let lay = self.layout();
        if cache.param_count != self.params.len() || cache.stride != lay.stride {
            return Err(Error::CacheMismatch("cache was produced by a different mlp".into()));
        }
        if d_sigma.len() != cache.n || d_color.len() != cache.n {
            return Err(Error::CacheMismatch(format!(
                "{} cached samples, {} / {} upstream gradients",
                cache.n,
                d_sigma.len(),
                d_color.len()
            )));
        }
        if grad.dense.len() != self.params.len() {
            return Err(Error::CacheMismatch("gradient buffer has the wrong size".into()));
        }
        let p = &self.params;
        let g = &mut grad.dense;
        let (w, f, cw) = (self.spec.trunk_width, self.spec.feature_dim, self.spec.color_width);
        let depth = self.spec.trunk_depth;
        let mut dir_sum = vec![0.0; cw];
        let mut dc1 = vec![0.0; cw];
        let mut dc0 = vec![0.0; cw];
        let mut dfeat = vec![0.0; f];
        let mut dh = vec![0.0; w];
        let mut dprev = vec![0.0; w];
        for (i, s) in cache.buf.chunks_exact(cache.stride).enumerate() {
            let (ds, dc) = (d_sigma[i], d_color[i]);
            if ds == 0.0 && dc == Vec3::ZERO {
                continue;
            }
            let r = &s[lay.raw_rgb..lay.raw_rgb + 3];
            let drgb: Vec<f64> = (0..3)
                .map(|k| {
                    let y = sigmoid(r[k]);
                    dc[k] * y * (1.0 - y)
                })
                .collect();
            let c1 = &s[lay.c1..lay.c1 + cw];
            let c0 = &s[lay.c0..lay.c0 + cw];
            dc1.fill(0.0);
            self.color[2].backward(p, g, c1, &drgb, Some(&mut dc1));
            relu_mask(c1, &mut dc1);
            dc0.fill(0.0);
            self.color[1].backward(p, g, c0, &dc1, Some(&mut dc0));
            relu_mask(c0, &mut dc0);
            let feat = &s[lay.feat..lay.feat + f];
            self.color[0].grad_cols(g, feat, &dc0, 0..f, true);
            dfeat.fill(0.0);
            self.color[0].input_grad_cols(p, &dc0, 0..f, &mut dfeat);
            for (a, b) in dir_sum.iter_mut().zip(&dc0) {
                *a += b;
            }
            let h_last = &s[lay.trunk + (depth - 1) * w..lay.feat];
            dh.fill(0.0);
            self.feature.backward(p, g, h_last, &dfeat, Some(&mut dh));
            let draw = ds * sigmoid(s[lay.raw_sigma]);
            self.density.backward(p, g, h_last, &[draw], Some(&mut dh));
            for k in (0..depth).rev() {
                let hk = &s[lay.trunk + k * w..lay.trunk + (k + 1) * w];
                relu_mask(hk, &mut dh);
                if k == 0 {
                    self.trunk[0].backward(p, g, &s[lay.enc..lay.trunk], &dh, None);
                } else {
                    dprev.fill(0.0);
                    let input = &s[lay.trunk + (k - 1) * w..lay.trunk + k * w];
                    self.trunk[k].backward(p, g, input, &dh, Some(&mut dprev));
                    std::mem::swap(&mut dh, &mut dprev);
                }
            }
        }
        self.color[0].grad_cols(g, &cache.dir_enc, &dir_sum, f..f + cache.dir_enc.len(), false);
        Ok(())
    }
}

/// Trunk activations of a sample, kept until its color is needed.
pub struct MlpProbe {
    sample: Vec<f64>,
    enc: Vec<f64>,
}

impl Backend for MlpField {
    type Probe = MlpProbe;
    type DirContext = Vec<f64>;

    fn dir_context(&self, d: Vec3) -> Vec<f64> {
        self.dir_part(&self.encode_dir(d))
    }

    fn new_probe(&self) -> MlpProbe {
        MlpProbe {
            sample: vec![0.0; self.layout().stride],
            enc: Vec::new(),
        }
    }

    fn density_probe(&self, x: Vec3, probe: &mut MlpProbe) -> f64 {
        self.forward_density(x, &mut probe.sample, &mut probe.enc);
        softplus(probe.sample[self.layout().raw_sigma])
    }

    fn color_from_probe(&self, probe: &mut MlpProbe, ctx: &Vec<f64>) -> Rgb {
        self.forward_color(&mut probe.sample, ctx);
        self.outputs(&probe.sample).1
    }
}
