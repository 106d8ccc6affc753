//! Fully connected layers over a flat parameter vector.

use std::ops::Range;

use crate::sampling::RngState;

/// `y = W x + b` with `W` row-major `[n_out][n_in]` at `offset`, then `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub offset: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(offset: usize, n_in: usize, n_out: usize) -> Self {
        Dense { offset, n_in, n_out }
    }

    pub fn len(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }

    pub fn end(&self) -> usize {
        self.offset + self.len()
    }

    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    pub fn bias(&self) -> Range<usize> {
        self.offset + self.n_in * self.n_out..self.end()
    }

    /// Kaiming-uniform weights, zero bias, rounded to `f32`.
    pub fn init(&self, params: &mut [f64], rng: &mut RngState) {
        let bound = (6.0 / self.n_in as f64).sqrt();
        for w in &mut params[self.weights()] {
            *w = ((rng.uniform() * 2.0 - 1.0) * bound) as f32 as f64;
        }
        params[self.bias()].fill(0.0);
    }

    /// `y = b + W[:, cols] x` where `x` has `cols.len()` entries.
    pub fn forward_cols(&self, p: &[f64], x: &[f64], cols: Range<usize>, y: &mut [f64]) {
        debug_assert_eq!(x.len(), cols.len());
        let w = &p[self.weights()];
        let b = &p[self.bias()];
        for (o, yo) in y.iter_mut().enumerate().take(self.n_out) {
            let row = &w[o * self.n_in + cols.start..o * self.n_in + cols.end];
            *yo = b[o] + dot(row, x);
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        self.forward_cols(p, x, 0..self.n_in, y);
    }

    /// `y += W[:, cols] x` without bias.
    pub fn add_cols(&self, p: &[f64], x: &[f64], cols: Range<usize>, y: &mut [f64]) {
        let w = &p[self.weights()];
        for (o, yo) in y.iter_mut().enumerate().take(self.n_out) {
            *yo += dot(&w[o * self.n_in + cols.start..o * self.n_in + cols.end], x);
        }
    }

    /// Accumulates `dW[:, cols] += dy xᵀ` and, when `bias`, `db += dy`.
    pub fn grad_cols(&self, g: &mut [f64], x: &[f64], dy: &[f64], cols: Range<usize>, bias: bool) {
        let (gw, gb) = g[self.offset..self.end()].split_at_mut(self.n_in * self.n_out);
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut gw[o * self.n_in + cols.start..o * self.n_in + cols.end];
            for (gi, &xi) in row.iter_mut().zip(x) {
                *gi += d * xi;
            }
            if bias {
                gb[o] += d;
            }
        }
    }

    /// `dx += W[:, cols]ᵀ dy`.
    pub fn input_grad_cols(&self, p: &[f64], dy: &[f64], cols: Range<usize>, dx: &mut [f64]) {
        let w = &p[self.weights()];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[o * self.n_in + cols.start..o * self.n_in + cols.end];
            for (xi, &wi) in dx.iter_mut().zip(row) {
                *xi += d * wi;
            }
        }
    }

    /// Full backward for input `x`: parameter gradients and, optionally, `dx`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        self.grad_cols(g, x, dy, 0..self.n_in, true);
        if let Some(dx) = dx {
            self.input_grad_cols(p, dy, 0..self.n_in, dx);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `dy` where the ReLU output `y` is inactive.
pub fn relu_mask(y: &[f64], dy: &mut [f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
