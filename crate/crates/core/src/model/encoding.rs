//! Sinusoidal frequency encoding of 3-vectors.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencyEncodingSpec {
    pub l_pos: usize,
    pub l_dir: usize,
    pub include_input: bool,
}

impl Default for FrequencyEncodingSpec {
    fn default() -> Self {
        FrequencyEncodingSpec {
            l_pos: 10,
            l_dir: 4,
            include_input: true,
        }
    }
}

impl FrequencyEncodingSpec {
    pub fn pos_dim(&self) -> usize {
        encoded_dim(self.l_pos, self.include_input)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_dim(self.l_dir, self.include_input)
    }
}

pub fn encoded_dim(levels: usize, include_input: bool) -> usize {
    3 * include_input as usize + 6 * levels
}

/// `[v?, sin(2⁰πv), cos(2⁰πv), …, sin(2^{L−1}πv), cos(2^{L−1}πv)]`, each
/// entry a 3-vector laid out component by component.
pub fn encode(v: Vec3, levels: usize, include_input: bool, out: &mut Vec<f64>) {
    out.clear();
    let c = v.to_array();
    if include_input {
        out.extend_from_slice(&c);
    }
    let mut freq = std::f64::consts::PI;
    for _ in 0..levels {
        let (s, co): (Vec<f64>, Vec<f64>) = c.iter().map(|&x| (freq * x).sin_cos()).unzip();
        out.extend_from_slice(&s);
        out.extend_from_slice(&co);
        freq *= 2.0;
    }
}

/// Position encoding under `spec`.
pub fn positional_encode(v: Vec3, spec: &FrequencyEncodingSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.pos_dim());
    encode(v, spec.l_pos, spec.include_input, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input() {
        let e = positional_encode(Vec3::ZERO, &FrequencyEncodingSpec::default());
        assert_eq!(e.len(), 63);
        assert!(e[..3].iter().all(|&x| x == 0.0));
        for l in 0..10 {
            let base = 3 + 6 * l;
            assert!(e[base..base + 3].iter().all(|&x| x == 0.0));
            assert!(e[base + 3..base + 6].iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn identity_when_no_levels() {
        let spec = FrequencyEncodingSpec {
            l_pos: 0,
            ..FrequencyEncodingSpec::default()
        };
        let v = Vec3::new(0.1, -0.2, 0.3);
        assert_eq!(positional_encode(v, &spec), vec![0.1, -0.2, 0.3]);
        assert_eq!(spec.pos_dim(), 3);
    }

    #[test]
    fn single_level_values() {
        let spec = FrequencyEncodingSpec {
            l_pos: 1,
            ..FrequencyEncodingSpec::default()
        };
        let e = positional_encode(Vec3::X, &spec);
        assert_eq!(e.len(), 9);
        assert!(e[3].abs() < 1e-15);
        assert_eq!(e[6], -1.0);
        assert_eq!(e[7], 1.0);
    }

    #[test]
    fn dims() {
        let s = FrequencyEncodingSpec::default();
        assert_eq!(s.dir_dim(), 27);
        let no_input = FrequencyEncodingSpec {
            include_input: false,
            ..s
        };
        assert_eq!(no_input.pos_dim(), 60);
    }
}
