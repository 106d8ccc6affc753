//! Phong reflection at a surface point.
//!
//! A single point light with ambient, diffuse and specular RGB coefficients.
//! No shadows and no distance attenuation. The specular lobe is the classic
//! reflection-vector form and vanishes whenever the light is behind the
//! surface. The result is clamped to [0, 1].

use serde::{Deserialize, Serialize};

use crate::geometry::{Rgb, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightConfig {
    pub light_position: Vec3,
    pub ambient: Rgb,
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub shininess: f64,
}

impl Default for LightConfig {
    fn default() -> Self {
        LightConfig {
            light_position: Vec3::new(0.0, 1.0, 0.0),
            ambient: Vec3::splat(0.8),
            diffuse: Vec3::splat(0.3),
            specular: Vec3::splat(0.2),
            shininess: 32.0,
        }
    }
}

impl LightConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: Rgb| c.is_finite() && c.x >= 0.0 && c.y >= 0.0 && c.z >= 0.0;
        if !(self.shininess > 0.0 && self.shininess.is_finite()) {
            return Err(Error::Config(format!("shininess must be > 0, got {}", self.shininess)));
        }
        if !(ok(self.ambient) && ok(self.diffuse) && ok(self.specular)) {
            return Err(Error::Config("light coefficients must be finite and >= 0".into()));
        }
        if !self.light_position.is_finite() {
            return Err(Error::Config("light position must be finite".into()));
        }
        Ok(())
    }
}

/// Unclamped Phong sum.
pub fn phong_unclamped(base: Rgb, position: Vec3, normal: Vec3, view_dir: Vec3, light: &LightConfig) -> Rgb {
    let to_light = light.light_position - position;
    let l = if to_light.length_squared() > 0.0 {
        to_light.normalized()
    } else {
        normal
    };
    let n_dot_l = normal.dot(l);
    let mut color = base.hadamard(light.ambient);
    if n_dot_l > 0.0 {
        color += base.hadamard(light.diffuse) * n_dot_l;
        let r = (-l).reflect(normal);
        let r_dot_v = r.dot(view_dir).max(0.0);
        if r_dot_v > 0.0 {
            color += light.specular * r_dot_v.powf(light.shininess);
        }
    }
    color
}

/// Phong color seen from `view_dir` (unit, from the surface toward the eye).
pub fn phong_color(base: Rgb, position: Vec3, normal: Vec3, view_dir: Vec3, light: &LightConfig) -> Rgb {
    phong_unclamped(base, position, normal, view_dir, light).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
        // Rodrigues.
        let k = axis.normalized();
        v * angle.cos() + k.cross(v) * angle.sin() + k * (k.dot(v) * (1.0 - angle.cos()))
    }

    #[test]
    fn head_on_saturates() {
        let light = LightConfig {
            light_position: Vec3::new(0.0, 0.0, 5.0),
            ..LightConfig::default()
        };
        let n = Vec3::Z;
        let raw = phong_unclamped(Vec3::ONE, Vec3::ZERO, n, n, &light);
        assert!((raw - Vec3::splat(1.3)).length() < 1e-12);
        assert_eq!(phong_color(Vec3::ONE, Vec3::ZERO, n, n, &light), Vec3::ONE);
    }

    #[test]
    fn light_behind_gives_ambient_only() {
        let light = LightConfig {
            light_position: Vec3::new(0.0, 0.0, -5.0),
            ..LightConfig::default()
        };
        let base = Vec3::new(0.3, 0.6, 0.9);
        let c = phong_color(base, Vec3::ZERO, Vec3::Z, Vec3::Z, &light);
        assert_eq!(c, base.hadamard(light.ambient));
    }

    #[test]
    fn black_base_is_specular_only() {
        // Light along (1,0,1)/√2, view along (-1,0,1)/√2: perfect mirror, r·v = 1.
        let light = LightConfig {
            light_position: Vec3::new(2.0, 0.0, 2.0),
            ..LightConfig::default()
        };
        let v = Vec3::new(-1.0, 0.0, 1.0).normalized();
        let c = phong_color(Vec3::ZERO, Vec3::ZERO, Vec3::Z, v, &light);
        assert!((c - Vec3::splat(0.2)).length() < 1e-12);
        // View straight up: r·v = cos 45°, specular = 0.2 · (√2/2)^32.
        let c = phong_color(Vec3::ZERO, Vec3::ZERO, Vec3::Z, Vec3::Z, &light);
        let expected = 0.2 * (0.5f64.sqrt()).powi(32);
        assert!((c.x - expected).abs() < 1e-15);
    }

    #[test]
    fn defaults_match_reference_lighting() {
        let l = LightConfig::default();
        assert_eq!(l.light_position, Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(l.ambient, Vec3::splat(0.8));
        assert_eq!(l.diffuse, Vec3::splat(0.3));
        assert_eq!(l.specular, Vec3::splat(0.2));
        assert_eq!(l.shininess, 32.0);
        l.validate().unwrap();
        assert!(LightConfig { shininess: 0.0, ..l }.validate().is_err());
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalized())
    }

    proptest! {
        #[test]
        fn output_in_unit_range(base in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), n in unit(), v in unit(),
                                 lp in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0)) {
            let light = LightConfig { light_position: Vec3::new(lp.0, lp.1, lp.2), ..LightConfig::default() };
            let c = phong_color(Vec3::new(base.0, base.1, base.2), Vec3::ZERO, n, v, &light);
            for ch in c.to_array() {
                prop_assert!((0.0..=1.0).contains(&ch));
            }
        }

        #[test]
        fn rotation_equivariant(n in unit(), v in unit(), axis in unit(), angle in 0.0f64..6.28,
                                p in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
            let light = LightConfig { light_position: Vec3::new(0.3, 2.0, -0.7), ..LightConfig::default() };
            let base = Vec3::new(0.5, 0.4, 0.3);
            let p = Vec3::new(p.0, p.1, p.2);
            let a = phong_color(base, p, n, v, &light);
            let rl = LightConfig { light_position: rotate(light.light_position, axis, angle), ..light };
            let b = phong_color(base, rotate(p, axis, angle), rotate(n, axis, angle), rotate(v, axis, angle), &rl);
            prop_assert!((a - b).length() < 1e-9);
        }

        #[test]
        fn diffuse_monotone(n in unit(), v in unit(), k in 0.0f64..1.0, dk in 0.0f64..1.0) {
            let base = Vec3::new(0.7, 0.2, 0.5);
            let lo = LightConfig { light_position: Vec3::new(1.0, 2.0, 0.5), diffuse: Vec3::splat(k), ..LightConfig::default() };
            let hi = LightConfig { diffuse: Vec3::new(k + dk, k, k), ..lo };
            let a = phong_unclamped(base, Vec3::ZERO, n, v, &lo);
            let b = phong_unclamped(base, Vec3::ZERO, n, v, &hi);
            prop_assert!(b.x >= a.x);
        }
    }
}
