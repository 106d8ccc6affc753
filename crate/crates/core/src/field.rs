//! The ground-truth radiance field of a textured mesh.
//!
//! Along a ray, alpha is an occupancy indicator: 1 for samples within `h`
//! (in ray parameter) of the first surface hit, 0 everywhere else. Every
//! sample of a hit ray carries the Phong color of that first hit, so the
//! composite of any sampling that puts at least one sample in the band
//! collapses to exactly that color.

use serde::{Deserialize, Serialize};

use crate::geometry::{HitRecord, Ray, Rgb, Scene, Vec3};
use crate::render::composite_alpha_over;
use crate::shading::{phong_color, LightConfig};
use crate::{Error, Result};

pub const DEFAULT_HALF_THICKNESS: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// Half the surface thickness, in scene units.
    pub half_thickness: f64,
    pub background: Rgb,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            half_thickness: DEFAULT_HALF_THICKNESS,
            background: Vec3::ZERO,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_thickness > 0.0 && self.half_thickness.is_finite()) {
            return Err(Error::Config(format!(
                "half thickness must be > 0, got {}",
                self.half_thickness
            )));
        }
        if self.half_thickness > 0.1 {
            log::warn!(
                "half thickness {} is large relative to the [-1, 1] scene",
                self.half_thickness
            );
        }
        let bg = self.background;
        if !(bg.is_finite() && bg.x >= 0.0 && bg.y >= 0.0 && bg.z >= 0.0 && bg.max_element() <= 1.0) {
            return Err(Error::Config("background must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthSample {
    pub t: f64,
    pub delta: f64,
    pub alpha: f64,
    pub color: Rgb,
    pub in_band: bool,
}

/// Occupancy alpha: 1 iff the ray has a first hit and `|t - t_hit| < h`.
#[inline]
pub fn alpha_at(t: f64, t_hit: Option<f64>, h: f64) -> f64 {
    match t_hit {
        Some(th) if (t - th).abs() < h => 1.0,
        _ => 0.0,
    }
}

/// Spacing to the next sample; the last sample gets `last_delta`.
pub fn deltas(ts: &[f64], last_delta: f64) -> Vec<f64> {
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if !ts.is_empty() {
        d.push(last_delta);
    }
    d
}

/// Shaded color of a hit seen along `ray`.
pub fn hit_color(scene: &Scene, light: &LightConfig, ray: &Ray, hit: &HitRecord) -> Rgb {
    let base = scene.mesh.material.base_color(hit.uv);
    phong_color(base, hit.position, hit.normal, -ray.direction, light)
}

/// Ground truth for sorted ray parameters `ts` given an already-computed first
/// hit. `last_delta` is the spacing assigned to the final sample.
pub fn ground_truth_for_hit(
    scene: &Scene,
    light: &LightConfig,
    ray: &Ray,
    hit: Option<&HitRecord>,
    ts: &[f64],
    last_delta: f64,
    config: &FieldConfig,
) -> Vec<GroundTruthSample> {
    let color = hit.map_or(config.background, |h| hit_color(scene, light, ray, h));
    let t_hit = hit.map(|h| h.t_hit);
    ts.iter()
        .zip(deltas(ts, last_delta))
        .map(|(&t, delta)| {
            let alpha = alpha_at(t, t_hit, config.half_thickness);
            GroundTruthSample {
                t,
                delta,
                alpha,
                color,
                in_band: alpha == 1.0,
            }
        })
        .collect()
}

/// Per-sample ground truth along `ray`. `t_span` is the sampled interval
/// `(t_near, t_far)`; the final sample's spacing is `(t_far - t_near) / N`.
pub fn ray_ground_truth(
    scene: &Scene,
    light: &LightConfig,
    ray: &Ray,
    ts: &[f64],
    t_span: (f64, f64),
    config: &FieldConfig,
) -> Vec<GroundTruthSample> {
    let hit = scene.first_hit(ray);
    let last = if ts.is_empty() {
        0.0
    } else {
        (t_span.1 - t_span.0) / ts.len() as f64
    };
    ground_truth_for_hit(scene, light, ray, hit.as_ref(), ts, last, config)
}

/// Alpha-composited color of the ground-truth samples over `background`.
pub fn analytic_integral_color(samples: &[GroundTruthSample], background: Rgb) -> Rgb {
    let alphas: Vec<f64> = samples.iter().map(|s| s.alpha).collect();
    let colors: Vec<Rgb> = samples.iter().map(|s| s.color).collect();
    composite_alpha_over(&alphas, &colors, background).expect("equal lengths by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{intersect_brute_force, make_test_mesh, TestMeshKind, TestTexture};
    use crate::sampling::{sample_ray_train, RngState, SamplingConfig};

    fn gt(alpha: f64, color: Rgb) -> GroundTruthSample {
        GroundTruthSample {
            t: 0.0,
            delta: 0.1,
            alpha,
            color,
            in_band: alpha == 1.0,
        }
    }

    #[test]
    fn alpha_band_edges() {
        let h = 0.005;
        assert_eq!(alpha_at(2.0, Some(2.0), h), 1.0);
        assert_eq!(alpha_at(2.0049, Some(2.0), h), 1.0);
        assert_eq!(alpha_at(2.0051, Some(2.0), h), 0.0);
        assert_eq!(alpha_at(1.9951, Some(2.0), h), 1.0);
        for t in [0.0, 1.0, 2.0, 3.0] {
            assert_eq!(alpha_at(t, None, h), 0.0);
        }
    }

    #[test]
    fn integral_collapses_to_first_opaque() {
        let c = Vec3::new(0.3, 0.6, 0.1);
        assert_eq!(analytic_integral_color(&[gt(0.0, c), gt(1.0, c), gt(0.0, c)], Vec3::ZERO), c);
        assert_eq!(analytic_integral_color(&[gt(0.0, c), gt(1.0, c), gt(1.0, c)], Vec3::ZERO), c);
        let bg = Vec3::new(0.1, 0.2, 0.3);
        assert_eq!(analytic_integral_color(&[gt(0.0, c), gt(0.0, c)], bg), bg);
        assert_eq!(analytic_integral_color(&[gt(0.0, c), gt(0.0, c)], Vec3::ZERO), Vec3::ZERO);
    }

    #[test]
    fn miss_ray_is_background() {
        let scene = Scene::new(make_test_mesh(TestMeshKind::Cube, TestTexture::Checker(2))).unwrap();
        let cfg = FieldConfig {
            background: Vec3::new(0.2, 0.3, 0.4),
            ..FieldConfig::default()
        };
        let ray = Ray::new(Vec3::new(0.0, 3.0, -3.0), Vec3::Z);
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let s = ray_ground_truth(&scene, &LightConfig::default(), &ray, &ts, (0.0, 5.0), &cfg);
        assert!(s.iter().all(|x| x.alpha == 0.0 && x.color == cfg.background && !x.in_band));
        assert_eq!(analytic_integral_color(&s, cfg.background), cfg.background);
    }

    #[test]
    fn hit_ray_band_matches_brute_force() {
        let scene = Scene::new(make_test_mesh(TestMeshKind::Icosphere(2), TestTexture::Checker(4))).unwrap();
        let light = LightConfig::default();
        let cfg = FieldConfig::default();
        let ray = Ray::new(Vec3::new(0.2, 0.1, -3.0), Vec3::new(0.0, 0.05, 1.0));
        let oracle = intersect_brute_force(&scene.mesh, &ray, 0.0, f64::INFINITY).unwrap();
        let ts = sample_ray_train(&ray, Some(&oracle), cfg.half_thickness, &SamplingConfig::default(), &mut RngState::new(1, 1));
        let s = ray_ground_truth(&scene, &light, &ray, &ts, (ts[0], *ts.last().unwrap()), &cfg);
        let expected_color = hit_color(&scene, &light, &ray, &oracle);
        for x in &s {
            let inside = (x.t - oracle.t_hit).abs() < cfg.half_thickness;
            assert_eq!(x.alpha == 1.0, inside);
            assert_eq!(x.in_band, inside);
            assert_eq!(x.color, expected_color);
        }
        assert!(s.iter().filter(|x| x.in_band).count() >= 512);
        assert!(s.windows(2).all(|w| w[0].delta > 0.0 && (w[0].t + w[0].delta - w[1].t).abs() < 1e-12));
        assert_eq!(analytic_integral_color(&s, cfg.background), expected_color);
    }

    #[test]
    fn two_planes_front_color_everywhere() {
        let scene = Scene::new(make_test_mesh(TestMeshKind::TwoPlanes, TestTexture::Checker(3))).unwrap();
        let light = LightConfig::default();
        let cfg = FieldConfig::default();
        let ray = Ray::new(Vec3::new(0.1, 0.2, 3.0), -Vec3::Z);
        let front = intersect_brute_force(&scene.mesh, &ray, 0.0, f64::INFINITY).unwrap();
        assert!((front.position.z - 0.5).abs() < 1e-12);
        let back_ray = Ray::new(front.position + ray.direction * 0.01, ray.direction);
        let back = intersect_brute_force(&scene.mesh, &back_ray, 0.0, f64::INFINITY).unwrap();
        assert!((back.position.z + 0.5).abs() < 1e-12);
        let t_back = front.t_hit + 0.01 + back.t_hit;
        // Dense samples around both planes.
        let mut ts: Vec<f64> = (0..400).map(|i| front.t_hit - 0.02 + i as f64 * 0.0001).collect();
        ts.extend((0..400).map(|i| t_back - 0.02 + i as f64 * 0.0001));
        let s = ray_ground_truth(&scene, &light, &ray, &ts, (ts[0], *ts.last().unwrap()), &cfg);
        let front_color = hit_color(&scene, &light, &ray, &front);
        let back_color = hit_color(&scene, &light, &back_ray, &back);
        assert_ne!(front_color, back_color);
        assert!(s.iter().all(|x| x.color == front_color));
        // Only the front band is opaque.
        assert!(s.iter().filter(|x| (x.t - t_back).abs() < 0.005).all(|x| x.alpha == 0.0));
    }
}
