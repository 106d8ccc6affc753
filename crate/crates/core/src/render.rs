//! Pinhole cameras, discrete volume rendering, and image files.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{alpha_at, hit_color, FieldConfig};
use crate::geometry::{Ray, Rgb, Scene, Vec3};
use crate::sampling::{uniform_inference_samples, RayBounds};
use crate::shading::LightConfig;
use crate::{Error, Result};

/// Analytic renders stop marching once transmittance drops below this.
pub const EARLY_STOP_TRANSMITTANCE: f64 = 1e-4;

/// Pinhole camera. `rotation` maps camera space to world space; the camera
/// looks down its local -Z axis with +Y up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "CameraJson", try_from = "CameraJson")]
pub struct Camera {
    pub position: Vec3,
    pub rotation: [[f64; 3]; 3],
    pub fov_y_deg: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    position: [f64; 3],
    rotation: [f64; 9],
    fov_y_deg: f64,
    width: usize,
    height: usize,
}

impl From<Camera> for CameraJson {
    fn from(c: Camera) -> Self {
        let r = c.rotation;
        CameraJson {
            position: c.position.to_array(),
            rotation: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            fov_y_deg: c.fov_y_deg,
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<CameraJson> for Camera {
    type Error = String;

    fn try_from(j: CameraJson) -> std::result::Result<Self, String> {
        let r = j.rotation;
        let cam = Camera {
            position: j.position.into(),
            rotation: [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
            fov_y_deg: j.fov_y_deg,
            width: j.width,
            height: j.height,
        };
        cam.validate().map_err(|e| e.to_string())?;
        Ok(cam)
    }
}

impl Camera {
    /// Camera at `eye` looking at `target`. If `up` is parallel to the view
    /// direction another up vector is substituted.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: usize, height: usize) -> Camera {
        let forward = (target - eye).normalized();
        let mut right = forward.cross(up);
        if right.length() < 1e-6 {
            right = forward.cross(Vec3::Z);
            if right.length() < 1e-6 {
                right = forward.cross(Vec3::X);
            }
        }
        let right = right.normalized();
        let true_up = right.cross(forward).normalized();
        let back = -forward;
        Camera {
            position: eye,
            rotation: [
                [right.x, true_up.x, back.x],
                [right.y, true_up.y, back.y],
                [right.z, true_up.z, back.z],
            ],
            fov_y_deg,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera resolution must be positive".into()));
        }
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(Error::Config(format!("fov_y_deg {} outside (0, 180)", self.fov_y_deg)));
        }
        if !self.is_orthonormal(1e-9) {
            return Err(Error::Config("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.rotation[0][j], self.rotation[1][j], self.rotation[2][j])
    }

    pub fn right(&self) -> Vec3 {
        self.column(0)
    }

    pub fn up(&self) -> Vec3 {
        self.column(1)
    }

    pub fn forward(&self) -> Vec3 {
        -self.column(2)
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (0..3).all(|i| {
            (0..3).all(|j| {
                let d = self.column(i).dot(self.column(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                (d - expected).abs() <= tol
            })
        })
    }

    /// Camera-space direction through the center of pixel `(px, py)`; row 0 is the top.
    pub fn local_direction(&self, px: usize, py: usize) -> Vec3 {
        let tan_half = (self.fov_y_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let x = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * tan_half * aspect;
        let y = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * tan_half;
        Vec3::new(x, y, -1.0)
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

/// Ray through the center of pixel `(px, py)`.
pub fn pixel_ray(camera: &Camera, px: usize, py: usize) -> Ray {
    Ray::new(camera.position, camera.to_world(camera.local_direction(px, py)))
}

/// Row-major RGB image with channels clamped to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, c: Rgb) -> Self {
        let mut img = ImageBuffer::new(width, height);
        for p in &mut img.pixels {
            *p = clamp_rgb(c);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let p = self.pixels[y * self.width + x];
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = clamp_rgb(c);
    }

    /// Fills the image in parallel; `f(x, y)` is called once per pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Rgb + Sync) -> Self {
        let mut pixels = vec![[0.0f32; 3]; width * height];
        pixels.par_chunks_mut(width.max(1)).enumerate().for_each(|(y, row)| {
            for (x, p) in row.iter_mut().enumerate() {
                *p = clamp_rgb(f(x, y));
            }
        });
        ImageBuffer { width, height, pixels }
    }

    /// Channel-wise mean absolute difference.
    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> f64 {
        let n = (self.pixels.len() * 3) as f64;
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (0..3).map(|c| (a[c] as f64 - b[c] as f64).abs()).sum::<f64>())
            .sum::<f64>()
            / n
    }
}

fn clamp_rgb(c: Rgb) -> [f32; 3] {
    let c = c.clamp(0.0, 1.0);
    [c.x as f32, c.y as f32, c.z as f32]
}

fn check_len(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { what, left, right });
    }
    Ok(())
}

/// `Σ Tᵢ αᵢ cᵢ` with `Tᵢ = Π_{j<i} (1 − αⱼ)`.
pub fn composite_alpha(alphas: &[f64], colors: &[Rgb]) -> Result<Rgb> {
    composite_alpha_over(alphas, colors, Vec3::ZERO)
}

/// [`composite_alpha`] plus the residual transmittance times `background`.
pub fn composite_alpha_over(alphas: &[f64], colors: &[Rgb], background: Rgb) -> Result<Rgb> {
    check_len("alphas vs colors", alphas.len(), colors.len())?;
    let mut transmittance = 1.0;
    let mut acc = Vec3::ZERO;
    for (&a, &c) in alphas.iter().zip(colors) {
        acc += c * (transmittance * a);
        transmittance *= 1.0 - a;
    }
    Ok(acc + background * transmittance)
}

/// Density form: `Σ Tᵢ (1 − exp(−σᵢδᵢ)) cᵢ` with `Tᵢ = exp(−Σ_{j<i} σⱼδⱼ)`.
pub fn composite_density(sigmas: &[f64], deltas: &[f64], colors: &[Rgb]) -> Result<Rgb> {
    check_len("sigmas vs deltas", sigmas.len(), deltas.len())?;
    check_len("sigmas vs colors", sigmas.len(), colors.len())?;
    if let Some(&s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::NegativeDensity(s));
    }
    let mut optical_depth = 0.0f64;
    let mut acc = Vec3::ZERO;
    for ((&s, &d), &c) in sigmas.iter().zip(deltas).zip(colors) {
        let t = (-optical_depth).exp();
        acc += c * (t * -(-s * d).exp_m1());
        optical_depth += s * d;
    }
    Ok(acc)
}

/// Background-or-march for one pixel of the analytic field.
pub fn render_analytic_ray(
    scene: &Scene,
    light: &LightConfig,
    config: &FieldConfig,
    ray: &Ray,
    n_samples: usize,
    bounds: RayBounds,
) -> Rgb {
    let Some((t_near, t_far)) = bounds.interval(ray) else {
        return config.background;
    };
    let Some(hit) = scene.first_hit(ray) else {
        return config.background;
    };
    let color = hit_color(scene, light, ray, &hit);
    let mut transmittance = 1.0;
    let mut acc = Vec3::ZERO;
    for t in uniform_inference_samples(t_near, t_far, n_samples) {
        let a = alpha_at(t, Some(hit.t_hit), config.half_thickness);
        acc += color * (transmittance * a);
        transmittance *= 1.0 - a;
        if transmittance < EARLY_STOP_TRANSMITTANCE {
            break;
        }
    }
    acc + config.background * transmittance
}

/// Volume render of the analytic field with `n_samples` uniform samples per pixel.
pub fn render_analytic(
    scene: &Scene,
    light: &LightConfig,
    config: &FieldConfig,
    camera: &Camera,
    n_samples: usize,
) -> ImageBuffer {
    ImageBuffer::from_fn(camera.width, camera.height, |x, y| {
        render_analytic_ray(scene, light, config, &pixel_ray(camera, x, y), n_samples, RayBounds::SceneCube)
    })
}

/// Direct ray trace with the same shading: first-hit color or background.
pub fn render_reference(scene: &Scene, light: &LightConfig, background: Rgb, camera: &Camera) -> ImageBuffer {
    ImageBuffer::from_fn(camera.width, camera.height, |x, y| {
        let ray = pixel_ray(camera, x, y);
        match scene.first_hit(&ray) {
            Some(hit) => hit_color(scene, light, &ray, &hit),
            None => background,
        }
    })
}

/// A learned field that can be marched along a ray for display.
pub trait RenderField: Sync {
    /// Composited color of `ray` sampled at uniform `ts` with spacing `delta`.
    fn render_ray(&self, ray: &Ray, ts: &[f64], delta: f64, background: Rgb) -> Rgb;
}

/// Volume render of a learned field with `n_samples` uniform samples per pixel.
pub fn render_field(model: &dyn RenderField, camera: &Camera, n_samples: usize, background: Rgb) -> ImageBuffer {
    ImageBuffer::from_fn(camera.width, camera.height, |x, y| {
        let ray = pixel_ray(camera, x, y);
        match RayBounds::SceneCube.interval(&ray) {
            Some((t_near, t_far)) => {
                let ts = uniform_inference_samples(t_near, t_far, n_samples);
                model.render_ray(&ray, &ts, (t_far - t_near) / n_samples as f64, background)
            }
            None => background,
        }
    })
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 8-bit PNG, or binary PPM (P6) when the extension is `.ppm`.
pub fn write_image(buffer: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = buffer.pixels.iter().flat_map(|p| p.map(quantize)).collect();
    if has_extension(path, "ppm") {
        let mut out = format!("P6\n{} {}\n255\n", buffer.width, buffer.height).into_bytes();
        out.extend_from_slice(&bytes);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    image::save_buffer_with_format(
        path,
        &bytes,
        buffer.width as u32,
        buffer.height as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Reads a PNG (any 8-bit color type; alpha dropped) or a P6 PPM.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, bytes) = if data.starts_with(b"P6") {
        parse_ppm(&data).map_err(|msg| Error::Format { what: "PPM", msg })?
    } else {
        let img = image::load_from_memory_with_format(&data, image::ImageFormat::Png)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        (w as usize, h as usize, img.into_raw())
    };
    let pixels = bytes
        .chunks_exact(3)
        .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
        .collect();
    Ok(ImageBuffer { width, height, pixels })
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn parse_ppm(data: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    // Header: magic, width, height, maxval, each separated by whitespace (comments allowed).
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < data.len() && (data[i].is_ascii_whitespace() || data[i] == b'#') {
            if data[i] == b'#' {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&data[start..i]).into_owned());
    }
    i += 1;
    let w: usize = fields[1].parse().map_err(|_| "bad width")?;
    let h: usize = fields[2].parse().map_err(|_| "bad height")?;
    if fields[3] != "255" {
        return Err(format!("unsupported maxval {}", fields[3]));
    }
    let need = w * h * 3;
    if data.len() < i + need {
        return Err(format!("expected {need} pixel bytes, found {}", data.len().saturating_sub(i)));
    }
    Ok((w, h, data[i..i + need].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_test_mesh, TestMeshKind, TestTexture};
    use crate::sampling::RngState;
    use proptest::prelude::*;

    fn front_camera(size: usize) -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y, 50.0, size, size)
    }

    #[test]
    fn center_pixel_looks_forward() {
        let cam = Camera::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 0.5, 0.0), Vec3::Y, 40.0, 9, 7);
        let r = pixel_ray(&cam, 4, 3);
        assert!((r.direction - cam.forward()).length() < 1e-12);
    }

    #[test]
    fn corner_pixels_of_square_ninety_degree_view() {
        // Pixel centers sit half a pixel inside the ±45° frustum edge: tan θ = (H - 1) / H.
        let h = 64;
        let cam = Camera::look_at(Vec3::ZERO, -Vec3::Z, Vec3::Y, 90.0, h, h);
        let expected = ((h as f64 - 1.0) / h as f64).atan();
        for (px, py, sign) in [(0, 0, 1.0), (h - 1, h - 1, -1.0)] {
            let d = pixel_ray(&cam, px, py).direction;
            let vertical = d.y.atan2(-d.z);
            assert!((vertical - sign * expected).abs() < 1e-12);
        }
        assert!((expected.to_degrees() - 45.0).abs() < 0.5);
    }

    #[test]
    fn pixel_rays_unit_length() {
        let cam = Camera::look_at(Vec3::new(0.3, 2.0, -2.0), Vec3::ZERO, Vec3::Y, 65.0, 17, 11);
        for y in 0..11 {
            for x in 0..17 {
                assert!((pixel_ray(&cam, x, y).direction.length() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn camera_json_layout() {
        let cam = front_camera(4);
        let v: serde_json::Value = serde_json::to_value(cam).unwrap();
        assert_eq!(v["rotation"].as_array().unwrap().len(), 9);
        assert_eq!(v["position"], serde_json::json!([0.0, 0.0, 3.0]));
        assert_eq!(v["width"], 4);
        let back: Camera = serde_json::from_value(v).unwrap();
        assert_eq!(back, cam);
        let bad = serde_json::json!({"position": [0,0,0], "rotation": [2,0,0,0,1,0,0,0,1], "fov_y_deg": 50, "width": 2, "height": 2});
        assert!(serde_json::from_value::<Camera>(bad).is_err());
    }

    #[test]
    fn composite_examples() {
        let c = composite_alpha(&[1.0], &[Vec3::new(0.3, 0.4, 0.5)]).unwrap();
        assert_eq!(c, Vec3::new(0.3, 0.4, 0.5));
        let c = composite_alpha(&[0.5, 0.5], &[Vec3::X, Vec3::Y]).unwrap();
        assert_eq!(c, Vec3::new(0.5, 0.25, 0.0));
        assert_eq!(composite_alpha(&[0.0; 4], &[Vec3::ONE; 4]).unwrap(), Vec3::ZERO);
        assert!(matches!(composite_alpha(&[0.5], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn density_examples() {
        assert_eq!(composite_density(&[0.0; 3], &[0.1; 3], &[Vec3::ONE; 3]).unwrap(), Vec3::ZERO);
        let c = composite_density(&[2f64.ln()], &[1.0], &[Vec3::ONE]).unwrap();
        assert!((c - Vec3::splat(0.5)).length() < 1e-15);
        assert!(matches!(
            composite_density(&[-1.0], &[1.0], &[Vec3::ONE]),
            Err(Error::NegativeDensity(_))
        ));
        assert!(composite_density(&[1.0], &[1.0, 2.0], &[Vec3::ONE]).is_err());
    }

    #[test]
    fn density_form_bridges_alpha_form_on_random_ray() {
        let mut r = RngState::new(3, 0);
        let sigmas: Vec<f64> = (0..16).map(|_| r.uniform() * 5.0).collect();
        let deltas: Vec<f64> = (0..16).map(|_| 0.01 + r.uniform() * 0.3).collect();
        let colors: Vec<Rgb> = (0..16).map(|_| Vec3::new(r.uniform(), r.uniform(), r.uniform())).collect();
        let alphas: Vec<f64> = sigmas.iter().zip(&deltas).map(|(s, d)| 1.0 - (-s * d).exp()).collect();
        let a = composite_density(&sigmas, &deltas, &colors).unwrap();
        let b = composite_alpha(&alphas, &colors).unwrap();
        assert!((a - b).length() < 1e-12);
    }

    proptest! {
        #[test]
        fn transmittance_and_energy(alphas in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let white = vec![Vec3::ONE; alphas.len()];
            let c = composite_alpha(&alphas, &white).unwrap();
            let expected = 1.0 - alphas.iter().map(|a| 1.0 - a).product::<f64>();
            prop_assert!((c.x - expected).abs() < 1e-12);
            prop_assert!(c.x <= 1.0 + 1e-15);
        }

        #[test]
        fn opaque_sample_stops_contributions(
            before in proptest::collection::vec(0.0f64..1.0, 0..10),
            after in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..10),
        ) {
            let mut alphas = before.clone();
            alphas.push(1.0);
            let mut colors = vec![Vec3::splat(0.3); alphas.len()];
            let base = composite_alpha(&alphas, &colors).unwrap();
            for (a, c) in &after {
                alphas.push(*a);
                colors.push(Vec3::splat(*c));
            }
            prop_assert_eq!(composite_alpha(&alphas, &colors).unwrap(), base);
        }
    }

    #[test]
    fn image_rgb_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ImageBuffer::new(1, 1);
        img.set(0, 0, Vec3::X);
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_image(&img, &p).unwrap();
            assert_eq!(read_image(&p).unwrap(), img);
        }
        let grad = ImageBuffer::from_fn(37, 5, |x, y| Vec3::new(x as f64 / 36.0, y as f64 / 4.0, 0.123456));
        for name in ["g.png", "g.ppm"] {
            let p = dir.path().join(name);
            write_image(&grad, &p).unwrap();
            let back = read_image(&p).unwrap();
            for (a, b) in grad.pixels().iter().zip(back.pixels()) {
                for c in 0..3 {
                    assert!(((a[c] - b[c]).abs() as f64) <= 1.0 / 255.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn truncated_files_fail_to_read() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::filled(16, 16, Vec3::splat(0.5));
        let p = dir.path().join("t.png");
        write_image(&img, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(read_image(&p).is_err());
        let q = dir.path().join("t.ppm");
        write_image(&img, &q).unwrap();
        let bytes = fs::read(&q).unwrap();
        fs::write(&q, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_image(&q), Err(Error::Format { .. })));
    }

    #[test]
    fn analytic_center_pixel_is_front_face_phong() {
        let scene = Scene::new(make_test_mesh(TestMeshKind::Cube, TestTexture::Constant([0.6, 0.3, 0.2]))).unwrap();
        let light = LightConfig::default();
        let cfg = FieldConfig::default();
        let cam = front_camera(33);
        let img = render_analytic(&scene, &light, &cfg, &cam, 800);
        // Single-ray oracle: center ray hits z = 1 at (0, 0, 1), normal +z, view +z.
        let base = Vec3::new(0.6, 0.3, 0.2);
        let expected = crate::shading::phong_color(base, Vec3::Z, Vec3::Z, Vec3::Z, &light);
        let got = img.get(16, 16);
        let stored = clamp_rgb(expected);
        assert_eq!(img.pixels()[16 * 33 + 16], stored);
        assert!((got - expected).length() < 1e-6);
    }

    #[test]
    fn empty_scene_is_background() {
        // A tiny triangle far outside the view stands in for an empty scene.
        let mut mesh = make_test_mesh(TestMeshKind::Cube, TestTexture::Checker(2));
        for v in &mut mesh.vertices {
            *v = *v * 0.01 + Vec3::new(0.0, 0.0, -50.0);
        }
        let scene = Scene::new(mesh).unwrap();
        let cfg = FieldConfig {
            background: Vec3::new(0.1, 0.7, 0.2),
            ..FieldConfig::default()
        };
        let img = render_analytic(&scene, &LightConfig::default(), &cfg, &front_camera(12), 64);
        assert_eq!(img, ImageBuffer::filled(12, 12, cfg.background));
    }

    #[test]
    fn analytic_converges_under_refinement() {
        let scene = Scene::new(make_test_mesh(TestMeshKind::Icosphere(3), TestTexture::Checker(4))).unwrap();
        let cam = Camera::look_at(Vec3::new(1.5, 1.2, 2.0), Vec3::ZERO, Vec3::Y, 50.0, 48, 48);
        let light = LightConfig::default();
        let cfg = FieldConfig::default();
        // 800 samples over a ≤ 2√3 interval gives spacing < h.
        let a = render_analytic(&scene, &light, &cfg, &cam, 800);
        let b = render_analytic(&scene, &light, &cfg, &cam, 1600);
        assert!(a.mean_abs_diff(&b) < 1e-3);
    }
}
