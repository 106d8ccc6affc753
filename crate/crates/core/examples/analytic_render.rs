//! Volume-renders the analytic radiance field of the built-in scenes and
//! checks each against a direct ray trace with the same shading.
//!
//! ```text
//! cargo run --release --example analytic_render -- [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use meshrf::field::FieldConfig;
use meshrf::geometry::{make_test_mesh, TestMeshKind, TestTexture};
use meshrf::metrics::{psnr, ssim};
use meshrf::render::{render_analytic, render_reference, write_image, Camera};
use meshrf::shading::LightConfig;
use meshrf::{Scene, Vec3};

fn main() -> meshrf::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "analytic_render".into()));
    std::fs::create_dir_all(&out).map_err(|e| meshrf::Error::Config(e.to_string()))?;
    let light = LightConfig::default();
    let field = FieldConfig::default();
    let camera = Camera::look_at(Vec3::new(2.2, 1.6, 2.4), Vec3::ZERO, Vec3::Y, 45.0, 256, 256);
    let scenes = [
        ("cube", TestMeshKind::Cube),
        ("icosphere", TestMeshKind::Icosphere(3)),
        ("two_planes", TestMeshKind::TwoPlanes),
    ];
    for (name, kind) in scenes {
        let scene = Scene::new(make_test_mesh(kind, TestTexture::Checker(8)))?;
        let start = Instant::now();
        let volume = render_analytic(&scene, &light, &field, &camera, 800);
        let elapsed = start.elapsed();
        let traced = render_reference(&scene, &light, field.background, &camera);
        write_image(&volume, out.join(format!("{name}_volume.png")))?;
        write_image(&traced, out.join(format!("{name}_traced.png")))?;
        println!(
            "{name:<11} {:6.2}s  psnr {:6.2}  ssim {:.4}",
            elapsed.as_secs_f64(),
            psnr(&volume, &traced)?,
            ssim(&volume, &traced)?
        );
    }
    Ok(())
}
