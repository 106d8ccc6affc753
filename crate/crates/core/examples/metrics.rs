//! PSNR and SSIM of progressively noisier copies of a rendered image.
//!
//! ```text
//! cargo run --release --example metrics
//! ```

use meshrf::field::FieldConfig;
use meshrf::geometry::{make_test_mesh, TestMeshKind, TestTexture};
use meshrf::metrics::{psnr, ssim};
use meshrf::render::{render_reference, Camera, ImageBuffer};
use meshrf::sampling::RngState;
use meshrf::shading::LightConfig;
use meshrf::{Scene, Vec3};

fn main() -> meshrf::Result<()> {
    let scene = Scene::new(make_test_mesh(TestMeshKind::Icosphere(3), TestTexture::Checker(8)))?;
    let camera = Camera::look_at(Vec3::new(0.0, 1.0, 3.0), Vec3::ZERO, Vec3::Y, 50.0, 128, 128);
    let clean = render_reference(&scene, &LightConfig::default(), FieldConfig::default().background, &camera);
    println!("{:>9} {:>8} {:>8}", "noise", "psnr", "ssim");
    for amp in [0.0, 0.01, 0.03, 0.1, 0.3] {
        let mut rng = RngState::new(1, 0);
        let mut noisy = ImageBuffer::new(128, 128);
        for y in 0..128 {
            for x in 0..128 {
                let n = Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()) * 2.0 - Vec3::ONE;
                noisy.set(x, y, clean.get(x, y) + n * amp);
            }
        }
        println!("{amp:>9.2} {:>8.2} {:>8.4}", psnr(&noisy, &clean)?, ssim(&noisy, &clean)?);
    }
    Ok(())
}
