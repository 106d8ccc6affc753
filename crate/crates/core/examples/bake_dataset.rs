//! Bakes per-sample supervision for a checkered icosphere, writes it to disk
//! and reads it back.
//!
//! ```text
//! cargo run --release --example bake_dataset -- [out.m2nf]
//! ```

use meshrf::field::FieldConfig;
use meshrf::geometry::{make_test_mesh, TestMeshKind, TestTexture};
use meshrf::sampling::{cameras_on_sphere, SamplingConfig};
use meshrf::shading::LightConfig;
use meshrf::supervision::{bake_dataset, read_dataset, write_dataset};
use meshrf::{Scene, Vec3};

fn main() -> meshrf::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "icosphere.m2nf".into());
    let scene = Scene::new(make_test_mesh(TestMeshKind::Icosphere(3), TestTexture::Checker(8)))?;
    let cameras = cameras_on_sphere(30, 3.0, Vec3::ZERO, 50.0, (128, 128), 0);
    let sampling = SamplingConfig {
        n_stratified: 64,
        n_band: 64,
        ..SamplingConfig::default()
    };
    let (ds, stats) = bake_dataset(&scene, &LightConfig::default(), &cameras, 1024, &sampling, &FieldConfig::default())?;
    println!("{} rays, {:.1}% hit the mesh", stats.rays, 100.0 * stats.hit_fraction());
    println!(
        "in-band samples per hit ray: min {:?}, mean {:.1}",
        stats.min_in_band_on_hits, stats.mean_in_band_on_hits
    );

    let ray = ds.rays.iter().find(|r| r.in_band.iter().any(|&b| b)).expect("some ray hits");
    let first = ray.in_band.iter().position(|&b| b).unwrap();
    println!(
        "first in-band sample of a hit ray: t = {:.4}, color {:?}, integral {:?}",
        ray.ts[first], ray.gt_color[first], ray.gt_integral
    );

    write_dataset(&ds, &path)?;
    let back = read_dataset(&path)?;
    assert_eq!(back, ds);
    println!("wrote and re-read {path}");
    Ok(())
}
