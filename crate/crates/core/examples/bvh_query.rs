//! Casts random rays at an icosphere and compares BVH first hits against a
//! brute-force scan of every triangle.
//!
//! ```text
//! cargo run --release --example bvh_query
//! ```

use std::time::Instant;

use meshrf::geometry::{intersect_brute_force, make_test_mesh, TestMeshKind, TestTexture};
use meshrf::sampling::RngState;
use meshrf::{Ray, Scene, Vec3};

fn main() -> meshrf::Result<()> {
    let scene = Scene::new(make_test_mesh(TestMeshKind::Icosphere(4), TestTexture::Checker(8)))?;
    println!("{} triangles", scene.mesh.faces.len());
    let mut rng = RngState::new(0, 0);
    let mut unit = || Vec3::new(rng.uniform(), rng.uniform(), rng.uniform()) * 2.0 - Vec3::ONE;
    let rays: Vec<Ray> = (0..2000)
        .map(|_| {
            let origin = unit().normalized() * 3.0;
            let target = unit() * 0.8;
            Ray::new(origin, (target - origin).normalized())
        })
        .collect();

    let start = Instant::now();
    let fast: Vec<_> = rays.iter().map(|r| scene.first_hit(r)).collect();
    let t_bvh = start.elapsed();
    let start = Instant::now();
    let slow: Vec<_> = rays.iter().map(|r| intersect_brute_force(&scene.mesh, r, 0.0, f64::INFINITY)).collect();
    let t_brute = start.elapsed();

    let mut worst = 0.0f64;
    let mut hits = 0;
    for (a, b) in fast.iter().zip(&slow) {
        match (a, b) {
            (Some(a), Some(b)) => {
                hits += 1;
                worst = worst.max((a.t_hit - b.t_hit).abs());
            }
            (None, None) => {}
            _ => panic!("hit/miss disagreement"),
        }
    }
    println!("{hits}/{} rays hit, max |dt| {worst:.2e}", rays.len());
    println!("bvh {:.1} ms, brute force {:.1} ms", t_bvh.as_secs_f64() * 1e3, t_brute.as_secs_f64() * 1e3);
    Ok(())
}
