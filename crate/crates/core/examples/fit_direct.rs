//! Fits a feature-grid field to baked per-sample supervision of a checkered
//! icosphere and scores it on held-out views.
//!
//! ```text
//! cargo run --release --example fit_direct -- [iterations] [out_dir]
//! ```

use std::path::PathBuf;

use meshrf::commands::{bake, evaluate, BakeConfig, CompareConfig};
use meshrf::model::{train, TrainConfig, TrainingData};
use meshrf::render::write_image;

fn main() -> meshrf::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fit_direct".into()));
    std::fs::create_dir_all(&out).map_err(|e| meshrf::Error::io(&out, e))?;

    let bench = CompareConfig::desk_benchmark();
    let (dataset, stats) = bake(&BakeConfig {
        scene: bench.scene.clone(),
        rays_per_view: bench.rays_per_view,
    })?;
    println!("baked {} rays ({} hit the mesh)", stats.rays, stats.hit_rays);

    let cfg = TrainConfig {
        iterations,
        ..bench.train
    };
    let (model, rows) = train(TrainingData::Rays(&dataset), &cfg)?;
    for row in rows.iter().step_by((iterations / 10).max(1)).chain(rows.last()) {
        println!(
            "step {:5}  total {:9.4}  alpha {:9.4}  color {:8.5}  integral {:8.5}",
            row.step, row.total, row.l_alpha, row.l_color, row.l_integral
        );
    }

    let (report, predicted, reference) = evaluate(&model, &bench.scene, 4, bench.n_samples)?;
    write_image(&predicted[0], out.join("predicted.png"))?;
    write_image(&reference[0], out.join("reference.png"))?;
    println!("held-out psnr {:.2} dB, ssim {:.4}", report.mean_psnr, report.mean_ssim);
    Ok(())
}
