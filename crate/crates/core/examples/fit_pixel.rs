//! Fits the same field from rendered images alone, the pixel-supervised
//! baseline, and scores it on held-out views.
//!
//! ```text
//! cargo run --release --example fit_pixel -- [iterations] [out_dir]
//! ```

use std::path::PathBuf;

use meshrf::commands::{evaluate, CompareConfig};
use meshrf::model::{train, PixelRays, Supervision, TrainConfig, TrainingData};
use meshrf::render::{render_analytic, write_image};

fn main() -> meshrf::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fit_pixel".into()));
    std::fs::create_dir_all(&out).map_err(|e| meshrf::Error::io(&out, e))?;

    let bench = CompareConfig::desk_benchmark();
    let s = &bench.scene;
    let scene = s.build()?;
    let cameras = s.cameras.train_cameras();
    let images: Vec<_> = cameras
        .iter()
        .map(|c| render_analytic(&scene, &s.light, &s.field, c, bench.n_samples))
        .collect();
    let pixels = PixelRays::from_images(&cameras, &images, bench.rays_per_view, s.seed, s.background())?;
    println!("{} training images, {} pixel rays", images.len(), pixels.len());

    let cfg = TrainConfig {
        iterations,
        supervision: Supervision::Pixel,
        pixel_samples: s.sampling.samples_per_train_ray(),
        ..bench.train
    };
    let (model, rows) = train(TrainingData::Pixels(&pixels), &cfg)?;
    for row in rows.iter().step_by((iterations / 10).max(1)).chain(rows.last()) {
        println!("step {:5}  pixel loss {:8.5}", row.step, row.total);
    }

    let (report, predicted, reference) = evaluate(&model, s, 4, bench.n_samples)?;
    write_image(&predicted[0], out.join("predicted.png"))?;
    write_image(&reference[0], out.join("reference.png"))?;
    println!("held-out psnr {:.2} dB, ssim {:.4}", report.mean_psnr, report.mean_ssim);
    Ok(())
}
