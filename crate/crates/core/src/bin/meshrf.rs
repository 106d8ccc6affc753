use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshrf::commands::{
    apply_overrides, cmd_bake, cmd_compare, cmd_eval, cmd_fit, cmd_render, init_threads, read_json, BakeConfig,
    CompareConfig, EvalConfig, FitConfig, Procedural, RenderConfig, SceneConfig,
};
use meshrf::model::{BackendKind, Supervision, TrainConfig};
use meshrf::render::Camera;
use meshrf::supervision::LossWeights;
use meshrf::Error;

#[derive(Parser)]
#[command(name = "meshrf", version, about = "Radiance fields from textured meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Volume-render the analytic field of a scene.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        /// Only render this sphere camera.
        #[arg(long)]
        index: Option<usize>,
        /// Camera JSON file to render instead of the sphere.
        #[arg(long)]
        camera: Option<PathBuf>,
        /// Render the held-out camera lattice.
        #[arg(long)]
        test_split: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Bake a per-sample supervision dataset.
    Bake {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, default_value_t = 1024)]
        rays_per_view: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit a field to a baked dataset or to rendered images.
    Fit {
        /// Baked dataset file.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Image directory written by `render`, for pixel supervision.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Bake this scene on the fly when no dataset is given.
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, default_value_t = 1024)]
        rays_per_view: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare a checkpoint against analytic renders on held-out views.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
        /// Fail unless the checkpoint has this backend.
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long, default_value_t = 20)]
        test_views: usize,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        #[arg(long)]
        write_images: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit with direct and with pixel supervision and compare the two.
    Compare {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 1024)]
        rays_per_view: usize,
        #[arg(long, default_value_t = 20)]
        test_views: usize,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct SceneArgs {
    /// Scene config JSON.
    #[arg(long = "scene")]
    scene_file: Option<PathBuf>,
    /// OBJ mesh.
    #[arg(long, conflicts_with = "procedural")]
    mesh: Option<PathBuf>,
    /// cube, icosphere or two_planes.
    #[arg(long)]
    procedural: Option<Procedural>,
    /// Number of sphere cameras.
    #[arg(long)]
    views: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    half_thickness: Option<f64>,
}

impl SceneArgs {
    fn given(&self) -> bool {
        self.scene_file.is_some() || self.mesh.is_some() || self.procedural.is_some()
    }

    fn resolve(&self) -> meshrf::Result<SceneConfig> {
        let mut s = match &self.scene_file {
            Some(path) => read_json(path)?,
            None => SceneConfig::default(),
        };
        if let Some(m) = &self.mesh {
            s.mesh = Some(m.clone());
            s.procedural = None;
        }
        if let Some(p) = self.procedural {
            s.procedural = Some(p);
            s.mesh = None;
        }
        if s.mesh.is_none() && s.procedural.is_none() {
            s.procedural = Some(Procedural::Icosphere);
        }
        if let Some(v) = self.views {
            s.cameras.count = v;
        }
        if let Some(v) = self.size {
            s.cameras.resolution = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.half_thickness {
            s.field.half_thickness = v;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Train config JSON.
    #[arg(long = "train-config")]
    train_file: Option<PathBuf>,
    #[arg(long)]
    supervision: Option<Supervision>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_rays: Option<usize>,
    #[arg(long)]
    max_lr: Option<f64>,
    /// Loss weight preset v1..v5.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long = "train-seed")]
    train_seed: Option<u64>,
}

impl TrainArgs {
    fn resolve(&self) -> meshrf::Result<TrainConfig> {
        let mut t: TrainConfig = match &self.train_file {
            Some(path) => read_json(path)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.supervision {
            t.supervision = v;
        }
        if let Some(v) = self.backend {
            t.backend = v;
        }
        if let Some(v) = self.iterations {
            t.iterations = v;
        }
        if let Some(v) = self.batch_rays {
            t.batch_rays = v;
        }
        if let Some(v) = self.max_lr {
            t.max_lr = v;
        }
        if let Some(v) = self.train_seed {
            t.seed = v;
        }
        if let Some(name) = &self.weights {
            t.weights = LossWeights::variant(name)
                .ok_or_else(|| Error::Config(format!("unknown weight preset {name:?} (v1..v5)")))?;
        }
        Ok(t)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Override any config key, e.g. `--set scene.field.half_thickness=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn run(cli: Cli) -> meshrf::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Render {
            scene,
            samples,
            index,
            camera,
            test_split,
            run,
        } => {
            let camera: Option<Camera> = camera.map(read_json).transpose()?;
            let cfg = RenderConfig {
                scene: scene.resolve()?,
                n_samples: samples,
                index,
                camera,
                test_split,
            };
            let cfg = apply_overrides(&cfg, &run.sets)?;
            let summary = cmd_render(&cfg, &run.out)?;
            for (path, t) in summary.files.iter().zip(&summary.times) {
                println!("{} {:.3}s", path.display(), t.as_secs_f64());
            }
        }
        Command::Bake {
            scene,
            rays_per_view,
            run,
        } => {
            let cfg = BakeConfig {
                scene: scene.resolve()?,
                rays_per_view,
            };
            let cfg = apply_overrides(&cfg, &run.sets)?;
            let stats = cmd_bake(&cfg, &run.out)?;
            println!("rays {}", stats.rays);
            println!("hit fraction {:.4}", stats.hit_fraction());
            if let Some(min) = stats.min_in_band_on_hits {
                println!("in-band samples per hit ray: min {min}, mean {:.2}", stats.mean_in_band_on_hits);
            }
        }
        Command::Fit {
            dataset,
            images,
            scene,
            rays_per_view,
            train,
            run,
        } => {
            let bake = if scene.given() {
                Some(BakeConfig {
                    scene: scene.resolve()?,
                    rays_per_view,
                })
            } else {
                None
            };
            let cfg = FitConfig {
                train: train.resolve()?,
                dataset,
                scene: bake,
                images,
                rays_per_view,
            };
            let cfg = apply_overrides(&cfg, &run.sets)?;
            let summary = cmd_fit(&cfg, &run.out)?;
            println!("rays {} params {}", summary.rays, summary.model.param_count());
            if let Some(last) = summary.rows.last() {
                println!(
                    "final loss {:.6} (alpha {:.6}, color {:.6}, integral {:.6})",
                    last.total, last.l_alpha, last.l_color, last.l_integral
                );
            }
        }
        Command::Eval {
            checkpoint,
            scene,
            backend,
            test_views,
            samples,
            write_images,
            run,
        } => {
            let cfg = EvalConfig {
                checkpoint,
                scene: scene.resolve()?,
                backend,
                test_views,
                n_samples: samples,
                write_images,
            };
            let cfg = apply_overrides(&cfg, &run.sets)?;
            let report = cmd_eval(&cfg, &run.out)?;
            print!("{}", report.to_csv());
        }
        Command::Compare {
            scene,
            train,
            rays_per_view,
            test_views,
            samples,
            run,
        } => {
            let cfg = CompareConfig {
                scene: scene.resolve()?,
                train: train.resolve()?,
                rays_per_view,
                test_views,
                n_samples: samples,
            };
            let cfg = apply_overrides(&cfg, &run.sets)?;
            let report = cmd_compare(&cfg, &run.out)?;
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
