//! Runs the desk-scale benchmark: direct and pixel supervision on the same
//! rays, the same architecture and the same seed, scored on 20 held-out views.
//!
//! ```text
//! cargo run --release --example compare -- [out_dir] [iterations]
//! ```

use std::path::PathBuf;

use meshrf::commands::{cmd_compare, CompareConfig};

fn main() -> meshrf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "compare".into()));
    let mut cfg = CompareConfig::desk_benchmark();
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        cfg.train.iterations = n;
    }
    let report = cmd_compare(&cfg, &out)?;
    print!("{}", report.to_csv());
    println!("{} supervised rays per run; artifacts in {}", report.rays, out.display());
    Ok(())
}
