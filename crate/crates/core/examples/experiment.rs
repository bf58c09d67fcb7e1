//! Runs a configured experiment end to end and prints its table.
//!
//! ```text
//! cargo run --release --example experiment -- configs/ratio-sweep.toml
//! cargo run --example experiment -- --print-default
//! ```

use cellcast::experiment::{run_experiment, ExperimentConfig, RunOptions};

fn main() -> cellcast::Result<()> {
    let arg = std::env::args().nth(1);
    if arg.as_deref() == Some("--print-default") {
        print!("{}", ExperimentConfig::default().to_toml()?);
        return Ok(());
    }
    let path = arg.unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quick.toml").into());
    let cfg = ExperimentConfig::load(&path)?;
    println!(
        "{} experiment, seed {}, config hash {}",
        cfg.kind.name(),
        cfg.seed,
        cfg.hash()
    );

    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let summary = run_experiment(&cfg, &RunOptions { out_dir: None, jobs })?;
    let report = &summary.report;

    if !report.point.is_empty() {
        println!("\nvariant            h   MAE      RMSE");
        for r in &report.point {
            println!("{:<18} {:<3} {:<8.3} {:.3}", r.variant, r.horizon, r.mae, r.rmse);
        }
        for r in &report.baselines {
            println!("{:<18} {:<3} {:<8.3} {:.3}", r.variant, r.horizon, r.mae, r.rmse);
        }
    }
    if !report.intervals.is_empty() {
        println!("\nscheme  K   alpha  CR     WL");
        for r in &report.intervals {
            println!("{:<7} {:<3} {:<6} {:.3}  {:.3}", r.scheme, r.k, r.alpha, r.cr, r.wl);
        }
    }
    println!("\nwrote {} files to {}", report.files.len() + 1, summary.dir.display());
    println!("report: {}", summary.report_path.display());
    Ok(())
}
