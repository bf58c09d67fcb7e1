//! Runs the traffic simulator and summarizes what it produced.
//!
//! ```text
//! cargo run --example simulate -- 7
//! ```

use cellcast::sim::{self, SimConfig};

fn main() -> cellcast::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SimConfig {
        seed,
        hours: 24 * 14,
        ..SimConfig::default()
    };
    let (out, trace) = sim::run_traced(&cfg)?;
    println!(
        "{} base stations, {} cells, {} users, {} hours from {}",
        cfg.base_stations,
        out.cells,
        trace.users,
        out.hours(),
        out.timestamps[0]
    );

    let d = out.cells;
    println!("\ncell  mean    peak-hour  min     max");
    for c in 0..d {
        let col: Vec<f64> = (0..out.hours()).map(|t| out.traffic[t * d + c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let mut by_hour = [0.0; 24];
        for (t, v) in col.iter().enumerate() {
            by_hour[t % 24] += v;
        }
        let peak = (0..24).max_by(|&a, &b| by_hour[a].total_cmp(&by_hour[b])).unwrap();
        let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        println!("{c:<5} {mean:<7.2} {peak:<10} {lo:<7.2} {hi:.2}");
    }

    // every unit of user traffic lands in exactly one cell
    let worst = (0..out.hours())
        .map(|t| {
            let cells: f64 = out.traffic[t * d..(t + 1) * d].iter().sum();
            let users: f64 = trace.user_traffic[t * trace.users..(t + 1) * trace.users].iter().sum();
            (cells - users).abs()
        })
        .fold(0.0, f64::max);
    println!("\nmax |cell sum - user sum| over all hours: {worst:.2e}");

    let bursts = out.event_flags.iter().filter(|&&f| f > 0.0).count();
    println!(
        "{bursts} nonzero entries in the {}-column event features",
        out.text_dims
    );
    println!("image tensor shape {:?}", out.image.shape());
    Ok(())
}
