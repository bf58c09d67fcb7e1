//! Conformal intervals around any point forecaster. Here the forecaster is
//! an hour-of-day profile per cell, fitted on simulated traffic, and the
//! intervals come from inductive (one split) and cross (K folds) calibration.

use std::ops::Range;

use cellcast::conformal::{ccp_calibrate, coverage_rate, icp_calibrate, width_length, FoldLearner};
use cellcast::sim::{self, SimConfig};

/// Mean traffic per (hour of day, cell) over the training rows.
struct DailyProfile {
    values: Vec<f64>,
    dims: usize,
}

impl FoldLearner for DailyProfile {
    type Fitted = Vec<f64>;

    fn dims(&self) -> usize {
        self.dims
    }

    fn n_samples(&self) -> usize {
        self.values.len() / self.dims
    }

    fn fit(&self, rows: Range<usize>) -> cellcast::Result<Vec<f64>> {
        let d = self.dims;
        let mut sum = vec![0.0; 24 * d];
        let mut count = vec![0.0f64; 24];
        for t in rows {
            count[t % 24] += 1.0;
            for c in 0..d {
                sum[(t % 24) * d + c] += self.values[t * d + c];
            }
        }
        for (i, s) in sum.iter_mut().enumerate() {
            *s /= count[i / d].max(1.0);
        }
        Ok(sum)
    }

    fn predict(&self, profile: &Vec<f64>, rows: Range<usize>) -> cellcast::Result<Vec<f64>> {
        Ok(rows
            .flat_map(|t| profile[(t % 24) * self.dims..(t % 24 + 1) * self.dims].to_vec())
            .collect())
    }

    fn truth(&self, rows: Range<usize>) -> cellcast::Result<Vec<f64>> {
        Ok(self.values[rows.start * self.dims..rows.end * self.dims].to_vec())
    }
}

fn main() -> cellcast::Result<()> {
    let out = sim::run(&SimConfig {
        seed: 4,
        hours: 24 * 35,
        ..SimConfig::default()
    })?;
    let learner = DailyProfile {
        values: out.traffic.clone(),
        dims: out.cells,
    };
    let n_train = 24 * 28;
    let test = n_train..learner.n_samples();
    let truth = learner.truth(test.clone())?;

    println!(
        "{} cells, {} training hours, {} test hours",
        out.cells,
        n_train,
        test.len()
    );
    println!("\nscheme  K   scores  alpha  CR     WL");
    let mut schemes = vec![("icp", icp_calibrate(&learner, n_train, n_train / 2)?)];
    for k in [5, 10] {
        schemes.push(("ccp", ccp_calibrate(&learner, n_train, k)?));
    }
    for (name, cal) in &schemes {
        for alpha in [0.05, 0.15, 0.25] {
            let ivs = cal.intervals(&learner, test.clone(), alpha, false)?;
            println!(
                "{name:<7} {:<3} {:<7} {alpha:<6} {:.3}  {:.2}",
                cal.k(),
                cal.pool.len(),
                coverage_rate(&truth, &ivs)?,
                width_length(&ivs)?
            );
        }
    }

    // a per-cell half-width vs. the joint (Bonferroni) one
    let cal = &schemes[2].1;
    let plain = cal.eps(0.1, false)?;
    let joint = cal.eps(0.1, true)?;
    println!("\nalpha 0.1 half-widths per cell (K=10):");
    for c in 0..out.cells {
        println!("  cell {c}: {:>6.2}   bonferroni {:>6.2}", plain[c], joint[c]);
    }
    Ok(())
}
