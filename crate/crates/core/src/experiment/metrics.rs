use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean absolute and root mean squared error over every entry.
pub fn mae_rmse(truth: &[f64], pred: &[f64]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} truths against {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Shape("no entries to score".into()));
    }
    let n = truth.len() as f64;
    let (abs, sq) = truth.iter().zip(pred).fold((0.0, 0.0), |(a, s), (y, p)| {
        let e = y - p;
        (a + e.abs(), s + e * e)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

/// Reference forecasters computed straight from the raw series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Last value observed at forecast time, `y[τ − h]`.
    Persistence,
    /// Same hour one day earlier, `y[τ − 24]`.
    SeasonalNaive,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::Persistence, Baseline::SeasonalNaive];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Persistence => "persistence",
            Baseline::SeasonalNaive => "seasonal-naive",
        }
    }

    pub fn lag(self, horizon: usize) -> usize {
        match self {
            Baseline::Persistence => horizon,
            Baseline::SeasonalNaive => 24,
        }
    }

    /// Predictions for target rows `targets` of a row-major `T×dims` series.
    pub fn predict(self, values: &[f64], dims: usize, targets: &[usize], horizon: usize) -> Result<Vec<f64>> {
        let lag = self.lag(horizon);
        let mut out = Vec::with_capacity(targets.len() * dims);
        for &t in targets {
            if t < lag || (t + 1) * dims > values.len() {
                return Err(Error::Sizing(format!("{} cannot forecast row {t}", self.name())));
            }
            out.extend_from_slice(&values[(t - lag) * dims..(t - lag + 1) * dims]);
        }
        Ok(out)
    }
}
