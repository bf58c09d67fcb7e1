use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Hours between consecutive period samples.
pub const PERIOD_STRIDE: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    /// Most recent hours fed to the closeness branch.
    pub closeness: usize,
    /// Same-hour samples from previous days fed to the period branch.
    pub period: usize,
    /// Steps ahead of the last closeness row.
    pub horizon: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            closeness: 3,
            period: 3,
            horizon: 1,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.closeness == 0 || self.period == 0 || self.horizon == 0 {
            return Err(Error::Config(format!("window lags and horizon must be >= 1: {self:?}")));
        }
        if self.closeness > self.period * PERIOD_STRIDE {
            return Err(Error::Config(format!(
                "closeness lag {} exceeds the period lookback of {} hours",
                self.closeness,
                self.period * PERIOD_STRIDE
            )));
        }
        Ok(())
    }

    /// Shortest series that yields one window.
    pub fn min_length(&self) -> usize {
        self.period * PERIOD_STRIDE + self.horizon
    }

    /// Earliest target index.
    pub fn first_target(&self) -> usize {
        self.min_length() - 1
    }

    /// Closeness input rows for target index `tau`, oldest first.
    pub fn closeness_rows(&self, tau: usize) -> Vec<usize> {
        let last = tau - self.horizon;
        (0..self.closeness).map(|k| last + 1 + k - self.closeness).collect()
    }

    /// Period input rows for target index `tau` (same hour on previous days), oldest first.
    pub fn period_rows(&self, tau: usize) -> Vec<usize> {
        (1..=self.period).rev().map(|k| tau - k * PERIOD_STRIDE).collect()
    }
}

/// One example: both branch inputs (traffic + exogenous rows), the shared
/// image, and the target row `horizon` steps after the last closeness row.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalWindow {
    pub target_index: usize,
    pub horizon: usize,
    pub closeness_tra: Vec<f64>,
    pub closeness_txt: Vec<f64>,
    pub period_tra: Vec<f64>,
    pub period_txt: Vec<f64>,
    pub target: Vec<f64>,
    pub image: Arc<Tensor>,
}

/// Cuts a `T×D` series plus `T×D_txt` exogenous rows into windows ordered
/// by target time. Every input row precedes the target row.
pub fn make_windows(
    values: &[f64],
    dims: usize,
    exog: &[f64],
    exog_dims: usize,
    spec: &WindowSpec,
    image: Arc<Tensor>,
) -> Result<Vec<MultimodalWindow>> {
    spec.validate()?;
    if dims == 0 || values.len() % dims != 0 {
        return Err(Error::Shape(format!("{} values with {dims} dims", values.len())));
    }
    let t_len = values.len() / dims;
    if exog.len() != t_len * exog_dims {
        return Err(Error::Shape(format!(
            "exogenous block has {} values, expected {}x{}",
            exog.len(),
            t_len,
            exog_dims
        )));
    }
    if t_len < spec.min_length() {
        return Err(Error::Sizing(format!(
            "series of {t_len} hours is too short; windows need at least {} hours (period lag {} x {} + horizon {})",
            spec.min_length(),
            spec.period,
            PERIOD_STRIDE,
            spec.horizon
        )));
    }
    let gather = |rows: &[usize], src: &[f64], width: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            out.extend_from_slice(&src[r * width..(r + 1) * width]);
        }
        out
    };
    let windows = (spec.first_target()..t_len)
        .map(|tau| {
            let c_rows = spec.closeness_rows(tau);
            let p_rows = spec.period_rows(tau);
            MultimodalWindow {
                target_index: tau,
                horizon: spec.horizon,
                closeness_tra: gather(&c_rows, values, dims),
                closeness_txt: gather(&c_rows, exog, exog_dims),
                period_tra: gather(&p_rows, values, dims),
                period_txt: gather(&p_rows, exog, exog_dims),
                target: values[tau * dims..(tau + 1) * dims].to_vec(),
                image: Arc::clone(&image),
            }
        })
        .collect();
    Ok(windows)
}
