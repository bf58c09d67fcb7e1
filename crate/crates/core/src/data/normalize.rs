use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension min-max scaler fitted on a training range.
///
/// Constant dimensions (`max == min`) map to 0 and invert to the constant.
/// Values outside the fitted range are not clipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    /// Fits on a row-major `rows×dims` buffer.
    pub fn fit(values: &[f64], dims: usize) -> Result<Self> {
        if dims == 0 || values.is_empty() || values.len() % dims != 0 {
            return Err(Error::Shape(format!(
                "cannot fit a normalizer on {} values with {} dims",
                values.len(),
                dims
            )));
        }
        let mut min = vec![f64::INFINITY; dims];
        let mut max = vec![f64::NEG_INFINITY; dims];
        for row in values.chunks(dims) {
            for (j, &x) in row.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    #[inline]
    pub fn apply_value(&self, j: usize, x: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (x - self.min[j]) / span
        } else {
            0.0
        }
    }

    #[inline]
    pub fn invert_value(&self, j: usize, z: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            z * span + self.min[j]
        } else {
            self.min[j]
        }
    }

    /// Scales a row-major buffer whose rows have `dims()` entries.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let d = self.dims();
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| self.apply_value(i % d, x))
            .collect()
    }

    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        let d = self.dims();
        values
            .iter()
            .enumerate()
            .map(|(i, &z)| self.invert_value(i % d, z))
            .collect()
    }
}
