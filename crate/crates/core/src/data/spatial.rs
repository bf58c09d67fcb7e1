use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric `D×D` coefficient matrix with zero diagonal and entries in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraph {
    n: usize,
    weights: Vec<f64>,
}

impl SpatialGraph {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Shape(format!("{} weights for a {n}x{n} graph", weights.len())));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::Config("graph diagonal must be zero".into()));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(0.0..=1.0).contains(&w) || w != weights[j * n + i] {
                    return Err(Error::Config(format!("invalid or asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, weights })
    }

    /// Graph without edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            weights: vec![0.0; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Deg^{-1/2} (G + I) Deg^{-1/2}`; the self-loop keeps every degree ≥ 1.
    pub fn normalized_with_self_loops(&self) -> Vec<f64> {
        let n = self.n;
        let deg: Vec<f64> = (0..n)
            .map(|i| 1.0 + self.weights[i * n..(i + 1) * n].iter().sum::<f64>())
            .collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = self.weights[i * n + j] + if i == j { 1.0 } else { 0.0 };
                out[i * n + j] = a / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
        out
    }
}

/// Gaussian kernel `exp(−dist²/ℓ²)` between cell positions.
pub fn build_adjacency(positions: &[(f64, f64)], length_scale: f64) -> Result<SpatialGraph> {
    if !(length_scale > 0.0) {
        return Err(Error::Config(format!(
            "length scale must be positive, got {length_scale}"
        )));
    }
    if positions.is_empty() {
        return Err(Error::Config("adjacency needs at least one cell".into()));
    }
    let n = positions.len();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            let w = (-(dx * dx + dy * dy) / (length_scale * length_scale)).exp();
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    Ok(SpatialGraph { n, weights })
}
