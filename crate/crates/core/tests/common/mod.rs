#![allow(dead_code)]

use std::ops::Range;
use std::sync::Arc;

use cellcast::conformal::FoldLearner;
use cellcast::data::{MultimodalWindow, SpatialGraph};
use cellcast::meta::QuadraticBilevel;
use cellcast::model::{HeadKind, ModelConfig, ParameterSet};
use cellcast::numerics::Tensor;
use cellcast::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_model() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        heads: 2,
        blocks: 2,
        dropout: 0.0,
        cnn_channels: 2,
        closeness: 2,
        period: 2,
        cells: 3,
        text_dims: 4,
        image: [3, 3, 2],
        head: HeadKind::Matrix,
    }
}

pub fn random_windows(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<MultimodalWindow> {
    let mut r = rng(seed);
    let mut v = |k: usize| -> Vec<f64> { (0..k).map(|_| r.gen::<f64>()).collect() };
    let image = Arc::new(Tensor::new(cfg.image.to_vec(), v(cfg.image.iter().product())).unwrap());
    (0..n)
        .map(|i| MultimodalWindow {
            target_index: i,
            horizon: 1,
            closeness_tra: v(cfg.closeness * cfg.cells),
            closeness_txt: v(cfg.closeness * cfg.text_dims),
            period_tra: v(cfg.period * cfg.cells),
            period_txt: v(cfg.period * cfg.text_dims),
            target: v(cfg.cells),
            image: Arc::clone(&image),
        })
        .collect()
}

/// Every entry uniform in ±0.6.
pub fn random_params(cfg: &ModelConfig, seed: u64) -> ParameterSet {
    let p = ParameterSet::init(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x9e37);
    let mut all = p.all();
    let flat: Vec<f64> = (0..all.numel()).map(|_| r.gen_range(-0.6..0.6)).collect();
    all.set_flat(&flat).unwrap();
    ParameterSet::from_all(cfg, all).unwrap()
}

pub fn chain_graph(n: usize) -> SpatialGraph {
    let mut w = vec![0.0; n * n];
    for i in 0..n.saturating_sub(1) {
        w[i * n + i + 1] = 0.5;
        w[(i + 1) * n + i] = 0.5;
    }
    SpatialGraph::new(n, w).unwrap()
}

/// Dense implicit-function oracle: `(ω*, dΨ/dθ)` at `θ`.
pub fn quadratic_oracle(q: &QuadraticBilevel, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = DMatrix::from_row_slice(q.n, q.n, &q.a);
    let b = DMatrix::from_row_slice(q.n, q.m, &q.b);
    let c = DMatrix::from_row_slice(q.m, q.m, &q.theta_curvature);
    let th = DVector::from_column_slice(theta);
    let a_inv = a.clone().try_inverse().expect("A is invertible");
    let omega = &a_inv * &b * &th;
    let t = DVector::from_column_slice(&q.target);
    let grad = &c * &th + b.transpose() * &a_inv * (&omega - t) * q.outer_weight;
    (omega.as_slice().to_vec(), grad.as_slice().to_vec())
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    d / n.max(1e-12)
}

/// Full-sort reference: per column, sort ascending and take the l-th.
pub fn sort_quantile(scores: &[f64], d: usize, alpha: f64) -> Option<Vec<f64>> {
    let l_count = scores.len() / d;
    let target = (1.0 - alpha) * (l_count as f64 + 1.0);
    let mut l = 1;
    while (l as f64) < target * (1.0 - 1e-12) {
        l += 1;
    }
    if l > l_count {
        return None;
    }
    Some(
        (0..d)
            .map(|j| {
                let mut col: Vec<f64> = (0..l_count).map(|i| scores[i * d + j]).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                col[l - 1]
            })
            .collect(),
    )
}

/// i.i.d. linear-Gaussian rows `y = xβ + ε` with a least-squares learner.
pub struct LinearIid {
    pub p: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LinearIid {
    pub fn new(n: usize, p: usize, d: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let beta: Vec<f64> = (0..p * d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n * d);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
            for j in 0..d {
                let mean: f64 = (0..p).map(|k| row[k] * beta[k * d + j]).sum();
                let e: f64 = r.sample(StandardNormal);
                y.push(mean + 0.5 * e);
            }
            x.extend(row);
        }
        Self { p, d, x, y }
    }
}

impl FoldLearner for LinearIid {
    type Fitted = DMatrix<f64>;

    fn dims(&self) -> usize {
        self.d
    }

    fn n_samples(&self) -> usize {
        self.y.len() / self.d
    }

    fn fit(&self, rows: Range<usize>) -> Result<DMatrix<f64>> {
        let x = DMatrix::from_row_slice(rows.len(), self.p, &self.x[rows.start * self.p..rows.end * self.p]);
        let y = DMatrix::from_row_slice(rows.len(), self.d, &self.y[rows.start * self.d..rows.end * self.d]);
        let xtx = x.transpose() * &x + DMatrix::identity(self.p, self.p) * 1e-8;
        Ok(xtx.try_inverse().unwrap() * x.transpose() * y)
    }

    fn predict(&self, beta: &DMatrix<f64>, rows: Range<usize>) -> Result<Vec<f64>> {
        let x = DMatrix::from_row_slice(rows.len(), self.p, &self.x[rows.start * self.p..rows.end * self.p]);
        let out = x * beta;
        Ok((0..out.nrows())
            .flat_map(|i| (0..self.d).map(move |j| (i, j)))
            .map(|(i, j)| out[(i, j)])
            .collect())
    }

    fn truth(&self, rows: Range<usize>) -> Result<Vec<f64>> {
        Ok(self.y[rows.start * self.d..rows.end * self.d].to_vec())
    }
}
