//! Building blocks of the forecaster as tape operations. Inputs stack the
//! windows of a batch row-wise; `block` is the number of time rows per
//! window, and attention never crosses window boundaries.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Mat, Scalar, Var};

pub fn linear<S: Scalar>(g: &mut Graph<S>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// Traffic and text embeddings: two independent affine maps to width `d`.
pub fn embed<S: Scalar>(
    g: &mut Graph<S>,
    x_tra: Var,
    x_txt: Var,
    tra: (Var, Var),
    txt: (Var, Var),
) -> Result<(Var, Var)> {
    Ok((linear(g, x_tra, tra.0, tra.1)?, linear(g, x_txt, txt.0, txt.1)?))
}

/// `Z = σ(H_tra + H_txt)`, `H′ = Z⊙H_tra + (1−Z)⊙H_txt`.
pub fn fusion_gate<S: Scalar>(g: &mut Graph<S>, h_tra: Var, h_txt: Var) -> Result<Var> {
    let s = g.add(h_tra, h_txt)?;
    let z = g.sigmoid(s);
    let diff = g.sub(h_tra, h_txt)?;
    let zd = g.mul(z, diff)?;
    g.add(h_txt, zd)
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    /// Per-head `(W_i^q, W_i^k, W_i^v)`, each `d×d_a`.
    pub heads: Vec<(Var, Var, Var)>,
    pub wo: Var,
}

/// Scaled dot-product attention per head over `block`-row windows, heads
/// concatenated and projected by `W_o`. No causal mask.
pub fn multi_head_attention<S: Scalar>(g: &mut Graph<S>, x: Var, p: &AttentionParams, block: usize) -> Result<Var> {
    let q = g.matmul(x, p.wq)?;
    let k = g.matmul(x, p.wk)?;
    let v = g.matmul(x, p.wv)?;
    let mut outs = Vec::with_capacity(p.heads.len());
    for &(hq, hk, hv) in &p.heads {
        let qi = g.matmul(q, hq)?;
        let ki = g.matmul(k, hk)?;
        let vi = g.matmul(v, hv)?;
        let da = g.shape(qi).1;
        let scores = g.block_matmul_nt(qi, ki, block)?;
        let scores = g.scale(scores, 1.0 / (da as f64).sqrt());
        let weights = g.softmax_rows(scores);
        outs.push(g.block_matmul(weights, vi, block)?);
    }
    let cat = g.concat_cols(&outs)?;
    g.matmul(cat, p.wo)
}

/// `ReLU(x·W₁ + b₁)·W₂ + b₂`.
pub fn ffn<S: Scalar>(g: &mut Graph<S>, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let h = linear(g, x, w1, b1)?;
    let h = g.relu(h);
    linear(g, h, w2, b2)
}

/// Residual add followed by row-wise layer normalisation and an affine map.
pub fn add_norm<S: Scalar>(g: &mut Graph<S>, x: Var, sub: Var, gamma: Var, beta: Var) -> Result<Var> {
    let s = g.add(x, sub)?;
    let n = g.layer_norm_rows(s);
    let n = g.mul_row(n, gamma)?;
    g.add_row(n, beta)
}

/// `ReLU(X·Â·W + b)`: each row of `X` holds one scalar feature per cell,
/// `Â` (symmetric) mixes neighbouring cells and `W` maps the `D` aggregated
/// cells to width `d`.
pub fn gcn_layer<S: Scalar>(g: &mut Graph<S>, x_tra: Var, a_hat: Var, w: Var, b: Var) -> Result<Var> {
    let agg = g.matmul(x_tra, a_hat)?;
    let h = linear(g, agg, w, b)?;
    Ok(g.relu(h))
}

#[derive(Clone, Copy, Debug)]
pub struct CnnParams {
    pub k1: Var,
    pub b1: Var,
    pub k2: Var,
    pub b2: Var,
    pub proj: Var,
    pub pb: Var,
}

/// Two same-padded 3×3 convolutions with ReLU, global average pooling and
/// a projection to width `d`. `img` is `(W·H)×C` with pixel `(x, y)` at row
/// `x·H + y`. Returns a `1×d` row.
pub fn cnn_features<S: Scalar>(g: &mut Graph<S>, img: Var, p: &CnnParams, w: usize, h: usize) -> Result<Var> {
    let cols = g.im2col_3x3(img, w, h)?;
    let c1 = linear(g, cols, p.k1, p.b1)?;
    let c1 = g.relu(c1);
    let cols = g.im2col_3x3(c1, w, h)?;
    let c2 = linear(g, cols, p.k2, p.b2)?;
    let c2 = g.relu(c2);
    let pooled = g.block_mean_rows(c2, w * h)?;
    linear(g, pooled, p.proj, p.pb)
}

/// `H_st = H_temporal ⊙ (H_gcn ⊙ H_cnn)`.
pub fn st_block<S: Scalar>(g: &mut Graph<S>, temporal: Var, gcn: Var, cnn: Var) -> Result<Var> {
    let spatial = g.mul(gcn, cnn)?;
    g.mul(temporal, spatial)
}

/// Inverted dropout: keeps each entry with probability `1 − rate` and
/// rescales by `1/(1 − rate)`. `draw(i)` supplies the uniform for entry `i`.
pub fn dropout<S: Scalar>(g: &mut Graph<S>, x: Var, rate: f64, draw: impl Fn(u64) -> f64) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    if rate >= 1.0 {
        return Err(Error::Config(format!("dropout rate {rate} must be below 1")));
    }
    let n = {
        let (r, c) = g.shape(x);
        r * c
    };
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..n as u64).map(|i| if draw(i) < rate { 0.0 } else { keep }).collect();
    g.mul_const(x, mask)
}

/// `1×1` scalar `w` times every entry of `x`.
pub fn scalar_times<S: Scalar>(g: &mut Graph<S>, x: Var, w: Var) -> Result<Var> {
    let cols = g.shape(x).1;
    let ones = g.constant(Mat::from_f64(1, cols, &vec![1.0; cols]));
    let row = g.matmul(w, ones)?;
    g.mul_row(x, row)
}
