//! Full forward pass over a batch of windows, the losses built on it, and
//! the head-only views used by the bilevel trainer.

use std::collections::HashMap;
use std::sync::Arc;

use super::config::{HeadKind, ModelConfig};
use super::layers::{
    add_norm, cnn_features, dropout, embed, ffn, fusion_gate, gcn_layer, linear, multi_head_attention, scalar_times,
    st_block, AttentionParams, CnnParams,
};
use super::params::{body_slots, check_layout, head_slots, ParameterSet};
use crate::data::{MultimodalWindow, SpatialGraph};
use crate::error::{Error, Result};
use crate::numerics::{rng, DiffFunction, Graph, Mat, Scalar, Slot, Tensor, TensorSet, Var};

/// Windows stacked for one pass: branch inputs are `(n·p)×width` row blocks.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub len: usize,
    pub closeness: usize,
    pub period: usize,
    pub cells: usize,
    pub text_dims: usize,
    pub c_tra: Vec<f64>,
    pub c_txt: Vec<f64>,
    pub p_tra: Vec<f64>,
    pub p_txt: Vec<f64>,
    /// `n×D` (scaled units).
    pub targets: Vec<f64>,
    /// Distinct images and, per window, the index of its image.
    pub images: Vec<Arc<Tensor>>,
    pub image_index: Vec<usize>,
    /// Row-major `D×D` normalised adjacency with self loops.
    pub a_hat: Vec<f64>,
}

impl WindowBatch {
    pub fn new(cfg: &ModelConfig, windows: &[MultimodalWindow], adjacency: &SpatialGraph) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Sizing("empty batch".into()));
        }
        let (d, dt, pc, pp) = (cfg.cells, cfg.text_dims, cfg.closeness, cfg.period);
        if adjacency.len() != d {
            return Err(Error::Shape(format!(
                "adjacency over {} cells, model has {d}",
                adjacency.len()
            )));
        }
        let mut b = Self {
            len: windows.len(),
            closeness: pc,
            period: pp,
            cells: d,
            text_dims: dt,
            c_tra: Vec::with_capacity(windows.len() * pc * d),
            c_txt: Vec::with_capacity(windows.len() * pc * dt),
            p_tra: Vec::with_capacity(windows.len() * pp * d),
            p_txt: Vec::with_capacity(windows.len() * pp * dt),
            targets: Vec::with_capacity(windows.len() * d),
            images: Vec::new(),
            image_index: Vec::with_capacity(windows.len()),
            a_hat: adjacency.normalized_with_self_loops(),
        };
        for (i, w) in windows.iter().enumerate() {
            let ok = w.closeness_tra.len() == pc * d
                && w.closeness_txt.len() == pc * dt
                && w.period_tra.len() == pp * d
                && w.period_txt.len() == pp * dt
                && w.target.len() == d
                && w.image.shape() == cfg.image;
            if !ok {
                return Err(Error::Shape(format!("window {i} does not match the model dimensions")));
            }
            b.c_tra.extend_from_slice(&w.closeness_tra);
            b.c_txt.extend_from_slice(&w.closeness_txt);
            b.p_tra.extend_from_slice(&w.period_tra);
            b.p_txt.extend_from_slice(&w.period_txt);
            b.targets.extend_from_slice(&w.target);
            let idx = match b
                .images
                .iter()
                .position(|im| Arc::ptr_eq(im, &w.image) || **im == *w.image)
            {
                Some(j) => j,
                None => {
                    b.images.push(Arc::clone(&w.image));
                    b.images.len() - 1
                }
            };
            b.image_index.push(idx);
        }
        Ok(b)
    }
}

/// Train mode draws dropout masks from counters keyed by `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Parameter leaves by slot name.
pub struct Leaves {
    map: HashMap<String, Var>,
}

impl Leaves {
    pub fn new(slots: &[Slot], vars: &[Var]) -> Self {
        Self {
            map: slots.iter().map(|s| s.name.clone()).zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }
}

struct Dropout {
    mode: Mode,
    rate: f64,
    site: u64,
}

impl Dropout {
    fn apply<S: Scalar>(&mut self, g: &mut Graph<S>, x: Var) -> Result<Var> {
        match self.mode {
            Mode::Eval => Ok(x),
            Mode::Train { seed } => {
                self.site += 1;
                let site = self.site;
                dropout(g, x, self.rate, |i| rng::unit_from_counter(seed, site, i))
            }
        }
    }
}

/// Pooled closeness and period representations fed to the head: `n×d`
/// for the matrix head, `n×D` (already multiplied by `P`) for the scalar
/// head.
#[derive(Clone, Copy, Debug)]
pub struct HeadInputs {
    pub zc: Var,
    pub zp: Var,
}

fn image_leaf<S: Scalar>(g: &mut Graph<S>, img: &Tensor) -> Var {
    let [w, h, c] = [img.shape()[0], img.shape()[1], img.shape()[2]];
    g.constant(Mat::from_f64(w * h, c, img.data()))
}

#[allow(clippy::too_many_arguments)]
fn branch<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ModelConfig,
    p: &Leaves,
    prefix: &str,
    x_tra: Var,
    x_txt: Var,
    block: usize,
    a_hat: Var,
    images: &[Var],
    image_rows: &[usize],
    drop: &mut Dropout,
) -> Result<Var> {
    let [w, h, _] = cfg.image;
    let mut prev: Option<Var> = None;
    for s in 0..cfg.blocks {
        let pre = format!("{prefix}{s}");
        let q = |n: &str| p.get(&format!("{pre}.{n}"));
        let txt = (q("embed_txt.w")?, q("embed_txt.b")?);
        let (h_tra, h_txt) = match prev {
            None => embed(g, x_tra, x_txt, (q("embed_tra.w")?, q("embed_tra.b")?), txt)?,
            Some(v) => (v, linear(g, x_txt, txt.0, txt.1)?),
        };
        let fused = fusion_gate(g, h_tra, h_txt)?;

        let attn = AttentionParams {
            wq: q("attn.wq")?,
            wk: q("attn.wk")?,
            wv: q("attn.wv")?,
            heads: (0..cfg.heads)
                .map(|i| {
                    Ok((
                        q(&format!("attn.h{i}.wq"))?,
                        q(&format!("attn.h{i}.wk"))?,
                        q(&format!("attn.h{i}.wv"))?,
                    ))
                })
                .collect::<Result<_>>()?,
            wo: q("attn.wo")?,
        };
        let a = multi_head_attention(g, fused, &attn, block)?;
        let a = drop.apply(g, a)?;
        let a = add_norm(g, fused, a, q("ln1.g")?, q("ln1.b")?)?;
        let f = ffn(g, a, q("ffn.w1")?, q("ffn.b1")?, q("ffn.w2")?, q("ffn.b2")?)?;
        let f = drop.apply(g, f)?;
        let temporal = add_norm(g, a, f, q("ln2.g")?, q("ln2.b")?)?;

        let gcn = gcn_layer(g, x_tra, a_hat, q("gcn.w")?, q("gcn.b")?)?;
        let cnn_p = CnnParams {
            k1: q("cnn.k1")?,
            b1: q("cnn.b1")?,
            k2: q("cnn.k2")?,
            b2: q("cnn.b2")?,
            proj: q("cnn.proj")?,
            pb: q("cnn.pb")?,
        };
        let feats = images
            .iter()
            .map(|&img| cnn_features(g, img, &cnn_p, w, h))
            .collect::<Result<Vec<_>>>()?;
        let feats = if feats.len() == 1 {
            feats[0]
        } else {
            g.concat_rows(&feats)?
        };
        let cnn = g.gather_rows(feats, image_rows.to_vec())?;
        prev = Some(st_block(g, temporal, gcn, cnn)?);
    }
    Ok(prev.expect("at least one block"))
}

/// Body of the network: both branches, mean-pooled over time, plus the
/// scalar-head projection when configured.
pub fn body_graph<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ModelConfig,
    body: &Leaves,
    batch: &WindowBatch,
    mode: Mode,
) -> Result<HeadInputs> {
    let (n, d, dt) = (batch.len, cfg.cells, cfg.text_dims);
    let (pc, pp) = (cfg.closeness, cfg.period);
    if batch.cells != d || batch.text_dims != dt || batch.closeness != pc || batch.period != pp {
        return Err(Error::Shape("batch was built for a different model".into()));
    }
    let a_hat = g.constant(Mat::from_f64(d, d, &batch.a_hat));
    let images: Vec<Var> = batch.images.iter().map(|im| image_leaf(g, im)).collect();
    let mut drop = Dropout {
        mode,
        rate: cfg.dropout,
        site: 0,
    };
    let mut pooled = Vec::with_capacity(2);
    for (prefix, t, tra, txt) in [
        ("c", pc, &batch.c_tra, &batch.c_txt),
        ("p", pp, &batch.p_tra, &batch.p_txt),
    ] {
        let x_tra = g.constant(Mat::from_f64(n * t, d, tra));
        let x_txt = g.constant(Mat::from_f64(n * t, dt, txt));
        let rows: Vec<usize> = (0..n * t).map(|r| batch.image_index[r / t]).collect();
        let h = branch(g, cfg, body, prefix, x_tra, x_txt, t, a_hat, &images, &rows, &mut drop)?;
        let mut z = g.block_mean_rows(h, t)?;
        if cfg.head == HeadKind::Scalar {
            z = g.matmul(z, body.get("head.proj")?)?;
        }
        pooled.push(z);
    }
    Ok(HeadInputs {
        zc: pooled[0],
        zp: pooled[1],
    })
}

/// Output layer; linear in `(w1, w2, b)`.
pub fn apply_head<S: Scalar>(g: &mut Graph<S>, kind: HeadKind, z: HeadInputs, w1: Var, w2: Var, b: Var) -> Result<Var> {
    let (a, c) = match kind {
        HeadKind::Matrix => (g.matmul(z.zc, w1)?, g.matmul(z.zp, w2)?),
        HeadKind::Scalar => (scalar_times(g, z.zc, w1)?, scalar_times(g, z.zp, w2)?),
    };
    let s = g.add(a, c)?;
    g.add_row(s, b)
}

/// Builds the whole network on `g` and returns the `n×D` prediction.
pub fn forward_graph<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &ModelConfig,
    body: &Leaves,
    head: [Var; 3],
    batch: &WindowBatch,
    mode: Mode,
) -> Result<Var> {
    let z = body_graph(g, cfg, body, batch, mode)?;
    apply_head(g, cfg.head, z, head[0], head[1], head[2])
}

fn leaf(t: &Tensor) -> Mat<f64> {
    let (r, c) = t.as_matrix_dims();
    Mat::from_f64(r, c, t.data())
}

/// Eval-mode predictions, row-major `n×D` in scaled units.
pub fn predict(cfg: &ModelConfig, params: &ParameterSet, batch: &WindowBatch) -> Result<Vec<f64>> {
    params.check(cfg)?;
    let mut g = Graph::<f64>::new();
    let body_vars: Vec<Var> = params.body.tensors().iter().map(|t| g.constant(leaf(t))).collect();
    let head_vars: Vec<Var> = params.head.tensors().iter().map(|t| g.constant(leaf(t))).collect();
    let leaves = Leaves::new(&body_slots(cfg), &body_vars);
    let out = forward_graph(
        &mut g,
        cfg,
        &leaves,
        [head_vars[0], head_vars[1], head_vars[2]],
        batch,
        Mode::Eval,
    )?;
    let y = g.value(out).primal();
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericOverflow("non-finite prediction".into()));
    }
    Ok(y)
}

/// Mean squared error of the full network over a batch; slots are the
/// body followed by the head.
#[derive(Clone, Debug)]
pub struct ModelLoss {
    pub cfg: ModelConfig,
    pub mode: Mode,
}

impl ModelLoss {
    pub fn eval_mode(cfg: &ModelConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            mode: Mode::Eval,
        }
    }
}

impl DiffFunction for ModelLoss {
    type Batch = WindowBatch;

    fn slots(&self) -> Vec<Slot> {
        let mut s = body_slots(&self.cfg);
        s.extend(head_slots(&self.cfg));
        s
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], batch: &WindowBatch) -> Result<Var> {
        let nb = params.len() - 3;
        let leaves = Leaves::new(&body_slots(&self.cfg), &params[..nb]);
        let pred = forward_graph(
            g,
            &self.cfg,
            &leaves,
            [params[nb], params[nb + 1], params[nb + 2]],
            batch,
            self.mode,
        )?;
        let y = g.constant(Mat::from_f64(
            batch.len,
            batch.targets.len() / batch.len,
            &batch.targets,
        ));
        g.mse(pred, y)
    }
}

/// Pooled head inputs computed once by the body, with targets.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadBatch {
    pub rows: usize,
    pub width: usize,
    pub zc: Vec<f64>,
    pub zp: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Mean squared error as a function of the head only, on cached body
/// outputs.
#[derive(Clone, Debug)]
pub struct HeadLoss {
    pub cfg: ModelConfig,
}

impl DiffFunction for HeadLoss {
    type Batch = HeadBatch;

    fn slots(&self) -> Vec<Slot> {
        head_slots(&self.cfg)
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], batch: &HeadBatch) -> Result<Var> {
        let zc = g.constant(Mat::from_f64(batch.rows, batch.width, &batch.zc));
        let zp = g.constant(Mat::from_f64(batch.rows, batch.width, &batch.zp));
        let pred = apply_head(g, self.cfg.head, HeadInputs { zc, zp }, params[0], params[1], params[2])?;
        let y = g.constant(Mat::from_f64(
            batch.rows,
            batch.targets.len() / batch.rows,
            &batch.targets,
        ));
        g.mse(pred, y)
    }
}

/// A recorded body pass on one batch, with the body as differentiable
/// leaves. Provides the cached head inputs and, afterwards, mixed
/// body/head derivatives of the batch loss.
pub struct BodyPass {
    cfg: ModelConfig,
    graph: Graph<f64>,
    body: Vec<Var>,
    z: HeadInputs,
    rows: usize,
    targets: Vec<f64>,
}

impl BodyPass {
    pub fn new(cfg: &ModelConfig, body: &TensorSet, batch: &WindowBatch, mode: Mode) -> Result<Self> {
        let slots = body_slots(cfg);
        check_layout(body, &slots, "body")?;
        let mut graph = Graph::<f64>::new();
        let vars: Vec<Var> = body.tensors().iter().map(|t| graph.param(leaf(t))).collect();
        let leaves = Leaves::new(&slots, &vars);
        let z = body_graph(&mut graph, cfg, &leaves, batch, mode)?;
        Ok(Self {
            cfg: cfg.clone(),
            graph,
            body: vars,
            z,
            rows: batch.len,
            targets: batch.targets.clone(),
        })
    }

    pub fn head_batch(&self) -> Result<HeadBatch> {
        let zc = self.graph.value(self.z.zc);
        let zp = self.graph.value(self.z.zp);
        let hb = HeadBatch {
            rows: self.rows,
            width: zc.cols,
            zc: zc.data.clone(),
            zp: zp.data.clone(),
            targets: self.targets.clone(),
        };
        if hb.zc.iter().chain(&hb.zp).any(|x| !x.is_finite()) {
            return Err(Error::NumericOverflow("non-finite body output".into()));
        }
        Ok(hb)
    }

    /// `∇_θ (∇_ω L(θ, ω) · v)` for the batch MSE `L`, returned in body
    /// layout.
    pub fn cross_term(mut self, head: &TensorSet, v: &TensorSet) -> Result<TensorSet> {
        let g = &mut self.graph;
        let hw: Vec<Var> = head.tensors().iter().map(|t| g.constant(leaf(t))).collect();
        let vw: Vec<Var> = v.tensors().iter().map(|t| g.constant(leaf(t))).collect();
        let pred = apply_head(g, self.cfg.head, self.z, hw[0], hw[1], hw[2])?;
        let dpred = apply_head(g, self.cfg.head, self.z, vw[0], vw[1], vw[2])?;
        let cols = g.shape(pred).1;
        let y = g.constant(Mat::from_f64(self.rows, cols, &self.targets));
        let r = g.sub(pred, y)?;
        let m = g.mul(r, dpred)?;
        let s = g.sum_all(m);
        let phi = g.scale(s, 2.0 / (self.rows * cols) as f64);
        let grads = g.backward(phi)?;
        let slots = body_slots(&self.cfg);
        let mut out = TensorSet::new();
        for (slot, var) in slots.iter().zip(&self.body) {
            let data = match grads.get(*var) {
                Some(m) => m.data.clone(),
                None => vec![0.0; slot.shape.iter().product()],
            };
            out.push(slot.name.clone(), Tensor::new(slot.shape.clone(), data)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::{eval, eval_with_grad, fd_gradient, hvp, rel_err};
    use rand::Rng;

    pub(crate) fn tiny_config(head: HeadKind) -> ModelConfig {
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
            head,
        }
    }

    pub(crate) fn random_windows(cfg: &ModelConfig, n: usize, n_images: usize, seed: u64) -> Vec<MultimodalWindow> {
        let mut r = rng::stream(seed, 0);
        let mut v = |k: usize| -> Vec<f64> { (0..k).map(|_| r.gen::<f64>()).collect() };
        let numel = cfg.image.iter().product();
        let images: Vec<Arc<Tensor>> = (0..n_images)
            .map(|_| Arc::new(Tensor::new(cfg.image.to_vec(), v(numel)).unwrap()))
            .collect();
        (0..n)
            .map(|i| MultimodalWindow {
                target_index: i,
                horizon: 1,
                closeness_tra: v(cfg.closeness * cfg.cells),
                closeness_txt: v(cfg.closeness * cfg.text_dims),
                period_tra: v(cfg.period * cfg.cells),
                period_txt: v(cfg.period * cfg.text_dims),
                target: v(cfg.cells),
                image: Arc::clone(&images[i % n_images]),
            })
            .collect()
    }

    /// Every entry uniform in ±0.6, so no ReLU input sits exactly at zero.
    pub(crate) fn random_params(cfg: &ModelConfig, seed: u64) -> ParameterSet {
        let p = ParameterSet::init(cfg, seed).unwrap();
        let mut r = rng::stream(seed, 99);
        let mut all = p.all();
        let flat: Vec<f64> = (0..all.numel()).map(|_| r.gen_range(-0.6..0.6)).collect();
        all.set_flat(&flat).unwrap();
        ParameterSet::from_all(cfg, all).unwrap()
    }

    pub(crate) fn ring(n: usize) -> SpatialGraph {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                w[i * n + j] = 0.7;
                w[j * n + i] = 0.7;
            }
        }
        SpatialGraph::new(n, w).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for head in [HeadKind::Matrix, HeadKind::Scalar] {
            let cfg = tiny_config(head);
            let batch = WindowBatch::new(&cfg, &random_windows(&cfg, 3, 2, 5), &ring(3)).unwrap();
            let params = random_params(&cfg, 2).all();
            let f = ModelLoss::eval_mode(&cfg);
            let (_, grad) = eval_with_grad(&f, &params, &batch).unwrap();
            let fd = fd_gradient(&f, &params, &batch, 1e-5).unwrap();
            let e = rel_err(&grad.to_flat(), &fd.to_flat(), 1e-8);
            assert!(e < 1e-6, "{head:?}: {e}");
        }
    }

    #[test]
    fn cross_term_matches_hessian_vector_product() {
        for head in [HeadKind::Matrix, HeadKind::Scalar] {
            let cfg = tiny_config(head);
            let batch = WindowBatch::new(&cfg, &random_windows(&cfg, 4, 1, 6), &ring(3)).unwrap();
            let p = ParameterSet::init(&cfg, 3).unwrap();
            let mut v = p.head.clone();
            let flat: Vec<f64> = (0..v.numel()).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
            v.set_flat(&flat).unwrap();
            let nb = p.body.len();
            let wrt: Vec<usize> = (nb..nb + 3).collect();
            let full = hvp(&ModelLoss::eval_mode(&cfg), &p.all(), &batch, &wrt, &v).unwrap();
            let pass = BodyPass::new(&cfg, &p.body, &batch, Mode::Eval).unwrap();
            let hb = pass.head_batch().unwrap();
            let cross = pass.cross_term(&p.head, &v).unwrap();
            let e = rel_err(&cross.to_flat(), &full.slice(0..nb).to_flat(), 1e-12);
            assert!(e < 1e-10, "{head:?}: {e}");
            // head block of the Hessian from cached features
            let hh = hvp(&HeadLoss { cfg: cfg.clone() }, &p.head, &hb, &[0, 1, 2], &v).unwrap();
            let e = rel_err(&hh.to_flat(), &full.slice(nb..nb + 3).to_flat(), 1e-12);
            assert!(e < 1e-10, "{head:?}: {e}");
            let l1 = eval(&HeadLoss { cfg: cfg.clone() }, &p.head, &hb).unwrap();
            let l2 = eval(&ModelLoss::eval_mode(&cfg), &p.all(), &batch).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn batching_is_row_independent() {
        let cfg = tiny_config(HeadKind::Matrix);
        let windows = random_windows(&cfg, 5, 2, 8);
        let p = ParameterSet::init(&cfg, 4).unwrap();
        let all = predict(&cfg, &p, &WindowBatch::new(&cfg, &windows, &ring(3)).unwrap()).unwrap();
        for (i, w) in windows.iter().enumerate() {
            let one = predict(
                &cfg,
                &p,
                &WindowBatch::new(&cfg, std::slice::from_ref(w), &ring(3)).unwrap(),
            )
            .unwrap();
            assert!(rel_err(&one, &all[i * 3..(i + 1) * 3], 1e-12) < 1e-13);
        }
    }

    #[test]
    fn head_only_and_linearity() {
        let cfg = tiny_config(HeadKind::Matrix);
        let batch = WindowBatch::new(&cfg, &random_windows(&cfg, 3, 1, 9), &ring(3)).unwrap();
        let mut p = ParameterSet::init(&cfg, 5).unwrap();
        for name in ["head.w1", "head.w2"] {
            p.head.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        p.head
            .get_mut("head.b")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[1.0, -2.0, 0.5]);
        let y = predict(&cfg, &p, &batch).unwrap();
        for row in y.chunks(3) {
            assert_eq!(row, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn dropout_is_seeded_and_off_in_eval() {
        let cfg = ModelConfig {
            dropout: 0.3,
            ..tiny_config(HeadKind::Matrix)
        };
        let batch = WindowBatch::new(&cfg, &random_windows(&cfg, 3, 1, 10), &ring(3)).unwrap();
        let params = ParameterSet::init(&cfg, 6).unwrap().all();
        let train = |seed| {
            eval(
                &ModelLoss {
                    cfg: cfg.clone(),
                    mode: Mode::Train { seed },
                },
                &params,
                &batch,
            )
            .unwrap()
        };
        let evalm = |_: u64| eval(&ModelLoss::eval_mode(&cfg), &params, &batch).unwrap();
        assert_eq!(train(1), train(1));
        assert_ne!(train(1), train(2));
        assert_eq!(evalm(0), evalm(0));
    }
}
