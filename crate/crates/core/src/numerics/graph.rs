//! A reverse-mode tape over dense row-major matrices.
//!
//! The tape is generic over [`Scalar`], so the same graph-building code
//! yields gradients when run on `f64` and Hessian-vector products
//! (forward-over-reverse) when run on [`Dual`](super::Dual) leaves whose
//! tangent carries the direction.
//!
//! Nodes are appended in evaluation order; backward walks them in reverse
//! and only visits nodes that depend on a gradient-carrying leaf.

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix buffer length");
        Self {
            rows,
            cols,
            data: data.iter().map(|&x| S::from_f64(x)).collect(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn primal(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.re()).collect()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var),
    BlockMeanRows(Var, usize),
    BroadcastRows(Var),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Im2Col3x3 { x: Var, height: usize, width: usize },
    ConcatCols(Vec<Var>),
    MulConst(Var, Vec<f64>),
    BlockMatMulNT(Var, Var, usize),
    BlockMatMul(Var, Var, usize),
    SumAll(Var),
    Mse(Var, Var),
}

struct Node<S> {
    value: Mat<S>,
    op: Op,
    needs_grad: bool,
    // LayerNorm keeps 1/σ per row here.
    aux: Vec<S>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Computation tape.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat<S>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            aux: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let m = &self.nodes[v.0].value;
        (m.rows, m.cols)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Mat<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from backpropagation.
    pub fn constant(&mut self, value: Mat<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_f64(&mut self, rows: usize, cols: usize, data: &[f64]) -> Var {
        self.constant(Mat::from_f64(rows, cols, data))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols != bm.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} · {}x{}",
                am.rows, am.cols, bm.rows, bm.cols
            )));
        }
        let (n, k, m) = (am.rows, am.cols, bm.cols);
        let mut out = Mat::zeros(n, m);
        for i in 0..n {
            let orow = &mut out.data[i * m..(i + 1) * m];
            for kk in 0..k {
                let aik = am.data[i * k + kk];
                let brow = &bm.data[kk * m..(kk + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols != bm.cols {
            return Err(Error::Shape(format!(
                "matmul_nt: {}x{} · ({}x{})ᵀ",
                am.rows, am.cols, bm.rows, bm.cols
            )));
        }
        let (n, k, m) = (am.rows, am.cols, bm.rows);
        let mut out = Mat::zeros(n, m);
        for i in 0..n {
            let arow = &am.data[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bm.data[j * k..(j + 1) * k];
                let mut acc = S::zero();
                for (&x, &y) in arow.iter().zip(brow) {
                    acc += x * y;
                }
                out.data[i * m + j] = acc;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMulNT(a, b), ng))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(S, S) -> S, op: Op) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (am, bm) = (self.value(a), self.value(b));
        let data = am.data.iter().zip(&bm.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Mat {
            rows: am.rows,
            cols: am.cols,
            data,
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&mut self, a: Var, row: Var, what: &str, f: impl Fn(S, S) -> S, op: Op) -> Result<Var> {
        let (am, rm) = (self.value(a), self.value(row));
        if rm.rows != 1 || rm.cols != am.cols {
            return Err(Error::Shape(format!(
                "{what}: row {}x{} against {}x{}",
                rm.rows, rm.cols, am.rows, am.cols
            )));
        }
        let c = am.cols;
        let data = am.data.iter().enumerate().map(|(i, &x)| f(x, rm.data[i % c])).collect();
        let out = Mat {
            rows: am.rows,
            cols: c,
            data,
        };
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, op, ng))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(a, row, "add_row", |x, y| x + y, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` element-wise by a `1×c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(a, row, "mul_row", |x, y| x * y, Op::MulRow(a, row))
    }

    fn map(&mut self, a: Var, f: impl Fn(S) -> S, op: Op) -> Var {
        let am = self.value(a);
        let out = Mat {
            rows: am.rows,
            cols: am.cols,
            data: am.data.iter().map(|&x| f(x)).collect(),
        };
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x.scale(k), Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| S::one() / (S::one() + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x.re() > 0.0 { x } else { S::zero() }, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let c = am.cols;
        let mut out = Mat::zeros(am.rows, c);
        for r in 0..am.rows {
            let row = am.row(r);
            let mx = row.iter().map(|x| x.re()).fold(f64::NEG_INFINITY, f64::max);
            let mut total = S::zero();
            for (o, &x) in out.data[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (x - S::from_f64(mx)).exp();
                total += *o;
            }
            for o in &mut out.data[r * c..(r + 1) * c] {
                *o = *o / total;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Per-row standardization `(x − μ)/√(var + ε)` without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let c = am.cols;
        let inv_n = 1.0 / c as f64;
        let mut out = Mat::zeros(am.rows, c);
        let mut inv_std = Vec::with_capacity(am.rows);
        for r in 0..am.rows {
            let row = am.row(r);
            let mut mean = S::zero();
            for &x in row {
                mean += x;
            }
            let mean = mean.scale(inv_n);
            let mut var = S::zero();
            for &x in row {
                let d = x - mean;
                var += d * d;
            }
            let var = var.scale(inv_n);
            let is = S::one() / (var + S::from_f64(LAYER_NORM_EPS)).sqrt();
            for (o, &x) in out.data[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (x - mean) * is;
            }
            inv_std.push(is);
        }
        let ng = self.ng(a);
        let v = self.push(out, Op::LayerNormRows(a), ng);
        self.nodes[v.0].aux = inv_std;
        v
    }

    /// Mean over consecutive row blocks of `block` rows: `(nb·block)×c → nb×c`.
    pub fn block_mean_rows(&mut self, a: Var, block: usize) -> Result<Var> {
        let am = self.value(a);
        if block == 0 || am.rows % block != 0 {
            return Err(Error::Shape(format!(
                "block_mean_rows: {} rows not divisible by block {}",
                am.rows, block
            )));
        }
        let (nb, c) = (am.rows / block, am.cols);
        let inv = 1.0 / block as f64;
        let mut out: Mat<S> = Mat::zeros(nb, c);
        for b in 0..nb {
            for r in 0..block {
                let row = am.row(b * block + r);
                for (o, &x) in out.data[b * c..(b + 1) * c].iter_mut().zip(row) {
                    *o += x;
                }
            }
            for o in &mut out.data[b * c..(b + 1) * c] {
                *o = o.scale(inv);
            }
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::BlockMeanRows(a, block), ng))
    }

    /// Repeats a `1×c` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let am = self.value(a);
        if am.rows != 1 {
            return Err(Error::Shape(format!("broadcast_rows needs one row, got {}", am.rows)));
        }
        let mut data = Vec::with_capacity(rows * am.cols);
        for _ in 0..rows {
            data.extend_from_slice(&am.data);
        }
        let out = Mat {
            rows,
            cols: am.cols,
            data,
        };
        let ng = self.ng(a);
        Ok(self.push(out, Op::BroadcastRows(a), ng))
    }

    /// Row `r` of the output is row `indices[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let am = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= am.rows) {
            return Err(Error::Shape(format!("gather_rows: index {bad} of {} rows", am.rows)));
        }
        let mut data = Vec::with_capacity(indices.len() * am.cols);
        for &i in &indices {
            data.extend_from_slice(am.row(i));
        }
        let out = Mat {
            rows: indices.len(),
            cols: am.cols,
            data,
        };
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, indices), ng))
    }

    /// 3×3 zero-padded patch extraction. Input is `(height·width)×C` with
    /// pixel `(y, x)` at row `y·width + x`; output is `(height·width)×9C`
    /// with column `(ky·3 + kx)·C + c`.
    pub fn im2col_3x3(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        let xm = self.value(x);
        if xm.rows != height * width {
            return Err(Error::Shape(format!(
                "im2col: {} rows for a {}x{} image",
                xm.rows, height, width
            )));
        }
        let c = xm.cols;
        let mut out = Mat::zeros(height * width, 9 * c);
        for y in 0..height {
            for xx in 0..width {
                let orow = (y * width + xx) * 9 * c;
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= height as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= width as isize {
                            continue;
                        }
                        let src = (sy as usize * width + sx as usize) * c;
                        let dst = orow + (ky * 3 + kx) * c;
                        out.data[dst..dst + c].copy_from_slice(&xm.data[src..src + c]);
                    }
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Im2Col3x3 { x, height, width }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pm = self.value(p);
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + pm.cols].copy_from_slice(pm.row(r));
            }
            offset += pm.cols;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::Shape("concat_rows: column counts differ".into()));
        }
        let rows = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Mat { rows, cols, data }, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Element-wise product with a constant mask (dropout).
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let am = self.value(a);
        if mask.len() != am.data.len() {
            return Err(Error::Shape("mul_const: mask length".into()));
        }
        let out = Mat {
            rows: am.rows,
            cols: am.cols,
            data: am.data.iter().zip(&mask).map(|(&x, &m)| x.scale(m)).collect(),
        };
        let ng = self.ng(a);
        Ok(self.push(out, Op::MulConst(a, mask), ng))
    }

    /// Per-block `a_b · b_bᵀ` over blocks of `block` rows: `(nb·T)×k, (nb·T)×k → (nb·T)×T`.
    pub fn block_matmul_nt(&mut self, a: Var, b: Var, block: usize) -> Result<Var> {
        self.same_shape(a, b, "block_matmul_nt")?;
        let (am, bm) = (self.value(a), self.value(b));
        if block == 0 || am.rows % block != 0 {
            return Err(Error::Shape("block_matmul_nt: rows not divisible by block".into()));
        }
        let (k, nb) = (am.cols, am.rows / block);
        let mut out = Mat::zeros(am.rows, block);
        for bb in 0..nb {
            for i in 0..block {
                let arow = am.row(bb * block + i);
                for j in 0..block {
                    let brow = bm.row(bb * block + j);
                    let mut acc = S::zero();
                    for (&x, &y) in arow.iter().zip(brow) {
                        acc += x * y;
                    }
                    out.data[(bb * block + i) * block + j] = acc;
                }
            }
        }
        let _ = k;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::BlockMatMulNT(a, b, block), ng))
    }

    /// Per-block `p_b · v_b`: `(nb·T)×T, (nb·T)×k → (nb·T)×k`.
    pub fn block_matmul(&mut self, p: Var, v: Var, block: usize) -> Result<Var> {
        let (pm, vm) = (self.value(p), self.value(v));
        if pm.cols != block || pm.rows != vm.rows || pm.rows % block != 0 {
            return Err(Error::Shape(format!(
                "block_matmul: {}x{} · {}x{} with block {}",
                pm.rows, pm.cols, vm.rows, vm.cols, block
            )));
        }
        let (k, nb) = (vm.cols, pm.rows / block);
        let mut out = Mat::zeros(vm.rows, k);
        for bb in 0..nb {
            for i in 0..block {
                let r = bb * block + i;
                for j in 0..block {
                    let pij = pm.data[r * block + j];
                    let vrow = vm.row(bb * block + j);
                    for (o, &x) in out.data[r * k..(r + 1) * k].iter_mut().zip(vrow) {
                        *o += pij * x;
                    }
                }
            }
        }
        let ng = self.ng(p) || self.ng(v);
        Ok(self.push(out, Op::BlockMatMul(p, v, block), ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut total = S::zero();
        for &x in &self.value(a).data {
            total += x;
        }
        let ng = self.ng(a);
        self.push(
            Mat {
                rows: 1,
                cols: 1,
                data: vec![total],
            },
            Op::SumAll(a),
            ng,
        )
    }

    /// Mean squared error over every entry.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let (pm, tm) = (self.value(pred), self.value(target));
        let mut total = S::zero();
        for (&p, &t) in pm.data.iter().zip(&tm.data) {
            let d = p - t;
            total += d * d;
        }
        let total = total.scale(1.0 / pm.data.len() as f64);
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(
            Mat {
                rows: 1,
                cols: 1,
                data: vec![total],
            },
            Op::Mse(pred, target),
            ng,
        ))
    }

    /// Backpropagates from a `1×1` node. Returns per-node gradients; leaves
    /// that did not influence the output receive zeros.
    pub fn backward(&self, output: Var) -> Result<Gradients<S>> {
        let om = self.value(output);
        if om.rows * om.cols != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {}x{}",
                om.rows, om.cols
            )));
        }
        let mut grads: Vec<Option<Mat<S>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Mat {
            rows: 1,
            cols: 1,
            data: vec![S::one()],
        });
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<S>, g: &Mat<S>, grads: &mut [Option<Mat<S>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut Mat<S>)| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = &mut grads[v.0];
            if slot.is_none() {
                let m = &self.nodes[v.0].value;
                *slot = Some(Mat::zeros(m.rows, m.cols));
            }
            f(slot.as_mut().unwrap());
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (am, bm) = (val(*a), val(*b));
                let (n, k, m) = (am.rows, am.cols, bm.cols);
                if ng(*a) {
                    acc(*a, &mut |ga| {
                        for i in 0..n {
                            let grow = &g.data[i * m..(i + 1) * m];
                            for kk in 0..k {
                                let brow = &bm.data[kk * m..(kk + 1) * m];
                                let mut s = S::zero();
                                for (&x, &yv) in grow.iter().zip(brow) {
                                    s += x * yv;
                                }
                                ga.data[i * k + kk] += s;
                            }
                        }
                    });
                }
                if ng(*b) {
                    acc(*b, &mut |gb| {
                        for i in 0..n {
                            let grow = &g.data[i * m..(i + 1) * m];
                            for kk in 0..k {
                                let aik = am.data[i * k + kk];
                                for (o, &x) in gb.data[kk * m..(kk + 1) * m].iter_mut().zip(grow) {
                                    *o += aik * x;
                                }
                            }
                        }
                    });
                }
            }
            Op::MatMulNT(a, b) => {
                let (am, bm) = (val(*a), val(*b));
                let (n, k, m) = (am.rows, am.cols, bm.rows);
                if ng(*a) {
                    acc(*a, &mut |ga| {
                        for i in 0..n {
                            for j in 0..m {
                                let gij = g.data[i * m + j];
                                for (o, &x) in ga.data[i * k..(i + 1) * k].iter_mut().zip(bm.row(j)) {
                                    *o += gij * x;
                                }
                            }
                        }
                    });
                }
                if ng(*b) {
                    acc(*b, &mut |gb| {
                        for i in 0..n {
                            for j in 0..m {
                                let gij = g.data[i * m + j];
                                for (o, &x) in gb.data[j * k..(j + 1) * k].iter_mut().zip(am.row(i)) {
                                    *o += gij * x;
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for (o, &x) in gb.data.iter_mut().zip(&g.data) {
                        *o += -x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (am, bm) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((o, &x), &w) in ga.data.iter_mut().zip(&g.data).zip(&bm.data) {
                        *o += x * w;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &x), &w) in gb.data.iter_mut().zip(&g.data).zip(&am.data) {
                        *o += x * w;
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*row, &mut |gr| {
                    let c = gr.cols;
                    for (i, &x) in g.data.iter().enumerate() {
                        gr.data[i % c] += x;
                    }
                });
            }
            Op::MulRow(a, row) => {
                let (am, rm) = (val(*a), val(*row));
                let c = rm.cols;
                acc(*a, &mut |ga| {
                    for (i, (o, &x)) in ga.data.iter_mut().zip(&g.data).enumerate() {
                        *o += x * rm.data[i % c];
                    }
                });
                acc(*row, &mut |gr| {
                    for (i, (&x, &w)) in g.data.iter().zip(&am.data).enumerate() {
                        gr.data[i % c] += x * w;
                    }
                });
            }
            Op::Scale(a, k) => {
                acc(*a, &mut |ga| {
                    for (o, &x) in ga.data.iter_mut().zip(&g.data) {
                        *o += x.scale(*k);
                    }
                });
            }
            Op::Sigmoid(a) => {
                acc(*a, &mut |ga| {
                    for ((o, &x), &s) in ga.data.iter_mut().zip(&g.data).zip(&y.data) {
                        *o += x * s * (S::one() - s);
                    }
                });
            }
            Op::Relu(a) => {
                let am = val(*a);
                acc(*a, &mut |ga| {
                    for ((o, &x), &inp) in ga.data.iter_mut().zip(&g.data).zip(&am.data) {
                        if inp.re() > 0.0 {
                            *o += x;
                        }
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let c = y.cols;
                acc(*a, &mut |ga| {
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mut dot = S::zero();
                        for (&gv, &yv) in gr.iter().zip(yr) {
                            dot += gv * yv;
                        }
                        for ((o, &gv), &yv) in ga.data[r * c..(r + 1) * c].iter_mut().zip(gr).zip(yr) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNormRows(a) => {
                let c = y.cols;
                let inv_n = 1.0 / c as f64;
                acc(*a, &mut |ga| {
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mut mg = S::zero();
                        let mut mgy = S::zero();
                        for (&gv, &yv) in gr.iter().zip(yr) {
                            mg += gv;
                            mgy += gv * yv;
                        }
                        let mg = mg.scale(inv_n);
                        let mgy = mgy.scale(inv_n);
                        let is = node.aux[r];
                        for ((o, &gv), &yv) in ga.data[r * c..(r + 1) * c].iter_mut().zip(gr).zip(yr) {
                            *o += is * (gv - mg - yv * mgy);
                        }
                    }
                });
            }
            Op::BlockMeanRows(a, block) => {
                let inv = 1.0 / *block as f64;
                let c = y.cols;
                acc(*a, &mut |ga| {
                    for b in 0..y.rows {
                        let gr = g.row(b);
                        for r in 0..*block {
                            let row = b * block + r;
                            for (o, &x) in ga.data[row * c..(row + 1) * c].iter_mut().zip(gr) {
                                *o += x.scale(inv);
                            }
                        }
                    }
                });
            }
            Op::BroadcastRows(a) => {
                let c = y.cols;
                acc(*a, &mut |ga| {
                    for r in 0..y.rows {
                        for (o, &x) in ga.data.iter_mut().zip(&g.data[r * c..(r + 1) * c]) {
                            *o += x;
                        }
                    }
                });
            }
            Op::GatherRows(a, indices) => {
                let c = y.cols;
                acc(*a, &mut |ga| {
                    for (r, &i) in indices.iter().enumerate() {
                        for (o, &x) in ga.data[i * c..(i + 1) * c].iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).data.len();
                    acc(p, &mut |gp| add_slice(&mut gp.data, &g.data[offset..offset + n]));
                    offset += n;
                }
            }
            Op::Im2Col3x3 { x, height, width } => {
                let (height, width) = (*height, *width);
                let c = val(*x).cols;
                acc(*x, &mut |gx| {
                    for yy in 0..height {
                        for xx in 0..width {
                            let grow = (yy * width + xx) * 9 * c;
                            for ky in 0..3 {
                                let sy = yy as isize + ky as isize - 1;
                                if sy < 0 || sy >= height as isize {
                                    continue;
                                }
                                for kx in 0..3 {
                                    let sx = xx as isize + kx as isize - 1;
                                    if sx < 0 || sx >= width as isize {
                                        continue;
                                    }
                                    let dst = (sy as usize * width + sx as usize) * c;
                                    let src = grow + (ky * 3 + kx) * c;
                                    for i in 0..c {
                                        gx.data[dst + i] += g.data[src + i];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let cols = y.cols;
                let mut offset = 0;
                for &p in parts {
                    let pc = val(p).cols;
                    acc(p, &mut |gp| {
                        for r in 0..y.rows {
                            for (o, &x) in gp.data[r * pc..(r + 1) * pc]
                                .iter_mut()
                                .zip(&g.data[r * cols + offset..r * cols + offset + pc])
                            {
                                *o += x;
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::MulConst(a, mask) => {
                acc(*a, &mut |ga| {
                    for ((o, &x), &m) in ga.data.iter_mut().zip(&g.data).zip(mask) {
                        *o += x.scale(m);
                    }
                });
            }
            Op::BlockMatMulNT(a, b, block) => {
                let block = *block;
                let (am, bm) = (val(*a), val(*b));
                let (k, nb) = (am.cols, am.rows / block);
                if ng(*a) {
                    acc(*a, &mut |ga| {
                        for bb in 0..nb {
                            for i in 0..block {
                                let r = bb * block + i;
                                for j in 0..block {
                                    let gij = g.data[r * block + j];
                                    let brow = bm.row(bb * block + j);
                                    for (o, &x) in ga.data[r * k..(r + 1) * k].iter_mut().zip(brow) {
                                        *o += gij * x;
                                    }
                                }
                            }
                        }
                    });
                }
                if ng(*b) {
                    acc(*b, &mut |gb| {
                        for bb in 0..nb {
                            for i in 0..block {
                                let r = bb * block + i;
                                let arow = am.row(r);
                                for j in 0..block {
                                    let gij = g.data[r * block + j];
                                    let dst = (bb * block + j) * k;
                                    for (o, &x) in gb.data[dst..dst + k].iter_mut().zip(arow) {
                                        *o += gij * x;
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::BlockMatMul(p, v, block) => {
                let block = *block;
                let (pm, vm) = (val(*p), val(*v));
                let (k, nb) = (vm.cols, pm.rows / block);
                if ng(*p) {
                    acc(*p, &mut |gp| {
                        for bb in 0..nb {
                            for i in 0..block {
                                let r = bb * block + i;
                                let grow = g.row(r);
                                for j in 0..block {
                                    let vrow = vm.row(bb * block + j);
                                    let mut s = S::zero();
                                    for (&x, &w) in grow.iter().zip(vrow) {
                                        s += x * w;
                                    }
                                    gp.data[r * block + j] += s;
                                }
                            }
                        }
                    });
                }
                if ng(*v) {
                    acc(*v, &mut |gv| {
                        for bb in 0..nb {
                            for i in 0..block {
                                let r = bb * block + i;
                                let grow = g.row(r);
                                for j in 0..block {
                                    let pij = pm.data[r * block + j];
                                    let dst = (bb * block + j) * k;
                                    for (o, &x) in gv.data[dst..dst + k].iter_mut().zip(grow) {
                                        *o += pij * x;
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::SumAll(a) => {
                let g0 = g.data[0];
                acc(*a, &mut |ga| {
                    for o in &mut ga.data {
                        *o += g0;
                    }
                });
            }
            Op::Mse(p, t) => {
                let (pm, tm) = (val(*p), val(*t));
                let k = 2.0 / pm.data.len() as f64;
                let g0 = g.data[0];
                acc(*p, &mut |gp| {
                    for ((o, &a), &b) in gp.data.iter_mut().zip(&pm.data).zip(&tm.data) {
                        *o += g0 * (a - b).scale(k);
                    }
                });
                acc(*t, &mut |gt| {
                    for ((o, &a), &b) in gt.data.iter_mut().zip(&pm.data).zip(&tm.data) {
                        *o += g0 * (b - a).scale(k);
                    }
                });
            }
        }
    }
}

fn add_into<S: Scalar>(dst: &mut Mat<S>, src: &Mat<S>) {
    add_slice(&mut dst.data, &src.data);
}

fn add_slice<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (o, &x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Mat<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the output with respect to `v`, or `None` when `v` does
    /// not carry gradients or was not reached.
    pub fn get(&self, v: Var) -> Option<&Mat<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
