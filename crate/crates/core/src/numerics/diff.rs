//! Differentiable parameterized functions: loss + gradient, Hessian-vector
//! products, and central finite-difference references.

use super::graph::{Graph, Mat, Var};
use super::scalar::{Dual, Scalar};
use super::tensor::{Tensor, TensorSet};
use crate::error::{Error, Result};

/// Named parameter slot with its expected shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Slot {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
        }
    }
}

/// A scalar loss of named parameters, evaluated on a batch by building a
/// graph. Implementations must be pure in `(params, batch)`.
pub trait DiffFunction {
    type Batch: ?Sized;

    fn slots(&self) -> Vec<Slot>;

    /// Builds the loss on `g` from parameter leaves given in slot order,
    /// returning a `1×1` node.
    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], batch: &Self::Batch) -> Result<Var>;
}

fn check_params(slots: &[Slot], params: &TensorSet) -> Result<()> {
    if slots.len() != params.len() {
        return Err(Error::Config(format!(
            "function has {} parameter slots, got {}",
            slots.len(),
            params.len()
        )));
    }
    for (slot, t) in slots.iter().zip(params.tensors()) {
        if slot.shape != t.shape() {
            return Err(Error::Config(format!(
                "slot {} expects shape {:?}, got {:?}",
                slot.name,
                slot.shape,
                t.shape()
            )));
        }
    }
    Ok(())
}

fn leaf<S: Scalar>(t: &Tensor) -> Mat<S> {
    let (r, c) = t.as_matrix_dims();
    Mat::from_f64(r, c, t.data())
}

fn check_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NumericOverflow(format!("loss evaluated to {loss}")))
    }
}

/// Loss only.
pub fn eval<F: DiffFunction>(f: &F, params: &TensorSet, batch: &F::Batch) -> Result<f64> {
    check_params(&f.slots(), params)?;
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| g.constant(leaf(t))).collect();
    let out = f.build(&mut g, &vars, batch)?;
    check_loss(g.value(out).data[0])
}

/// Loss and its gradient with respect to every slot.
pub fn eval_with_grad<F: DiffFunction>(f: &F, params: &TensorSet, batch: &F::Batch) -> Result<(f64, TensorSet)> {
    check_params(&f.slots(), params)?;
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| g.param(leaf(t))).collect();
    let out = f.build(&mut g, &vars, batch)?;
    let loss = check_loss(g.value(out).data[0])?;
    let grads = g.backward(out)?;
    let mut result = params.zeros_like();
    for (dst, v) in result.tensors_mut().iter_mut().zip(&vars) {
        if let Some(m) = grads.get(*v) {
            dst.data_mut().copy_from_slice(&m.data);
        }
    }
    if !result.all_finite() {
        return Err(Error::NumericOverflow("non-finite gradient".into()));
    }
    Ok((loss, result))
}

/// Hessian-vector product by forward-over-reverse differentiation.
///
/// `direction` supplies tangents for the slots listed in `wrt` (in that
/// order); all other slots get a zero tangent. The returned set covers
/// every slot: entry `s` equals `Σ_{w∈wrt} ∂²f/∂s∂w · v_w`, so the `wrt`
/// slots hold `∇²_w f · v` and the rest hold the mixed term `∇_s∇_w f · v`.
pub fn hvp<F: DiffFunction>(
    f: &F,
    params: &TensorSet,
    batch: &F::Batch,
    wrt: &[usize],
    direction: &TensorSet,
) -> Result<TensorSet> {
    let slots = f.slots();
    check_params(&slots, params)?;
    if wrt.len() != direction.len() {
        return Err(Error::Config(format!(
            "direction has {} slots for {} differentiated slots",
            direction.len(),
            wrt.len()
        )));
    }
    let mut tangents: Vec<Option<&Tensor>> = vec![None; slots.len()];
    for (&w, t) in wrt.iter().zip(direction.tensors()) {
        if w >= slots.len() {
            return Err(Error::Config(format!("slot index {w} out of range")));
        }
        if slots[w].shape != t.shape() {
            return Err(Error::Config(format!(
                "direction for slot {} has shape {:?}, expected {:?}",
                slots[w].name,
                t.shape(),
                slots[w].shape
            )));
        }
        tangents[w] = Some(t);
    }

    let mut g = Graph::<Dual>::new();
    let vars: Vec<Var> = params
        .tensors()
        .iter()
        .zip(&tangents)
        .map(|(p, tan)| {
            let (r, c) = p.as_matrix_dims();
            let data = match tan {
                Some(t) => p.data().iter().zip(t.data()).map(|(&x, &d)| Dual::new(x, d)).collect(),
                None => p.data().iter().map(|&x| Dual::new(x, 0.0)).collect(),
            };
            g.param(Mat { rows: r, cols: c, data })
        })
        .collect();
    let out = f.build(&mut g, &vars, batch)?;
    if !g.value(out).data[0].is_finite() {
        return Err(Error::NumericOverflow("non-finite loss in hvp".into()));
    }
    let grads = g.backward(out)?;
    let mut result = params.zeros_like();
    for (dst, v) in result.tensors_mut().iter_mut().zip(&vars) {
        if let Some(m) = grads.get(*v) {
            for (o, x) in dst.data_mut().iter_mut().zip(&m.data) {
                *o = x.du;
            }
        }
    }
    if !result.all_finite() {
        return Err(Error::NumericOverflow("non-finite Hessian-vector product".into()));
    }
    Ok(result)
}

/// Central finite-difference gradient of `f` at `params`, every coordinate.
pub fn fd_gradient<F: DiffFunction>(f: &F, params: &TensorSet, batch: &F::Batch, h: f64) -> Result<TensorSet> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut work = base.clone();
    for i in 0..base.len() {
        work[i] = base[i] + h;
        probe.set_flat(&work)?;
        let plus = eval(f, &probe, batch)?;
        work[i] = base[i] - h;
        probe.set_flat(&work)?;
        let minus = eval(f, &probe, batch)?;
        work[i] = base[i];
        out.push((plus - minus) / (2.0 * h));
    }
    let mut result = params.zeros_like();
    result.set_flat(&out)?;
    Ok(result)
}

/// Central difference of gradients along a direction over the `wrt` slots:
/// `(∇f(p + h·v) − ∇f(p − h·v)) / 2h`.
pub fn fd_hvp<F: DiffFunction>(
    f: &F,
    params: &TensorSet,
    batch: &F::Batch,
    wrt: &[usize],
    direction: &TensorSet,
    h: f64,
) -> Result<TensorSet> {
    let shifted = |sign: f64| -> Result<TensorSet> {
        let mut p = params.clone();
        for (&w, t) in wrt.iter().zip(direction.tensors()) {
            for (x, d) in p.tensors_mut()[w].data_mut().iter_mut().zip(t.data()) {
                *x += sign * h * d;
            }
        }
        Ok(eval_with_grad(f, &p, batch)?.1)
    };
    let mut plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    plus.axpy(-1.0, &minus)?;
    plus.scale(1.0 / (2.0 * h));
    Ok(plus)
}

/// `0.5·ωᵀAω + cᵀω` over a single slot, with a dense constant `A`.
/// Handy for exercising solvers and the tape on closed-form problems.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub dim: usize,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl DiffFunction for Quadratic {
    type Batch = ();

    fn slots(&self) -> Vec<Slot> {
        vec![Slot::new("w", vec![self.dim])]
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], _: &()) -> Result<Var> {
        let a = g.constant_f64(self.dim, self.dim, &self.a);
        let c = g.constant_f64(1, self.dim, &self.c);
        let wa = g.matmul(params[0], a)?;
        let q = g.mul(wa, params[0])?;
        let q = g.scale(q, 0.5);
        let lin = g.mul(c, params[0])?;
        let s = g.add(q, lin)?;
        Ok(g.sum_all(s))
    }
}
