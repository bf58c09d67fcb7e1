use crate::error::{Error, Result};
use crate::numerics::{cg_solve, eval_with_grad, hvp, sgd_step_in_place, CgConfig, CgOutcome, DiffFunction, TensorSet};

/// `steps` gradient-descent steps on `f`, whose parameters are the head
/// only; anything else `f` depends on is held fixed by construction.
pub fn inner_adapt<F: DiffFunction>(
    f: &F,
    head: &TensorSet,
    batch: &F::Batch,
    steps: usize,
    lr: f64,
) -> Result<TensorSet> {
    if steps == 0 {
        return Err(Error::Config("inner adaptation needs at least one step".into()));
    }
    let mut w = head.clone();
    for step in 0..steps {
        let (loss, grad) = eval_with_grad(f, &w, batch).map_err(|e| match e {
            Error::NumericOverflow(_) => Error::Divergence {
                phase: "inner",
                index: step,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if loss > super::DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                phase: "inner",
                index: step,
                loss,
            });
        }
        sgd_step_in_place(&mut w, &grad, lr)?;
    }
    Ok(w)
}

#[derive(Clone, Debug)]
pub struct Hypergradient {
    /// Estimate of `dΨ/dθ`, in the layout of the leading `n_theta` slots.
    pub grad: TensorSet,
    /// `∇_θ f` alone.
    pub direct: TensorSet,
    pub cg: CgOutcome,
    pub outer_loss: f64,
}

/// `∇_θ f − ∇_θ∇_ω g · v` with `(∇²_ω g + λI) v = ∇_ω f` solved by CG.
///
/// `params` holds the `n_theta` outer slots followed by the inner slots;
/// `f` and `g` must share that slot layout.
pub fn hypergradient<F: DiffFunction, G: DiffFunction>(
    f: &F,
    g: &G,
    params: &TensorSet,
    n_theta: usize,
    f_batch: &F::Batch,
    g_batch: &G::Batch,
    cg: &CgConfig,
) -> Result<Hypergradient> {
    if n_theta > params.len() {
        return Err(Error::Config(format!(
            "{n_theta} outer slots in a set of {}",
            params.len()
        )));
    }
    let (outer_loss, grad_f) = eval_with_grad(f, params, f_batch)?;
    let direct = grad_f.slice(0..n_theta);
    let rhs = grad_f.slice(n_theta..params.len());
    let wrt: Vec<usize> = (n_theta..params.len()).collect();
    let outcome = cg_solve(
        |p: &TensorSet| Ok(hvp(g, params, g_batch, &wrt, p)?.slice(n_theta..params.len())),
        &rhs,
        cg,
    )?;
    let cross = hvp(g, params, g_batch, &wrt, &outcome.solution)?.slice(0..n_theta);
    let mut grad = direct.clone();
    grad.axpy(-1.0, &cross)?;
    if !grad.all_finite() {
        return Err(Error::NumericOverflow("non-finite hypergradient".into()));
    }
    Ok(Hypergradient {
        grad,
        direct,
        cg: outcome,
        outer_loss,
    })
}
