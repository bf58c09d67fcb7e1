//! Conjugate-gradient solver over [`TensorSet`] vectors.

use serde::{Deserialize, Serialize};

use super::tensor::TensorSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    /// Iteration cap `Q`.
    pub max_iters: usize,
    /// Stop once `‖A v − b‖ ≤ residual_tol`.
    pub residual_tol: f64,
    /// Added to the operator diagonal: solves `(A + λI) v = b`.
    pub damping: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            residual_tol: 1e-10,
            damping: 1e-4,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("CG needs at least one iteration".into()));
        }
        if !(self.residual_tol >= 0.0) || !(self.damping >= 0.0) {
            return Err(Error::Config("CG tolerance and damping must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: TensorSet,
    pub iterations: usize,
    /// Recurrence residual norm after each iteration, starting with `‖b‖`.
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

/// Solves `(A + λI) v = b` from `v₀ = 0`. Returns the iterate with the
/// smallest residual seen when the tolerance is not reached within
/// `max_iters` steps.
pub fn cg_solve<F>(mut apply_a: F, b: &TensorSet, cfg: &CgConfig) -> Result<CgOutcome>
where
    F: FnMut(&TensorSet) -> Result<TensorSet>,
{
    cfg.validate()?;
    if !b.all_finite() {
        return Err(Error::NumericOverflow("CG right-hand side is not finite".into()));
    }
    let mut x = b.zeros_like();
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r)?;
    let mut norms = vec![rr.sqrt()];
    let mut best = (rr.sqrt(), x.clone());
    let mut iterations = 0;

    while iterations < cfg.max_iters && rr.sqrt() > cfg.residual_tol {
        let mut ap = apply_a(&p)?;
        if cfg.damping > 0.0 {
            ap.axpy(cfg.damping, &p)?;
        }
        let pap = ap.dot(&p)?;
        if !pap.is_finite() {
            return Err(Error::NumericOverflow(format!("CG curvature p·Ap = {pap}")));
        }
        if pap <= 0.0 {
            // Operator is not positive along p; nothing further to gain.
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        let rr_next = r.dot(&r)?;
        if !rr_next.is_finite() || !x.all_finite() {
            return Err(Error::NumericOverflow("non-finite CG iterate".into()));
        }
        iterations += 1;
        norms.push(rr_next.sqrt());
        if rr_next.sqrt() < best.0 {
            best = (rr_next.sqrt(), x.clone());
        }
        let beta = rr_next / rr;
        rr = rr_next;
        let mut p_next = r.clone();
        p_next.axpy(beta, &p)?;
        p = p_next;
    }

    let converged = rr.sqrt() <= cfg.residual_tol;
    let solution = if converged { x } else { best.1 };
    Ok(CgOutcome {
        solution,
        iterations,
        residual_norms: norms,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn vecset(v: Vec<f64>) -> TensorSet {
        TensorSet::from_pairs(vec![("v".into(), Tensor::vector(v).unwrap())])
    }

    fn diag(d: Vec<f64>) -> impl FnMut(&TensorSet) -> Result<TensorSet> {
        move |p: &TensorSet| {
            let out: Vec<f64> = p.to_flat().iter().zip(&d).map(|(x, a)| x * a).collect();
            Ok(vecset(out))
        }
    }

    fn exact() -> CgConfig {
        CgConfig {
            max_iters: 10,
            residual_tol: 1e-12,
            damping: 0.0,
        }
    }

    #[test]
    fn identity_system_in_one_iteration() {
        let out = cg_solve(diag(vec![1.0, 1.0]), &vecset(vec![4.0, 5.0]), &exact()).unwrap();
        assert_eq!(out.solution.to_flat(), vec![4.0, 5.0]);
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }

    #[test]
    fn diagonal_solve() {
        let out = cg_solve(diag(vec![2.0, 4.0]), &vecset(vec![2.0, 8.0]), &exact()).unwrap();
        let v = out.solution.to_flat();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let cfg = CgConfig {
            max_iters: 2,
            residual_tol: 0.0,
            damping: 0.0,
        };
        let out = cg_solve(diag(vec![1.0, 2.0, 3.0, 4.0]), &vecset(vec![1.0; 4]), &cfg).unwrap();
        assert_eq!(out.iterations, 2);
        assert!(!out.converged);
    }

    #[test]
    fn damping_shifts_the_operator() {
        let cfg = CgConfig {
            max_iters: 5,
            residual_tol: 1e-14,
            damping: 1.0,
        };
        let out = cg_solve(diag(vec![1.0]), &vecset(vec![4.0]), &cfg).unwrap();
        assert!((out.solution.to_flat()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rhs_is_rejected() {
        let mut b = vecset(vec![1.0]);
        b.tensors_mut()[0].data_mut()[0] = f64::INFINITY;
        assert!(matches!(
            cg_solve(diag(vec![1.0]), &b, &exact()),
            Err(Error::NumericOverflow(_))
        ));
    }
}
