//! First-order parameter updates.

use super::tensor::TensorSet;
use crate::error::{Error, Result};

/// Plain gradient descent: `params − lr·grads`, element-wise.
pub fn sgd_step(params: &TensorSet, grads: &TensorSet, lr: f64) -> Result<TensorSet> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    let mut out = params.clone();
    out.axpy(-lr, grads)?;
    Ok(out)
}

/// In-place variant of [`sgd_step`].
pub fn sgd_step_in_place(params: &mut TensorSet, grads: &TensorSet, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    params.axpy(-lr, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn one(v: f64) -> TensorSet {
        TensorSet::from_pairs(vec![("w".into(), Tensor::vector(vec![v]).unwrap())])
    }

    #[test]
    fn single_step() {
        assert_eq!(sgd_step(&one(1.0), &one(2.0), 0.5).unwrap().to_flat(), vec![0.0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        assert_eq!(sgd_step(&one(1.25), &one(0.0), 0.3).unwrap(), one(1.25));
    }

    #[test]
    fn contracts_on_shifted_quadratic() {
        // 0.5(ω − 3)², gradient ω − 3; error shrinks by (1 − lr) per step.
        let mut w = one(0.0);
        for _ in 0..50 {
            let g = one(w.to_flat()[0] - 3.0);
            w = sgd_step(&w, &g, 0.1).unwrap();
        }
        let err = (w.to_flat()[0] - 3.0).abs();
        // Closed form: 3·0.9⁵⁰ ≈ 1.546e-2.
        assert!((err - 3.0 * 0.9f64.powi(50)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_learning_rates() {
        assert!(sgd_step(&one(1.0), &one(1.0), 0.0).is_err());
        assert!(sgd_step(&one(1.0), &one(1.0), -1.0).is_err());
    }
}
