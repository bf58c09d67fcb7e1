//! Differentiating a small custom loss with the tape: gradient, finite
//! difference check, Hessian-vector product and a few SGD steps.

use cellcast::numerics::{
    eval_with_grad, fd_gradient, fd_hvp, hvp, rel_err, sgd_step_in_place, DiffFunction, Graph, Scalar, Slot, Tensor,
    TensorSet, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logistic regression scored with squared error: `mse(σ(Xw + b), y)`.
struct Logistic {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
}

impl DiffFunction for Logistic {
    type Batch = ();

    fn slots(&self) -> Vec<Slot> {
        vec![Slot::new("w", vec![self.p, 1]), Slot::new("b", vec![1, 1])]
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, p: &[Var], _: &()) -> cellcast::Result<Var> {
        let x = g.constant_f64(self.n, self.p, &self.x);
        let y = g.constant_f64(self.n, 1, &self.y);
        let z = g.matmul(x, p[0])?;
        let z = g.add_row(z, p[1])?;
        let s = g.sigmoid(z);
        g.mse(s, y)
    }
}

fn main() -> cellcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, p) = (64, 5);
    let truth: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = x
        .chunks(p)
        .map(|row| {
            let z: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let f = Logistic { x, y, n, p };

    let mut params = TensorSet::from_pairs(vec![
        ("w".into(), Tensor::zeros(vec![p, 1])),
        ("b".into(), Tensor::zeros(vec![1, 1])),
    ]);
    let (loss, grad) = eval_with_grad(&f, &params, &())?;
    let fd = fd_gradient(&f, &params, &(), 1e-5)?;
    println!(
        "loss {loss:.5}, gradient vs central differences: rel-err {:.1e}",
        rel_err(&grad.to_flat(), &fd.to_flat(), 1e-12)
    );

    let v = TensorSet::from_pairs(vec![("w".into(), Tensor::filled(vec![p, 1], 1.0 / (p as f64).sqrt()))]);
    let exact = hvp(&f, &params, &(), &[0], &v)?;
    let approx = fd_hvp(&f, &params, &(), &[0], &v, 1e-5)?;
    println!(
        "Hessian-vector product (dual numbers) vs differenced gradients: rel-err {:.1e}",
        rel_err(&exact.to_flat(), &approx.to_flat(), 1e-12)
    );

    for step in 1..=300 {
        let (loss, grad) = eval_with_grad(&f, &params, &())?;
        sgd_step_in_place(&mut params, &grad, 2.0)?;
        if step % 75 == 0 {
            println!("step {step:>3}  loss {loss:.5}");
        }
    }
    let w = params.get("w").unwrap().data();
    let cos = w.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>()
        / (w.iter().map(|a| a * a).sum::<f64>().sqrt() * truth.iter().map(|a| a * a).sum::<f64>().sqrt());
    println!("cosine between learned and generating weights: {cos:.3}");
    Ok(())
}
