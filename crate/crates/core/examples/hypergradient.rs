//! Implicit hypergradients on a quadratic bilevel problem, where the exact
//! answer is available in closed form, and how the CG budget affects them.

use cellcast::meta::{hypergradient, QuadraticBilevel};
use cellcast::numerics::{eval_with_grad, rel_err, CgConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cellcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (m, n) = (4, 8);
    let q = QuadraticBilevel::random(m, n, &mut rng);
    let theta = vec![0.5, -1.0, 0.25, 2.0];

    // gradient descent on ω with θ frozen
    let mut params = q.params(&theta, &vec![0.0; n]);
    for _ in 0..400 {
        let (_, grad) = eval_with_grad(&q.inner(), &params, &())?;
        let g = grad.tensors()[1].data().to_vec();
        for (w, d) in params.tensors_mut()[1].data_mut().iter_mut().zip(g) {
            *w -= 0.5 * d;
        }
    }
    let (inner_loss, grad) = eval_with_grad(&q.inner(), &params, &())?;
    println!(
        "inner loss {inner_loss:.6}, |grad_omega| {:.1e}",
        grad.slice(1..2).norm()
    );

    let reference = hypergradient(
        &q.outer(),
        &q.inner(),
        &params,
        1,
        &(),
        &(),
        &CgConfig {
            max_iters: n,
            residual_tol: 0.0,
            damping: 0.0,
        },
    )?;
    println!("outer loss at the adapted head: {:.6}", reference.outer_loss);
    println!("hypergradient   {:?}", rounded(&reference.grad.to_flat()));
    println!("direct term     {:?}", rounded(&reference.direct.to_flat()));

    println!("\n Q  damping  CG its  rel-err vs exact solve");
    for (iters, damping) in [(1, 0.0), (2, 0.0), (4, 0.0), (8, 0.0), (10, 1e-4), (10, 1e-1)] {
        let h = hypergradient(
            &q.outer(),
            &q.inner(),
            &params,
            1,
            &(),
            &(),
            &CgConfig {
                max_iters: iters,
                residual_tol: 0.0,
                damping,
            },
        )?;
        let e = rel_err(&h.grad.to_flat(), &reference.grad.to_flat(), 1e-12);
        println!("{iters:>2}  {damping:<7}  {:<6}  {e:.2e}", h.cg.iterations);
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
