use rand::Rng;

use crate::error::Result;
use crate::numerics::{DiffFunction, Graph, Scalar, Slot, Tensor, TensorSet, Var};

/// Bilevel problem with quadratic levels over `θ ∈ R^m`, `ω ∈ R^n`:
///
/// ```text
/// g(θ, ω) = ½ ωᵀAω − ωᵀBθ
/// f(θ, ω) = ½ s‖ω − t‖² + ½ θᵀCθ
/// ```
///
/// so `ω*(θ) = A⁻¹Bθ` and `dΨ/dθ = Cθ + s·BᵀA⁻¹(ω* − t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBilevel {
    pub m: usize,
    pub n: usize,
    /// `n×n`, symmetric positive definite.
    pub a: Vec<f64>,
    /// `n×m`.
    pub b: Vec<f64>,
    pub target: Vec<f64>,
    pub outer_weight: f64,
    /// `m×m`, symmetric.
    pub theta_curvature: Vec<f64>,
}

impl QuadraticBilevel {
    /// `g = ½(ω − θ)²` (up to a θ-only term) and `f = ½ω²`.
    pub fn scalar_example() -> Self {
        Self {
            m: 1,
            n: 1,
            a: vec![1.0],
            b: vec![1.0],
            target: vec![0.0],
            outer_weight: 1.0,
            theta_curvature: vec![0.0],
        }
    }

    /// Random instance with `A = MᵀM/n + I/2`.
    pub fn random<R: Rng>(m: usize, n: usize, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| raw[k * n + i] * raw[k * n + j]).sum::<f64>() / n as f64;
            }
            a[i * n + i] += 0.5;
        }
        let raw_c: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                c[i * m + j] = 0.5 * (raw_c[i * m + j] + raw_c[j * m + i]);
            }
        }
        Self {
            m,
            n,
            a,
            b: (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            target: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            outer_weight: rng.gen_range(0.5..2.0),
            theta_curvature: c,
        }
    }

    pub fn params(&self, theta: &[f64], omega: &[f64]) -> TensorSet {
        TensorSet::from_pairs(vec![
            ("theta".into(), Tensor::vector(theta.to_vec()).expect("finite theta")),
            ("omega".into(), Tensor::vector(omega.to_vec()).expect("finite omega")),
        ])
    }

    pub fn inner(&self) -> InnerQuadratic<'_> {
        InnerQuadratic(self)
    }

    pub fn outer(&self) -> OuterQuadratic<'_> {
        OuterQuadratic(self)
    }

    fn slots(&self) -> Vec<Slot> {
        vec![Slot::new("theta", vec![self.m]), Slot::new("omega", vec![self.n])]
    }
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = x[i * cols + j];
        }
    }
    t
}

/// `½ xᵀMx` for a `1×k` row `x`.
fn half_quad<S: Scalar>(g: &mut Graph<S>, x: Var, m: &[f64], k: usize) -> Result<Var> {
    let mm = g.constant_f64(k, k, m);
    let xm = g.matmul(x, mm)?;
    let p = g.mul(xm, x)?;
    let s = g.sum_all(p);
    Ok(g.scale(s, 0.5))
}

pub struct InnerQuadratic<'a>(&'a QuadraticBilevel);

impl DiffFunction for InnerQuadratic<'_> {
    type Batch = ();

    fn slots(&self) -> Vec<Slot> {
        self.0.slots()
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], _: &()) -> Result<Var> {
        let q = self.0;
        let (theta, omega) = (params[0], params[1]);
        let quad = half_quad(g, omega, &q.a, q.n)?;
        let bt = g.constant_f64(q.m, q.n, &transpose(&q.b, q.n, q.m));
        let tb = g.matmul(theta, bt)?;
        let cross = g.mul(tb, omega)?;
        let cross = g.sum_all(cross);
        g.sub(quad, cross)
    }
}

pub struct OuterQuadratic<'a>(&'a QuadraticBilevel);

impl DiffFunction for OuterQuadratic<'_> {
    type Batch = ();

    fn slots(&self) -> Vec<Slot> {
        self.0.slots()
    }

    fn build<S: Scalar>(&self, g: &mut Graph<S>, params: &[Var], _: &()) -> Result<Var> {
        let q = self.0;
        let (theta, omega) = (params[0], params[1]);
        let t = g.constant_f64(1, q.n, &q.target);
        let r = g.sub(omega, t)?;
        let sq = g.mul(r, r)?;
        let sq = g.sum_all(sq);
        let fit = g.scale(sq, 0.5 * q.outer_weight);
        let reg = half_quad(g, theta, &q.theta_curvature, q.m)?;
        g.add(fit, reg)
    }
}
