//! Deterministic `f64` core: tensors, a reverse-mode tape with dual-number
//! Hessian-vector products, conjugate gradient, and gradient descent.

pub mod cg;
pub mod diff;
pub mod graph;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use cg::{cg_solve, CgConfig, CgOutcome};
pub use diff::{eval, eval_with_grad, fd_gradient, fd_hvp, hvp, DiffFunction, Quadratic, Slot};
pub use graph::{Graph, Mat, Var};
pub use optim::{sgd_step, sgd_step_in_place};
pub use scalar::{Dual, Scalar};
pub use tensor::{rel_err, Tensor, TensorSet};
