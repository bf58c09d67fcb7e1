//! Bilevel meta-training: heads adapt per task on support data, the shared
//! body follows implicit hypergradients of the query loss, and a full
//! fine-tune adapts the result to a target task.

mod bilevel;
mod quadratic;
mod trainer;

pub use bilevel::{hypergradient, inner_adapt, Hypergradient};
pub use quadratic::QuadraticBilevel;
pub use trainer::{
    finetune, mean_head, meta_train, EpochRecord, FinetuneConfig, FinetuneOutcome, MetaConfig, MetaState, MetaTask,
};

/// Loss level treated as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;
