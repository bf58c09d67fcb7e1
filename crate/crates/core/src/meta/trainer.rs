use serde::{Deserialize, Serialize};

use super::bilevel::inner_adapt;
use super::DIVERGENCE_LOSS;
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::model::{BodyPass, HeadLoss, Mode, ModelConfig, ModelLoss, ParameterSet, WindowBatch};
use crate::numerics::{cg_solve, eval, eval_with_grad, hvp, rng, sgd_step_in_place, CgConfig, TensorSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { steps: 200, lr: 0.001 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub cg: CgConfig,
    pub outer_lr: f64,
    pub epochs: usize,
    /// Re-draw every task head at the start of each epoch instead of
    /// carrying it over.
    pub reinit_heads: bool,
    pub finetune: FinetuneConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_steps: 5,
            inner_lr: 0.01,
            cg: CgConfig::default(),
            outer_lr: 0.001,
            epochs: 200,
            reinit_heads: false,
            finetune: FinetuneConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 || self.epochs == 0 {
            return Err(Error::Config("inner steps and epochs must be at least 1".into()));
        }
        if !(self.inner_lr > 0.0) || !(self.outer_lr >= 0.0) || !(self.finetune.lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        self.cg.validate()
    }
}

/// Support and query batches of one auxiliary task.
#[derive(Clone, Debug)]
pub struct MetaTask {
    pub name: String,
    pub support: WindowBatch,
    pub query: WindowBatch,
}

impl MetaTask {
    pub fn new(cfg: &ModelConfig, task: &TaskDataset) -> Result<Self> {
        Ok(Self {
            name: task.name.clone(),
            support: WindowBatch::new(cfg, &task.support, &task.adjacency)?,
            query: WindowBatch::new(cfg, &task.query, &task.adjacency)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over tasks of the query loss at the adapted heads.
    pub query_loss: f64,
    /// Mean over tasks of the support loss after adaptation.
    pub support_loss: f64,
    pub hypergradient_norm: f64,
    /// CG iterations per task.
    pub cg_iterations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaState {
    pub body: TensorSet,
    pub heads: Vec<TensorSet>,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Per-slot mean of the task heads.
pub fn mean_head(heads: &[TensorSet]) -> Result<TensorSet> {
    let first = heads
        .first()
        .ok_or_else(|| Error::Config("no heads to average".into()))?;
    let mut out = first.zeros_like();
    for h in heads {
        out.axpy(1.0 / heads.len() as f64, h)?;
    }
    Ok(out)
}

fn task_head_seed(seed: u64, task: usize, epoch: usize) -> u64 {
    rng::derive(seed, &[0x4ead, task as u64, epoch as u64])
}

/// Runs `cfg.epochs` bilevel epochs from `init.body`. Each epoch adapts
/// every task head on its support set, estimates the hypergradient of the
/// mean query loss and takes one body step. The network runs in eval mode
/// throughout.
pub fn meta_train(
    model: &ModelConfig,
    cfg: &MetaConfig,
    tasks: &[MetaTask],
    init: &ParameterSet,
    seed: u64,
) -> Result<MetaState> {
    cfg.validate()?;
    init.check(model)?;
    if tasks.is_empty() {
        return Err(Error::Config("meta-training needs at least one task".into()));
    }
    let head_loss = HeadLoss { cfg: model.clone() };
    let model_loss = ModelLoss::eval_mode(model);
    let n = tasks.len() as f64;
    let mut state = MetaState {
        body: init.body.clone(),
        heads: (0..tasks.len())
            .map(|i| ParameterSet::init_head(model, task_head_seed(seed, i, 0)))
            .collect(),
        epoch: 0,
        history: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let mut hyper = state.body.zeros_like();
        let (mut q_total, mut s_total) = (0.0, 0.0);
        let mut cg_iterations = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            if cfg.reinit_heads && epoch > 0 {
                state.heads[i] = ParameterSet::init_head(model, task_head_seed(seed, i, epoch));
            }
            let pass = BodyPass::new(model, &state.body, &task.support, Mode::Eval)?;
            let hb = pass.head_batch()?;
            let head = inner_adapt(&head_loss, &state.heads[i], &hb, cfg.inner_steps, cfg.inner_lr)?;
            s_total += eval(&head_loss, &head, &hb)?;

            let full = state.body.concat(&head);
            let (q_loss, grad) = eval_with_grad(&model_loss, &full, &task.query).map_err(|e| diverged(e, epoch))?;
            let nb = state.body.len();
            let grad_body = grad.slice(0..nb);
            let grad_head = grad.slice(nb..grad.len());
            let solve = cg_solve(
                |p: &TensorSet| hvp(&head_loss, &head, &hb, &[0, 1, 2], p),
                &grad_head,
                &cfg.cg,
            )?;
            cg_iterations.push(solve.iterations);
            let cross = pass.cross_term(&head, &solve.solution)?;

            hyper.axpy(1.0 / n, &grad_body)?;
            hyper.axpy(-1.0 / n, &cross)?;
            q_total += q_loss;
            state.heads[i] = head;
        }
        let query_loss = q_total / n;
        if !query_loss.is_finite() || query_loss > DIVERGENCE_LOSS || !hyper.all_finite() {
            return Err(Error::Divergence {
                phase: "meta-train",
                index: epoch,
                loss: query_loss,
            });
        }
        if cfg.outer_lr > 0.0 {
            sgd_step_in_place(&mut state.body, &hyper, cfg.outer_lr)?;
        }
        state.epoch = epoch + 1;
        state.history.push(EpochRecord {
            epoch,
            query_loss,
            support_loss: s_total / n,
            hypergradient_norm: hyper.norm(),
            cg_iterations,
        });
    }
    Ok(state)
}

fn diverged(e: Error, index: usize) -> Error {
    match e {
        Error::NumericOverflow(_) => Error::Divergence {
            phase: "meta-train",
            index,
            loss: f64::NAN,
        },
        other => other,
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub params: ParameterSet,
    /// Training loss before each step (dropout active when configured).
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on body and head together. Step `k` draws
/// its dropout masks from a seed derived from `seed` and `k`.
pub fn finetune(
    model: &ModelConfig,
    params: &ParameterSet,
    batch: &WindowBatch,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    params.check(model)?;
    if cfg.steps > 0 && !(cfg.lr > 0.0) {
        return Err(Error::Config("fine-tune learning rate must be positive".into()));
    }
    let mut all = params.all();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mode = if model.dropout > 0.0 {
            Mode::Train {
                seed: rng::derive(seed, &[0xf1e7, step as u64]),
            }
        } else {
            Mode::Eval
        };
        let f = ModelLoss {
            cfg: model.clone(),
            mode,
        };
        let (loss, grad) = eval_with_grad(&f, &all, batch).map_err(|e| match e {
            Error::NumericOverflow(_) => Error::Divergence {
                phase: "finetune",
                index: step,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                phase: "finetune",
                index: step,
                loss,
            });
        }
        losses.push(loss);
        sgd_step_in_place(&mut all, &grad, cfg.lr)?;
    }
    Ok(FinetuneOutcome {
        params: ParameterSet::from_all(model, all)?,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MultimodalWindow, SpatialGraph};
    use crate::model::HeadKind;
    use crate::numerics::Tensor;
    use rand::Rng;
    use std::sync::Arc;

    fn small_model() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            heads: 2,
            blocks: 1,
            dropout: 0.0,
            cnn_channels: 2,
            closeness: 2,
            period: 2,
            cells: 3,
            text_dims: 2,
            image: [3, 3, 1],
            head: HeadKind::Matrix,
        }
    }

    /// Targets are a fixed linear function of the closeness inputs.
    fn linear_task(cfg: &ModelConfig, n: usize, seed: u64) -> WindowBatch {
        let mut r = rng::stream(seed, 0);
        let image = Arc::new(Tensor::filled(cfg.image.to_vec(), 0.5));
        let windows: Vec<MultimodalWindow> = (0..n)
            .map(|i| {
                let c: Vec<f64> = (0..cfg.closeness * cfg.cells).map(|_| r.gen::<f64>()).collect();
                let target = (0..cfg.cells)
                    .map(|j| 0.5 * c[j] + 0.3 * c[cfg.cells + j] + 0.1)
                    .collect();
                MultimodalWindow {
                    target_index: i,
                    horizon: 1,
                    closeness_tra: c,
                    closeness_txt: vec![0.0; cfg.closeness * cfg.text_dims],
                    period_tra: (0..cfg.period * cfg.cells).map(|_| r.gen::<f64>()).collect(),
                    period_txt: vec![0.0; cfg.period * cfg.text_dims],
                    target,
                    image: Arc::clone(&image),
                }
            })
            .collect();
        WindowBatch::new(cfg, &windows, &SpatialGraph::empty(cfg.cells)).unwrap()
    }

    fn meta_cfg(epochs: usize, outer_lr: f64) -> MetaConfig {
        MetaConfig {
            inner_steps: 20,
            inner_lr: 0.05,
            outer_lr,
            epochs,
            ..MetaConfig::default()
        }
    }

    #[test]
    fn frozen_outer_loop_keeps_body_bits() {
        let cfg = small_model();
        let b = linear_task(&cfg, 12, 1);
        let tasks = vec![MetaTask {
            name: "t".into(),
            support: b.clone(),
            query: b,
        }];
        let init = ParameterSet::init(&cfg, 1).unwrap();
        let st = meta_train(&cfg, &meta_cfg(3, 0.0), &tasks, &init, 7).unwrap();
        assert_eq!(st.body.checksum(), init.body.checksum());
        assert_eq!(st.history.len(), 3);
    }

    #[test]
    fn deterministic_history() {
        let cfg = small_model();
        let tasks: Vec<MetaTask> = (0..2)
            .map(|i| MetaTask {
                name: format!("t{i}"),
                support: linear_task(&cfg, 10, 10 + i),
                query: linear_task(&cfg, 5, 20 + i),
            })
            .collect();
        let init = ParameterSet::init(&cfg, 2).unwrap();
        let a = meta_train(&cfg, &meta_cfg(3, 0.05), &tasks, &init, 3).unwrap();
        let b = meta_train(&cfg, &meta_cfg(3, 0.05), &tasks, &init, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.history.iter().all(|r| r.cg_iterations.iter().all(|&k| k <= 10)));
    }

    #[test]
    fn query_loss_decreases_on_a_single_linear_task() {
        let cfg = small_model();
        let b = linear_task(&cfg, 16, 4);
        let tasks = vec![MetaTask {
            name: "t".into(),
            support: b.clone(),
            query: b,
        }];
        let init = ParameterSet::init(&cfg, 3).unwrap();
        let mc = MetaConfig {
            inner_steps: 100,
            inner_lr: 0.05,
            ..meta_cfg(11, 0.05)
        };
        let st = meta_train(&cfg, &mc, &tasks, &init, 5).unwrap();
        let losses: Vec<f64> = st.history.iter().map(|r| r.query_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
    }

    #[test]
    fn finetune_zero_steps_is_identity() {
        let cfg = small_model();
        let p = ParameterSet::init(&cfg, 4).unwrap();
        let out = finetune(
            &cfg,
            &p,
            &linear_task(&cfg, 4, 1),
            &FinetuneConfig { steps: 0, lr: 0.1 },
            0,
        )
        .unwrap();
        assert_eq!(out.params, p);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn finetune_descends_with_small_steps() {
        let cfg = small_model();
        let batch = linear_task(&cfg, 12, 2);
        let p = ParameterSet::init(&cfg, 5).unwrap();
        let f = ModelLoss::eval_mode(&cfg);
        let before = eval(&f, &p.all(), &batch).unwrap();
        let out = finetune(&cfg, &p, &batch, &FinetuneConfig { steps: 100, lr: 0.001 }, 0).unwrap();
        let after = eval(&f, &out.params.all(), &batch).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn mean_of_heads() {
        let cfg = small_model();
        let a = ParameterSet::init_head(&cfg, 1);
        let b = a.scaled(3.0);
        let m = mean_head(&[a.clone(), b]).unwrap();
        assert_eq!(m, a.scaled(2.0));
    }
}
