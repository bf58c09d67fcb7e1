use std::ops::Range;
use std::sync::Arc;

use super::config::{ExperimentConfig, TargetSource};
use super::metrics::mae_rmse;
use crate::conformal::{
    ccp_calibrate, coverage_rate, width_length, FittedModel, FoldLearner, IntervalForecast, ModelLearner,
};
use crate::data::{
    load_holidays, load_traffic_csv, one_hot_metadata, prepare_task, MetaDataset, MultimodalWindow, PreparedTask,
    TaskDataset, TaskSource, WindowSpec,
};
use crate::error::{Error, Result, StageExt};
use crate::meta::{mean_head, meta_train, EpochRecord, MetaTask};
use crate::model::{ModelConfig, ParameterSet};
use crate::numerics::{rng, Tensor};
use crate::sim::{self, files, SimConfig, TaskPrep};

/// Task index reserved for the simulated target series.
pub const TARGET_TASK: usize = 1 << 20;

/// Seeds of the independent random pieces of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub sim: u64,
    pub init: u64,
    pub meta: u64,
    pub finetune: u64,
}

impl RunSeeds {
    pub fn new(seed: u64) -> Self {
        Self {
            sim: rng::derive(seed, &[0x51]),
            init: rng::derive(seed, &[0x1a]),
            meta: rng::derive(seed, &[0x3e7a]),
            finetune: rng::derive(seed, &[0xf7]),
        }
    }
}

/// Target series windowed for one horizon; the normalizer sees training
/// rows only.
#[derive(Clone, Debug)]
pub struct TargetData {
    pub source: TaskSource,
    pub prepared: PreparedTask,
    pub window: WindowSpec,
    pub n_train: usize,
    pub n_test: usize,
}

impl TargetData {
    pub fn dims(&self) -> usize {
        self.source.frame.dims()
    }

    pub fn train(&self) -> &[MultimodalWindow] {
        &self.prepared.windows[..self.n_train]
    }

    pub fn test_rows(&self) -> Range<usize> {
        self.n_train..self.n_train + self.n_test
    }

    pub fn target_indices(&self, rows: Range<usize>) -> Vec<usize> {
        self.prepared.windows[rows].iter().map(|w| w.target_index).collect()
    }

    /// Raw target values for window rows, row-major.
    pub fn truth(&self, rows: Range<usize>) -> Vec<f64> {
        let d = self.dims();
        self.target_indices(rows)
            .into_iter()
            .flat_map(|t| self.source.frame.row(t)[..d].to_vec())
            .collect()
    }

    /// The target's training windows as a single meta-training task.
    pub fn as_task(&self, support_ratio: f64) -> Result<TaskDataset> {
        TaskDataset::split(
            "target",
            self.train().to_vec(),
            support_ratio,
            Arc::clone(&self.prepared.adjacency),
        )
    }

    pub fn model_config(&self, base: &ModelConfig) -> Result<ModelConfig> {
        base.clone().with_data(
            self.dims(),
            self.source.exog_dims,
            self.source.image.shape(),
            &self.window,
        )
    }
}

fn seeded_sim(cfg: &ExperimentConfig, seeds: &RunSeeds, hours: usize) -> SimConfig {
    SimConfig {
        seed: seeds.sim,
        hours,
        ..cfg.sim.clone()
    }
}

/// Reads target files into a task source; event columns are followed by
/// calendar one-hots.
pub fn load_target_source(cfg: &ExperimentConfig) -> Result<TaskSource> {
    let t = &cfg.target;
    let need = |p: &Option<std::path::PathBuf>, name: &str| {
        p.clone()
            .ok_or_else(|| Error::Config(format!("file target needs a {name} path")))
    };
    let frame = load_traffic_csv(need(&t.traffic, "traffic")?)?;
    let (ts, names, events) = files::load_events_csv(need(&t.events, "events")?)?;
    if ts.as_slice() != frame.timestamps() {
        return Err(Error::Ingestion {
            row: 0,
            message: "event timestamps differ from traffic timestamps".into(),
        });
    }
    let holidays = match &t.holidays {
        Some(p) => load_holidays(p)?,
        None => Default::default(),
    };
    let meta = one_hot_metadata(&ts, &holidays);
    let k = names.len();
    let mw = crate::data::METADATA_WIDTH;
    let mut exog = Vec::with_capacity(ts.len() * (k + mw));
    for r in 0..ts.len() {
        exog.extend_from_slice(&events[r * k..(r + 1) * k]);
        exog.extend_from_slice(&meta[r * mw..(r + 1) * mw]);
    }
    let image = files::load_image_csv(need(&t.image, "image")?)?;
    let (ids, pos) = files::load_cells_csv(need(&t.cells, "cells")?)?;
    let cell_positions = frame
        .cell_ids()
        .iter()
        .map(|id| {
            ids.iter()
                .position(|x| x == id)
                .map(|i| pos[i])
                .ok_or_else(|| Error::Ingestion {
                    row: 0,
                    message: format!("cell {id} has no position"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSource {
        frame,
        exog,
        exog_dims: k + mw,
        image,
        cell_positions,
    })
}

/// Builds the target for `window`: simulated, or read from files.
pub fn load_target(cfg: &ExperimentConfig, seeds: &RunSeeds, window: &WindowSpec) -> Result<TargetData> {
    window.validate()?;
    let first = window.first_target();
    let t = &cfg.target;
    let (source, n_train, n_test) = match t.source {
        TargetSource::Simulate => {
            let hours = first + t.train_windows + t.test_windows;
            let sim_cfg = sim::task_config(&seeded_sim(cfg, seeds, hours), TARGET_TASK, &t.shift);
            let out = sim::run(&sim_cfg).stage("simulate")?;
            (out.task_source()?, t.train_windows, t.test_windows)
        }
        TargetSource::Files => {
            let src = load_target_source(cfg).stage("ingest")?;
            let n = src.frame.len().saturating_sub(first);
            if n < t.train_windows + 1 {
                return Err(Error::Sizing(format!(
                    "{n} windows cannot hold {} training windows and a test set",
                    t.train_windows
                ))
                .in_stage("ingest"));
            }
            (src, t.train_windows, n - t.train_windows)
        }
    };
    let prepared = prepare_task(&source, window, 0..first + n_train, cfg.aux.length_scale).stage("ingest")?;
    if prepared.windows.len() < n_train + n_test {
        return Err(Error::Sizing("target series too short for its windows".into()).in_stage("ingest"));
    }
    Ok(TargetData {
        source,
        prepared,
        window: *window,
        n_train,
        n_test,
    })
}

/// `count` simulated tasks of `windows` windows each.
pub fn aux_tasks(
    cfg: &ExperimentConfig,
    seeds: &RunSeeds,
    window: &WindowSpec,
    count: usize,
    windows: usize,
) -> Result<MetaDataset> {
    let prep = TaskPrep {
        window: *window,
        support_ratio: cfg.aux.support_ratio,
        length_scale: cfg.aux.length_scale,
    };
    let sim_cfg = seeded_sim(cfg, seeds, window.first_target() + windows);
    sim::make_meta_tasks(&sim_cfg, count, &cfg.aux.shift, &prep).stage("simulate")
}

/// Zeroes the textual features and the image.
pub fn strip_external(windows: &[MultimodalWindow]) -> Vec<MultimodalWindow> {
    let blank = windows
        .first()
        .map(|w| Arc::new(Tensor::zeros(w.image.shape().to_vec())));
    windows
        .iter()
        .map(|w| MultimodalWindow {
            closeness_txt: vec![0.0; w.closeness_txt.len()],
            period_txt: vec![0.0; w.period_txt.len()],
            image: Arc::clone(blank.as_ref().unwrap()),
            ..w.clone()
        })
        .collect()
}

pub fn strip_target(target: &TargetData) -> TargetData {
    let mut out = target.clone();
    out.prepared.windows = strip_external(&target.prepared.windows);
    out
}

pub fn strip_tasks(meta: &MetaDataset) -> MetaDataset {
    MetaDataset {
        tasks: meta
            .tasks
            .iter()
            .map(|t| TaskDataset {
                support: strip_external(&t.support),
                query: strip_external(&t.query),
                ..t.clone()
            })
            .collect(),
    }
}

/// Meta-trains from `init` and returns the body with the averaged head.
pub fn meta_initialize(
    cfg: &ExperimentConfig,
    seeds: &RunSeeds,
    model: &ModelConfig,
    meta: &MetaDataset,
    init: &ParameterSet,
) -> Result<(ParameterSet, Vec<EpochRecord>)> {
    let tasks = meta
        .tasks
        .iter()
        .map(|t| MetaTask::new(model, t))
        .collect::<Result<Vec<_>>>()?;
    let state = meta_train(model, &cfg.meta, &tasks, init, seeds.meta).stage("meta-train")?;
    let head = mean_head(&state.heads)?;
    Ok((ParameterSet { body: state.body, head }, state.history))
}

pub fn learner(
    cfg: &ExperimentConfig,
    seeds: &RunSeeds,
    model: &ModelConfig,
    target: &TargetData,
    init: ParameterSet,
) -> ModelLearner {
    ModelLearner {
        model: model.clone(),
        init,
        windows: target.prepared.windows[..target.n_train + target.n_test].to_vec(),
        normalizer: target.prepared.normalizer.clone(),
        adjacency: Arc::clone(&target.prepared.adjacency),
        finetune: cfg.meta.finetune,
        seed: seeds.finetune,
    }
}

/// Point forecast of one variant on the test rows.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub fitted: FittedModel,
    pub pred: Vec<f64>,
    pub mae: f64,
    pub rmse: f64,
}

/// Fine-tunes on every training window and scores the test rows.
pub fn point_forecast(learner: &ModelLearner, target: &TargetData) -> Result<PointOutcome> {
    let fitted = learner.fit(0..target.n_train).stage("finetune")?;
    let pred = learner.predict(&fitted, target.test_rows()).stage("evaluate")?;
    let (mae, rmse) = mae_rmse(&target.truth(target.test_rows()), &pred).stage("evaluate")?;
    Ok(PointOutcome {
        fitted,
        pred,
        mae,
        rmse,
    })
}

/// Conformal intervals over the test rows.
#[derive(Clone, Debug)]
pub struct IntervalOutcome {
    pub k: usize,
    pub alpha: f64,
    pub calibration_size: usize,
    pub intervals: Vec<IntervalForecast>,
    pub cr: f64,
    pub wl: f64,
}

/// Calibrates once per fold count and evaluates every `alpha`.
pub fn interval_forecasts(
    learner: &ModelLearner,
    target: &TargetData,
    folds: &[usize],
    alphas: &[f64],
    bonferroni: bool,
) -> Result<Vec<IntervalOutcome>> {
    let truth = target.truth(target.test_rows());
    let mut out = Vec::new();
    for &k in folds {
        let cal = ccp_calibrate(learner, target.n_train, k).stage("conformal")?;
        for &alpha in alphas {
            let intervals = cal
                .intervals(learner, target.test_rows(), alpha, bonferroni)
                .stage("conformal")?;
            out.push(IntervalOutcome {
                k,
                alpha,
                calibration_size: cal.pool.len(),
                cr: coverage_rate(&truth, &intervals)?,
                wl: width_length(&intervals)?,
                intervals,
            });
        }
    }
    Ok(out)
}
