use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{mae_rmse, Baseline};
use super::pipeline::{aux_tasks, learner, load_target, meta_initialize, RunSeeds, TargetData};
use super::report::{interval_rows, to_json_pretty, write_csv, INTERVAL_HEADER};
use crate::conformal::{ccp_calibrate, coverage_rate, icp_calibrate, width_length, FittedModel, FoldLearner};
use crate::data::{format_timestamp, growing_window_folds, parse_timestamp};
use crate::error::{Error, Result, StageExt};
use crate::model::{load_checkpoint, save_checkpoint, ParameterSet};
use crate::sim;

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `traffic.csv`, `events.csv`, `image.csv` and `cells.csv` for
/// the `[sim]` section, using the config seed.
pub fn simulate_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    mkdir(dir)?;
    let sim_cfg = sim::SimConfig {
        seed: cfg.seed,
        ..cfg.sim.clone()
    };
    let out = sim::run(&sim_cfg).stage("simulate")?;
    let b = sim_cfg.base_stations;
    let names: Vec<String> = (0..b).map(|i| format!("event_bs{i}")).collect();
    let events: Vec<f64> = out
        .event_flags
        .chunks(out.text_dims)
        .flat_map(|row| row[..b].to_vec())
        .collect();
    let paths: Vec<PathBuf> = ["traffic.csv", "events.csv", "image.csv", "cells.csv"]
        .iter()
        .map(|n| dir.join(n))
        .collect();
    crate::data::write_traffic_csv(&paths[0], &out.frame()?)?;
    sim::write_events_csv(&paths[1], &out.timestamps, &names, &events)?;
    sim::write_image_csv(&paths[2], &out.image)?;
    sim::write_cells_csv(&paths[3], &out.cell_ids(), &out.cell_positions)?;
    Ok(paths)
}

fn target_for(cfg: &ExperimentConfig) -> Result<(RunSeeds, TargetData)> {
    let seeds = RunSeeds::new(cfg.seed);
    let target = load_target(cfg, &seeds, &cfg.window)?;
    Ok((seeds, target))
}

/// Meta-trains on the auxiliary tasks; writes `<stem>.ckpt` and a JSON
/// loss history. Returns the checkpoint path.
pub fn train_meta_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    mkdir(dir)?;
    let (seeds, target) = target_for(cfg)?;
    let model = target.model_config(&cfg.model).stage("model")?;
    let init = ParameterSet::init(&model, seeds.init).stage("model")?;
    let tasks = aux_tasks(cfg, &seeds, &cfg.window, cfg.aux.count, cfg.aux.windows)?;
    let (theta, history) = meta_initialize(cfg, &seeds, &model, &tasks, &init)?;
    let stem = format!("meta-s{}-{}", cfg.seed, cfg.hash());
    let ckpt = dir.join(format!("{stem}.ckpt"));
    save_checkpoint(&ckpt, &model, &theta).stage("report")?;
    write(&dir.join(format!("{stem}-history.json")), &to_json_pretty(&history)?)?;
    Ok(ckpt)
}

fn checkpoint_learner(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
) -> Result<(crate::conformal::ModelLearner, TargetData)> {
    let (seeds, target) = target_for(cfg)?;
    let (model, params) = load_checkpoint(checkpoint).stage("model")?;
    let expected = target.model_config(&cfg.model).stage("model")?;
    if model != expected {
        return Err(Error::Checkpoint(format!(
            "{checkpoint:?} was trained for a different model or data shape"
        ))
        .in_stage("model"));
    }
    Ok((learner(cfg, &seeds, &model, &target, params), target))
}

/// Fine-tunes a checkpoint on the target training windows.
pub fn finetune_to_dir(cfg: &ExperimentConfig, checkpoint: &Path, dir: &Path) -> Result<PathBuf> {
    mkdir(dir)?;
    let (l, target) = checkpoint_learner(cfg, checkpoint)?;
    let fitted = l.fit(0..target.n_train).stage("finetune")?;
    let stem = format!("finetune-s{}-{}", cfg.seed, cfg.hash());
    let ckpt = dir.join(format!("{stem}.ckpt"));
    save_checkpoint(&ckpt, &l.model, &fitted.params).stage("report")?;
    write(
        &dir.join(format!("{stem}-losses.json")),
        &to_json_pretty(&fitted.losses)?,
    )?;
    Ok(ckpt)
}

fn test_timestamps(target: &TargetData) -> Vec<chrono::NaiveDateTime> {
    target
        .target_indices(target.test_rows())
        .into_iter()
        .map(|t| target.source.frame.timestamps()[t])
        .collect()
}

/// Predicts the test windows with a checkpoint as-is; writes
/// `t,cell_id,yhat`.
pub fn predict_to_file(cfg: &ExperimentConfig, checkpoint: &Path, path: &Path) -> Result<()> {
    let (l, target) = checkpoint_learner(cfg, checkpoint)?;
    let fitted = FittedModel {
        params: l.init.clone(),
        losses: Vec::new(),
    };
    let pred = l.predict(&fitted, target.test_rows()).stage("predict")?;
    let ids = target.source.frame.cell_ids();
    let mut rows = Vec::new();
    for (i, t) in test_timestamps(&target).iter().enumerate() {
        for (j, id) in ids.iter().enumerate() {
            rows.push(vec![
                format_timestamp(t),
                id.clone(),
                pred[i * ids.len() + j].to_string(),
            ]);
        }
    }
    write_csv(path, &["t", "cell_id", "yhat"], &rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalMetrics {
    pub cr: f64,
    pub wl: f64,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Icp,
    Ccp,
}

/// Calibrates from a meta-initialized checkpoint and writes one interval
/// CSV and one metrics JSON per `alpha`.
pub fn conformal_to_dir(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    scheme: Scheme,
    k: usize,
    alphas: &[f64],
    bonferroni: bool,
    dir: &Path,
) -> Result<Vec<IntervalMetrics>> {
    mkdir(dir)?;
    let (l, target) = checkpoint_learner(cfg, checkpoint)?;
    let (cal, k) = match scheme {
        Scheme::Ccp => (ccp_calibrate(&l, target.n_train, k), k),
        Scheme::Icp => {
            let split = growing_window_folds(target.n_train, 2).stage("conformal")?.folds[0].end;
            (icp_calibrate(&l, target.n_train, split), 2)
        }
    };
    let cal = cal.stage("conformal")?;
    let truth = target.truth(target.test_rows());
    let ts = test_timestamps(&target);
    let mut out = Vec::new();
    for &alpha in alphas {
        let iv = cal
            .intervals(&l, target.test_rows(), alpha, bonferroni)
            .stage("conformal")?;
        let m = IntervalMetrics {
            cr: coverage_rate(&truth, &iv)?,
            wl: width_length(&iv)?,
            alpha,
            k,
        };
        let stem = format!("conformal-s{}-{}-k{}-a{}", cfg.seed, cfg.hash(), k, alpha);
        write_csv(
            &dir.join(format!("{stem}-intervals.csv")),
            &INTERVAL_HEADER,
            &interval_rows(&ts, target.source.frame.cell_ids(), &iv),
        )?;
        write(&dir.join(format!("{stem}-metrics.json")), &to_json_pretty(&m)?)?;
        out.push(m);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub mae: f64,
    pub rmse: f64,
    pub rows: usize,
    pub baselines: Vec<BaselineScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineScore {
    pub name: String,
    pub mae: f64,
    pub rmse: f64,
}

/// Scores a `t,cell_id,yhat` file against the target test truth.
pub fn evaluate_file(cfg: &ExperimentConfig, predictions: &Path) -> Result<Evaluation> {
    let (_, target) = target_for(cfg)?;
    let frame = &target.source.frame;
    let mut r = csv::Reader::from_path(predictions)?;
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Ingestion {
            row: i + 2,
            message: m.to_string(),
        };
        if rec.len() < 3 {
            return Err(bad("expected `t,cell_id,yhat`").in_stage("evaluate"));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| bad("bad timestamp"))?;
        let t = frame
            .timestamps()
            .iter()
            .position(|x| *x == ts)
            .ok_or_else(|| bad("timestamp outside the target series"))?;
        let j = frame
            .cell_ids()
            .iter()
            .position(|c| c == &rec[1])
            .ok_or_else(|| bad("unknown cell"))?;
        truth.push(frame.row(t)[j]);
        pred.push(rec[2].trim().parse::<f64>().map_err(|_| bad("bad yhat"))?);
    }
    let (mae, rmse) = mae_rmse(&truth, &pred).stage("evaluate")?;
    let idx = target.target_indices(target.test_rows());
    let test_truth = target.truth(target.test_rows());
    let baselines = Baseline::ALL
        .iter()
        .map(|b| {
            let p = b.predict(frame.values(), frame.dims(), &idx, target.window.horizon)?;
            let (mae, rmse) = mae_rmse(&test_truth, &p)?;
            Ok(BaselineScore {
                name: b.name().to_string(),
                mae,
                rmse,
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("evaluate")?;
    Ok(Evaluation {
        mae,
        rmse,
        rows: truth.len(),
        baselines,
    })
}
