//! Config-driven pipelines: simulate, ingest, meta-train, fine-tune,
//! calibrate and report.

mod commands;
mod config;
mod metrics;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

pub use commands::{
    conformal_to_dir, evaluate_file, finetune_to_dir, predict_to_file, simulate_to_dir, train_meta_to_dir,
    BaselineScore, Evaluation, IntervalMetrics, Scheme,
};
pub use config::{AuxConfig, ConformalSpec, ExperimentConfig, ExperimentKind, SweepConfig, TargetConfig, TargetSource};
pub use metrics::{mae_rmse, Baseline};
pub use pipeline::{
    aux_tasks, interval_forecasts, learner, load_target, load_target_source, meta_initialize, point_forecast,
    strip_external, strip_target, strip_tasks, IntervalOutcome, PointOutcome, RunSeeds, TargetData, TARGET_TASK,
};
pub use report::{
    interval_rows, loss_rows, ratio_label, ratio_table, scheme_name, to_json_pretty, write_csv, ArtifactWriter,
    IntervalRow, MetricsReport, PointRow, Timings, INTERVAL_HEADER, LOSS_HEADER, REPORT_SCHEMA,
};

use crate::data::WindowSpec;
use crate::error::{Error, Result, StageExt};
use crate::meta::EpochRecord;
use crate::model::ParameterSet;

/// Where meta-training data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaSource {
    /// Fine-tune from the random initialization.
    None,
    /// `count` simulated tasks of `windows` windows each.
    Simulated { count: usize, windows: usize },
    /// The target's own training windows as the single task.
    TargetOnly,
}

/// One independent point of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub variant: String,
    pub horizon: usize,
    pub meta: MetaSource,
    pub external: bool,
    pub intervals: bool,
}

#[derive(Clone, Debug)]
pub struct JobResult {
    pub job: Job,
    pub point: PointOutcome,
    pub history: Vec<EpochRecord>,
    pub intervals: Vec<IntervalOutcome>,
    pub timings: Vec<(String, f64)>,
}

/// The jobs an experiment consists of, in report order.
pub fn plan_jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let h = cfg.window.horizon;
    let aux = MetaSource::Simulated {
        count: cfg.aux.count,
        windows: cfg.aux.windows,
    };
    let job = |variant: &str, horizon, meta, external, intervals| Job {
        variant: variant.into(),
        horizon,
        meta,
        external,
        intervals,
    };
    match cfg.kind {
        ExperimentKind::Point | ExperimentKind::IntervalSweep => vec![job("meta", h, aux, true, true)],
        ExperimentKind::Ablation => vec![
            job("full", h, aux, true, false),
            job("no-meta", h, MetaSource::None, true, false),
            job("no-ext", h, aux, false, false),
            job("no-ext-no-meta", h, MetaSource::None, false, false),
        ],
        ExperimentKind::RatioSweep => {
            let mut jobs = Vec::new();
            for &horizon in &cfg.sweep.horizons {
                for &r in &cfg.sweep.ratios {
                    let meta = if r == 0 {
                        MetaSource::TargetOnly
                    } else {
                        MetaSource::Simulated {
                            count: r,
                            windows: cfg.target.train_windows,
                        }
                    };
                    jobs.push(job(&ratio_label(r), horizon, meta, true, false));
                }
            }
            jobs
        }
    }
}

fn horizon_window(cfg: &ExperimentConfig, horizon: usize) -> WindowSpec {
    WindowSpec { horizon, ..cfg.window }
}

/// Runs one job from scratch. Every job with the same seed sees the same
/// simulated data and the same initial parameters.
pub fn run_job(cfg: &ExperimentConfig, job: &Job) -> Result<JobResult> {
    let seeds = RunSeeds::new(cfg.seed);
    let window = horizon_window(cfg, job.horizon);
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((
            format!("{}/h{}/{}", job.variant, job.horizon, name),
            clock.elapsed().as_secs_f64(),
        ));
        clock = Instant::now();
    };

    let mut target = load_target(cfg, &seeds, &window)?;
    if !job.external {
        target = strip_target(&target);
    }
    let model = target.model_config(&cfg.model).stage("model")?;
    let init = ParameterSet::init(&model, seeds.init).stage("model")?;
    lap("data", &mut timings);

    let meta_data = match job.meta {
        MetaSource::None => None,
        MetaSource::Simulated { count, windows } => Some(aux_tasks(cfg, &seeds, &window, count, windows)?),
        MetaSource::TargetOnly => {
            Some(crate::data::MetaDataset::new(vec![target.as_task(cfg.aux.support_ratio)?]).stage("ingest")?)
        }
    };
    let (theta, history) = match meta_data {
        None => (init, Vec::new()),
        Some(m) => {
            let m = if job.external { m } else { strip_tasks(&m) };
            meta_initialize(cfg, &seeds, &model, &m, &init)?
        }
    };
    lap("meta-train", &mut timings);

    let l = learner(cfg, &seeds, &model, &target, theta);
    let point = point_forecast(&l, &target)?;
    lap("finetune", &mut timings);

    let intervals = if job.intervals {
        let c = &cfg.conformal;
        interval_forecasts(&l, &target, &c.folds, &c.alphas, c.bonferroni)?
    } else {
        Vec::new()
    };
    lap("conformal", &mut timings);

    Ok(JobResult {
        job: job.clone(),
        point,
        history,
        intervals,
        timings,
    })
}

/// Runs `jobs` on up to `threads` workers; results keep job order.
pub fn run_jobs(cfg: &ExperimentConfig, jobs: &[Job], threads: usize) -> Result<Vec<JobResult>> {
    if threads <= 1 {
        return jobs.iter().map(|j| run_job(cfg, j)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j)).collect())
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `out_dir` from the config.
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: MetricsReport,
    pub report_path: PathBuf,
    pub dir: PathBuf,
}

/// Runs the experiment and writes its artifacts. A failing run leaves an
/// `<stem>-incomplete.txt` marker naming the error and any files written.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate().stage("config")?;
    let mut dir = opts.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    if dir.as_os_str().is_empty() {
        dir = PathBuf::from("runs");
    }
    let mut out = ArtifactWriter::new(&dir, cfg.stem()).stage("report")?;
    match execute(cfg, opts, &mut out) {
        Ok(s) => Ok(s),
        Err(e) => {
            let note = format!("error: {e}\nwritten: {}\n", out.written.join(", "));
            let marker = dir.join(format!("{}-incomplete.txt", out.stem));
            let _ = std::fs::write(marker, note);
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut ArtifactWriter) -> Result<RunSummary> {
    let jobs = plan_jobs(cfg);
    let results = run_jobs(cfg, &jobs, opts.jobs.max(1))?;
    let seeds = RunSeeds::new(cfg.seed);

    let mut point = Vec::new();
    let mut intervals = Vec::new();
    let mut losses = Vec::new();
    let mut timings = Timings::default();
    for r in &results {
        point.push(PointRow {
            variant: r.job.variant.clone(),
            horizon: r.job.horizon,
            mae: r.point.mae,
            rmse: r.point.rmse,
        });
        losses.extend(loss_rows(&r.job.variant, r.job.horizon, &r.history));
        timings.phases.extend(r.timings.iter().cloned());
        for iv in &r.intervals {
            intervals.push(IntervalRow {
                variant: r.job.variant.clone(),
                horizon: r.job.horizon,
                scheme: scheme_name(iv.k).into(),
                k: iv.k,
                alpha: iv.alpha,
                calibration_size: iv.calibration_size,
                cr: iv.cr,
                wl: iv.wl,
            });
        }
    }

    let mut horizons: Vec<usize> = jobs.iter().map(|j| j.horizon).collect();
    horizons.dedup();
    let mut baselines = Vec::new();
    let mut targets = Vec::new();
    for &h in &horizons {
        let target = load_target(cfg, &seeds, &horizon_window(cfg, h))?;
        let truth = target.truth(target.test_rows());
        let idx = target.target_indices(target.test_rows());
        for b in Baseline::ALL {
            let f = &target.source.frame;
            let pred = b.predict(f.values(), f.dims(), &idx, h).stage("evaluate")?;
            let (mae, rmse) = mae_rmse(&truth, &pred).stage("evaluate")?;
            baselines.push(PointRow {
                variant: b.name().into(),
                horizon: h,
                mae,
                rmse,
            });
        }
        targets.push((h, target));
    }

    out.write_csv("losses.csv", &LOSS_HEADER, &losses).stage("report")?;
    for r in &results {
        let Some((_, target)) = targets.iter().find(|(h, _)| *h == r.job.horizon) else {
            continue;
        };
        let ts: Vec<_> = target
            .target_indices(target.test_rows())
            .into_iter()
            .map(|t| target.source.frame.timestamps()[t])
            .collect();
        let ids = target.source.frame.cell_ids();
        if cfg.kind == ExperimentKind::Point {
            let truth = target.truth(target.test_rows());
            let d = ids.len();
            let mut rows = Vec::new();
            for (i, t) in ts.iter().enumerate() {
                for (j, id) in ids.iter().enumerate() {
                    rows.push(vec![
                        crate::data::format_timestamp(t),
                        id.clone(),
                        r.point.pred[i * d + j].to_string(),
                        truth[i * d + j].to_string(),
                    ]);
                }
            }
            out.write_csv(
                &format!("predictions-{}-h{}.csv", r.job.variant, r.job.horizon),
                &["t", "cell_id", "yhat", "y"],
                &rows,
            )
            .stage("report")?;
        }
        for iv in &r.intervals {
            let rows = interval_rows(&ts, ids, &iv.intervals);
            let suffix = format!(
                "intervals-{}-h{}-k{}-a{}.csv",
                r.job.variant, r.job.horizon, iv.k, iv.alpha
            );
            out.write_csv(&suffix, &INTERVAL_HEADER, &rows).stage("report")?;
        }
    }

    match cfg.kind {
        ExperimentKind::RatioSweep => {
            let (header, rows) = ratio_table(&cfg.sweep.ratios, &cfg.sweep.horizons, &point);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.write_csv("table.csv", &header, &rows).stage("report")?;
        }
        ExperimentKind::IntervalSweep => {
            let rows: Vec<Vec<String>> = intervals
                .iter()
                .map(|r| {
                    vec![
                        r.scheme.clone(),
                        r.k.to_string(),
                        r.alpha.to_string(),
                        r.calibration_size.to_string(),
                        r.cr.to_string(),
                        r.wl.to_string(),
                    ]
                })
                .collect();
            out.write_csv(
                "table.csv",
                &["scheme", "k", "alpha", "calibration_size", "cr", "wl"],
                &rows,
            )
            .stage("report")?;
        }
        ExperimentKind::Point | ExperimentKind::Ablation => {
            let rows: Vec<Vec<String>> = point
                .iter()
                .chain(&baselines)
                .map(|r| {
                    vec![
                        r.variant.clone(),
                        r.horizon.to_string(),
                        r.mae.to_string(),
                        r.rmse.to_string(),
                    ]
                })
                .collect();
            out.write_csv("table.csv", &["variant", "horizon", "mae", "rmse"], &rows)
                .stage("report")?;
        }
    }
    out.write_text("timings.json", &to_json_pretty(&timings)?)
        .stage("report")?;

    let report = MetricsReport {
        schema: REPORT_SCHEMA.into(),
        kind: cfg.kind.name().into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        point,
        baselines,
        intervals,
        files: out.written.clone(),
    };
    report.check().stage("evaluate")?;
    let report_path = out
        .write_text("report.json", &to_json_pretty(&report)?)
        .stage("report")?;
    Ok(RunSummary {
        report,
        report_path,
        dir: out.dir.clone(),
    })
}
