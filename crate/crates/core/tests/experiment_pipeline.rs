use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use cellcast::experiment::{
    plan_jobs, run_experiment, simulate_to_dir, ExperimentConfig, ExperimentKind, RunOptions, TargetSource,
};
use cellcast::Error;

fn tiny(kind: ExperimentKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        kind,
        ..Default::default()
    };
    cfg.model.hidden = 8;
    cfg.model.heads = 2;
    cfg.model.blocks = 1;
    cfg.model.cnn_channels = 2;
    cfg.sim.base_stations = 1;
    cfg.sim.image_size = 4;
    cfg.aux.count = 2;
    cfg.aux.windows = 40;
    cfg.target.train_windows = 40;
    cfg.target.test_windows = 12;
    cfg.meta.epochs = 3;
    cfg.meta.finetune.steps = 5;
    cfg.conformal.alphas = vec![0.25];
    cfg.conformal.folds = vec![2, 4];
    cfg
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> cellcast::experiment::RunSummary {
    let opts = RunOptions {
        out_dir: Some(dir.to_path_buf()),
        jobs: 1,
    };
    run_experiment(cfg, &opts).unwrap()
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with("timings.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = tiny(ExperimentKind::Point, 9);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, a.path());
    run(&cfg, b.path());
    let fa = file_bytes(a.path());
    assert_eq!(fa, file_bytes(b.path()));
    assert!(fa.iter().any(|(n, _)| n.contains("intervals-meta-h1-k4")));
}

#[test]
fn artifacts_carry_seed_and_hash() {
    let cfg = tiny(ExperimentKind::Point, 4);
    let dir = tempfile::tempdir().unwrap();
    let s = run(&cfg, dir.path());
    let prefix = format!("point-s4-{}-", cfg.hash());
    for entry in fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(name.starts_with(&prefix), "{name}");
    }
    assert_eq!(s.report.files.len() + 1, fs::read_dir(dir.path()).unwrap().count());
}

#[test]
fn report_schema_is_stable() {
    let cfg = tiny(ExperimentKind::Point, 1);
    let dir = tempfile::tempdir().unwrap();
    let s = run(&cfg, dir.path());
    let text = fs::read_to_string(&s.report_path).unwrap();
    let top: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("  \"").and_then(|r| r.split('"').next()))
        .collect();
    assert_eq!(
        top,
        [
            "schema",
            "kind",
            "seed",
            "config_hash",
            "config",
            "point",
            "baselines",
            "intervals",
            "files"
        ]
    );
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let row_keys = |k: &str| -> BTreeSet<String> { v[k][0].as_object().unwrap().keys().cloned().collect() };
    assert_eq!(
        row_keys("point"),
        ["horizon", "mae", "rmse", "variant"].map(String::from).into()
    );
    assert_eq!(
        row_keys("intervals"),
        [
            "alpha",
            "calibration_size",
            "cr",
            "horizon",
            "k",
            "scheme",
            "variant",
            "wl"
        ]
        .map(String::from)
        .into()
    );
    assert_eq!(v["schema"], "cellcast.report/1");
    assert_eq!(v["intervals"][0]["scheme"], "icp");
    for r in s.report.point.iter().chain(&s.report.baselines) {
        assert!(r.mae <= r.rmse);
    }
}

#[test]
fn ratio_sweep_table_has_six_rows() {
    let cfg = tiny(ExperimentKind::RatioSweep, 2);
    assert_eq!(plan_jobs(&cfg).len(), 12);
    let dir = tempfile::tempdir().unwrap();
    let s = run(&cfg, dir.path());
    let table = s.report.files.iter().find(|f| f.ends_with("table.csv")).unwrap();
    let text = fs::read_to_string(dir.path().join(table)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ratio,mae_h1,rmse_h1,mae_h24,rmse_h24");
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["real-only", "1:1", "2:1", "3:1", "4:1", "8:1"]);
    assert!(lines[1..]
        .iter()
        .all(|l| l.split(',').count() == 5 && !l.contains(",,")));
}

#[test]
fn ablation_has_four_variants_and_baselines() {
    let cfg = tiny(ExperimentKind::Ablation, 3);
    let dir = tempfile::tempdir().unwrap();
    let s = run(&cfg, dir.path());
    let names: Vec<&str> = s.report.point.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["full", "no-meta", "no-ext", "no-ext-no-meta"]);
    let base: Vec<&str> = s.report.baselines.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(base, ["persistence", "seasonal-naive"]);
    assert!(s.report.intervals.is_empty());
}

#[test]
fn parallel_jobs_match_serial_output() {
    let cfg = tiny(ExperimentKind::Ablation, 5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, a.path());
    run_experiment(
        &cfg,
        &RunOptions {
            out_dir: Some(b.path().to_path_buf()),
            jobs: 3,
        },
    )
    .unwrap();
    assert_eq!(file_bytes(a.path()), file_bytes(b.path()));
}

#[test]
fn simulated_files_round_trip_as_a_target() {
    let mut cfg = tiny(ExperimentKind::Point, 8);
    cfg.sim.hours = 160;
    let data = tempfile::tempdir().unwrap();
    let paths = simulate_to_dir(&cfg, data.path()).unwrap();
    cfg.target.source = TargetSource::Files;
    cfg.target.traffic = Some(paths[0].clone());
    cfg.target.events = Some(paths[1].clone());
    cfg.target.image = Some(paths[2].clone());
    cfg.target.cells = Some(paths[3].clone());
    cfg.conformal.folds = vec![4];
    let out = tempfile::tempdir().unwrap();
    let s = run(&cfg, out.path());
    assert_eq!(s.report.point.len(), 1);
    let test_rows = 160 - (cfg.window.first_target() + 40);
    let preds = s.report.files.iter().find(|f| f.contains("predictions")).unwrap();
    let n = fs::read_to_string(out.path().join(preds)).unwrap().lines().count();
    assert_eq!(n, 1 + test_rows * cfg.sim.cells());
}

#[test]
fn failures_name_their_stage_and_leave_a_marker() {
    let mut cfg = tiny(ExperimentKind::Point, 1);
    cfg.conformal.alphas = vec![0.01];
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(
        &cfg,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            jobs: 1,
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "conformal", .. }), "{err}");
    assert!(err
        .to_string()
        .starts_with("conformal: insufficient calibration samples"));
    let marker = dir.path().join(format!("{}-incomplete.txt", cfg.stem()));
    assert!(marker.exists());

    let mut bad = tiny(ExperimentKind::Point, 1);
    bad.conformal.folds = vec![1];
    assert!(matches!(
        run_experiment(&bad, &RunOptions::default()),
        Err(Error::Stage { stage: "config", .. })
    ));
}
