mod common;

use cellcast::conformal::{
    ccp_calibrate, coverage_rate, empirical_quantile, icp_calibrate, predict_interval, width_length, ModelLearner,
    ScorePool,
};
use cellcast::data::Normalizer;
use cellcast::meta::FinetuneConfig;
use cellcast::Error;
use common::*;
use rand::Rng;
use std::sync::Arc;

#[test]
fn quantile_matches_full_sort() {
    let mut r = rng(21);
    let mut checked = 0;
    for _ in 0..1000 {
        let l = r.gen_range(1..=200);
        let d = r.gen_range(1..=10);
        let alpha = r.gen_range(0.001..0.999);
        let scores: Vec<f64> = (0..l * d).map(|_| r.gen_range(0.0..5.0)).collect();
        let pool = ScorePool {
            dims: d,
            scores: scores.clone(),
        };
        match (empirical_quantile(&pool, alpha), sort_quantile(&scores, d, alpha)) {
            (Ok(got), Some(want)) => {
                assert_eq!(got, want);
                checked += 1;
            }
            (Err(Error::InsufficientCalibration { have, min, .. }), None) => {
                assert_eq!(have, l);
                assert!(min > l);
            }
            (got, want) => panic!("l={l} alpha={alpha}: {got:?} vs {want:?}"),
        }
    }
    assert!(checked > 500);
}

#[test]
fn minimum_calibration_size_is_reported() {
    for (alpha, min) in [(0.05, 19), (0.1, 9), (0.25, 3), (0.5, 1)] {
        let ok = ScorePool {
            dims: 1,
            scores: vec![1.0; min],
        };
        assert!(empirical_quantile(&ok, alpha).is_ok(), "alpha {alpha}");
        if min > 1 {
            let short = ScorePool {
                dims: 1,
                scores: vec![1.0; min - 1],
            };
            match empirical_quantile(&short, alpha) {
                Err(Error::InsufficientCalibration { min: m, .. }) => assert_eq!(m, min),
                other => panic!("{other:?}"),
            }
        }
    }
}

#[test]
fn coverage_and_width_match_double_loops() {
    let mut r = rng(22);
    for _ in 0..100 {
        let m = r.gen_range(1..20);
        let d = r.gen_range(1..6);
        let mut ivs = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..m {
            let yhat: Vec<f64> = (0..d).map(|_| r.gen_range(-3.0..3.0)).collect();
            let eps: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..2.0)).collect();
            truth.extend((0..d).map(|_| r.gen_range(-4.0..4.0)));
            ivs.push(predict_interval(&yhat, &eps, 0.1).unwrap());
        }
        let (mut inside, mut width) = (0usize, 0.0);
        for i in 0..m {
            for j in 0..d {
                let y = truth[i * d + j];
                if ivs[i].lo[j] <= y && y <= ivs[i].hi[j] {
                    inside += 1;
                }
                width += ivs[i].hi[j] - ivs[i].lo[j];
            }
        }
        let n = (m * d) as f64;
        assert!((coverage_rate(&truth, &ivs).unwrap() - inside as f64 / n).abs() <= 1e-12);
        assert!((width_length(&ivs).unwrap() - width / n).abs() <= 1e-12);
    }
}

#[test]
fn exchangeable_rows_are_covered() {
    for seed in 0..3 {
        let data = LinearIid::new(1000, 4, 3, 100 + seed);
        let cal = ccp_calibrate(&data, 500, 5).unwrap();
        let truth = cellcast::conformal::FoldLearner::truth(&data, 500..1000).unwrap();
        for alpha in [0.05, 0.15, 0.25] {
            let ivs = cal.intervals(&data, 500..1000, alpha, false).unwrap();
            let cr = coverage_rate(&truth, &ivs).unwrap();
            assert!(cr >= 1.0 - alpha - 0.03, "seed {seed} alpha {alpha}: {cr}");
        }
    }
}

#[test]
fn bonferroni_widens_intervals() {
    let data = LinearIid::new(400, 3, 4, 5);
    let cal = ccp_calibrate(&data, 300, 4).unwrap();
    let plain = cal.eps(0.2, false).unwrap();
    let joint = cal.eps(0.2, true).unwrap();
    assert!(plain.iter().zip(&joint).all(|(a, b)| b >= a));
}

fn model_learner(seed: u64) -> ModelLearner {
    let cfg = small_model();
    let windows = random_windows(&cfg, 30, seed);
    let targets: Vec<f64> = windows.iter().flat_map(|w| w.target.clone()).collect();
    ModelLearner {
        init: random_params(&cfg, seed),
        model: cfg.clone(),
        windows,
        normalizer: Normalizer::fit(&targets.iter().map(|x| x * 3.0).collect::<Vec<_>>(), cfg.cells).unwrap(),
        adjacency: Arc::new(chain_graph(cfg.cells)),
        finetune: FinetuneConfig { steps: 5, lr: 0.01 },
        seed,
    }
}

#[test]
fn two_fold_cross_conformal_is_the_inductive_split() {
    let l = model_learner(4);
    let ccp = ccp_calibrate(&l, 24, 2).unwrap();
    let icp = icp_calibrate(&l, 24, 12).unwrap();
    assert_eq!(ccp.pool.scores.len(), icp.pool.scores.len());
    assert!(ccp
        .pool
        .scores
        .iter()
        .zip(&icp.pool.scores)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(ccp.fitted.params.all().checksum(), icp.fitted.params.all().checksum());
    for alpha in [0.1, 0.3] {
        let a = ccp.intervals(&l, 24..30, alpha, false).unwrap();
        let b = icp.intervals(&l, 24..30, alpha, false).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn model_scores_are_in_original_units() {
    use cellcast::conformal::FoldLearner;
    let l = model_learner(6);
    let cal = ccp_calibrate(&l, 24, 3).unwrap();
    assert_eq!(cal.pool.len(), 16);
    let fitted = l.fit(0..8).unwrap();
    let pred = l.predict(&fitted, 8..16).unwrap();
    let scaled = cellcast::model::predict(
        &l.model,
        &fitted.params,
        &cellcast::model::WindowBatch::new(&l.model, &l.windows[8..16], &l.adjacency).unwrap(),
    )
    .unwrap();
    let d = l.model.cells;
    for (i, w) in l.windows[8..16].iter().enumerate() {
        for j in 0..d {
            let y = l.normalizer.invert_value(j, w.target[j]);
            let yhat = l.normalizer.invert_value(j, scaled[i * d + j]);
            assert_eq!(pred[i * d + j], yhat);
            assert_eq!(cal.pool.scores[i * d + j], (y - yhat).abs());
        }
    }
}
