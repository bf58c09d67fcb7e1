use std::ops::Range;

use super::score::{predict_interval, IntervalForecast, ScorePool};
use crate::data::{growing_window_folds, FoldPlan};
use crate::error::{Error, Result};

/// A point forecaster that can be refit on any prefix of a time-ordered
/// sample set. Rows index samples; predictions and truths are row-major
/// `rows × dims` in original units.
pub trait FoldLearner {
    type Fitted;

    fn dims(&self) -> usize;
    /// Total rows available for prediction (training and test).
    fn n_samples(&self) -> usize;
    fn fit(&self, rows: Range<usize>) -> Result<Self::Fitted>;
    fn predict(&self, fitted: &Self::Fitted, rows: Range<usize>) -> Result<Vec<f64>>;
    fn truth(&self, rows: Range<usize>) -> Result<Vec<f64>>;
}

/// Final model plus the pooled calibration scores it is wrapped with.
#[derive(Clone, Debug)]
pub struct Calibration<F> {
    pub fitted: F,
    pub pool: ScorePool,
    /// `(train, calibrate)` pairs that produced the pool.
    pub pairs: Vec<(Range<usize>, Range<usize>)>,
    pub n_train: usize,
}

impl<F> Calibration<F> {
    pub fn k(&self) -> usize {
        self.pairs.len() + 1
    }

    pub fn eps(&self, alpha: f64, bonferroni: bool) -> Result<Vec<f64>> {
        self.pool.quantile(alpha, bonferroni)
    }

    /// One interval per row of `rows`.
    pub fn intervals<L>(
        &self,
        learner: &L,
        rows: Range<usize>,
        alpha: f64,
        bonferroni: bool,
    ) -> Result<Vec<IntervalForecast>>
    where
        L: FoldLearner<Fitted = F>,
    {
        let eps = self.eps(alpha, bonferroni)?;
        let d = learner.dims();
        let yhat = learner.predict(&self.fitted, rows)?;
        yhat.chunks(d).map(|row| predict_interval(row, &eps, alpha)).collect()
    }
}

fn check_train<L: FoldLearner>(learner: &L, n_train: usize) -> Result<()> {
    if n_train > learner.n_samples() {
        return Err(Error::Sizing(format!(
            "{} training rows requested from {} samples",
            n_train,
            learner.n_samples()
        )));
    }
    Ok(())
}

fn score_pairs<L: FoldLearner>(learner: &L, pairs: &[(Range<usize>, Range<usize>)]) -> Result<ScorePool> {
    let mut pool = ScorePool::new(learner.dims());
    for (train, cal) in pairs {
        let fitted = learner.fit(train.clone())?;
        let pred = learner.predict(&fitted, cal.clone())?;
        pool.extend(&learner.truth(cal.clone())?, &pred)?;
    }
    Ok(pool)
}

/// Cross conformal calibration over a growing-window plan of the first
/// `n_train` rows. The returned model is refit on all of them.
pub fn ccp_calibrate<L: FoldLearner>(learner: &L, n_train: usize, k: usize) -> Result<Calibration<L::Fitted>> {
    check_train(learner, n_train)?;
    let FoldPlan { pairs, .. } = growing_window_folds(n_train, k)?;
    let pool = score_pairs(learner, &pairs)?;
    Ok(Calibration {
        fitted: learner.fit(0..n_train)?,
        pool,
        pairs,
        n_train,
    })
}

/// Inductive calibration: fit on `0..split`, score `split..n_train`, then
/// refit on `0..n_train`.
pub fn icp_calibrate<L: FoldLearner>(learner: &L, n_train: usize, split: usize) -> Result<Calibration<L::Fitted>> {
    check_train(learner, n_train)?;
    if split == 0 || split >= n_train {
        return Err(Error::Sizing(format!(
            "split {split} leaves an empty side of {n_train} rows"
        )));
    }
    let fitted = learner.fit(0..split)?;
    let pred = learner.predict(&fitted, split..n_train)?;
    let mut pool = ScorePool::new(learner.dims());
    pool.extend(&learner.truth(split..n_train)?, &pred)?;
    Ok(Calibration {
        fitted: learner.fit(0..n_train)?,
        pool,
        pairs: vec![(0..split, split..n_train)],
        n_train,
    })
}
