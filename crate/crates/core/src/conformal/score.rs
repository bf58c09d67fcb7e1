use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension absolute residual `|y − ŷ|`.
pub fn nonconformity(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} truths against {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).collect())
}

/// Calibration scores, row-major `L×D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePool {
    pub dims: usize,
    pub scores: Vec<f64>,
}

impl ScorePool {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            scores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len() / self.dims.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Appends `|y − ŷ|` for row-major blocks of truths and predictions.
    pub fn extend(&mut self, truth: &[f64], pred: &[f64]) -> Result<()> {
        if truth.len() % self.dims != 0 {
            return Err(Error::Shape(format!(
                "{} values are not rows of {}",
                truth.len(),
                self.dims
            )));
        }
        self.scores.extend(nonconformity(truth, pred)?);
        Ok(())
    }

    /// `ε̂` at level `alpha`; with `bonferroni` the level is split across
    /// the `D` dimensions.
    pub fn quantile(&self, alpha: f64, bonferroni: bool) -> Result<Vec<f64>> {
        let level = if bonferroni { alpha / self.dims as f64 } else { alpha };
        empirical_quantile(self, level)
    }
}

/// `l = ⌈(1 − α)(L + 1)⌉`, guarding against round-off just above an
/// integer.
pub fn quantile_rank(l: usize, alpha: f64) -> usize {
    let x = (1.0 - alpha) * (l as f64 + 1.0);
    (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize
}

/// Per dimension, the `l`-th smallest score (1-indexed).
pub fn empirical_quantile(pool: &ScorePool, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("significance {alpha} outside (0, 1)")));
    }
    let (l_count, d) = (pool.len(), pool.dims);
    let rank = quantile_rank(l_count, alpha);
    if l_count == 0 || rank > l_count {
        let min = (1.0 - alpha) / alpha;
        return Err(Error::InsufficientCalibration {
            have: l_count,
            min: (min - 1e-9 * min.max(1.0)).ceil() as usize,
            alpha,
        });
    }
    let mut out = Vec::with_capacity(d);
    let mut col = Vec::with_capacity(l_count);
    for j in 0..d {
        col.clear();
        col.extend((0..l_count).map(|i| pool.scores[i * d + j]));
        let (_, kth, _) = col.select_nth_unstable_by(rank - 1, f64::total_cmp);
        out.push(*kth);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalForecast {
    pub yhat: Vec<f64>,
    pub eps: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
}

/// `[ŷ − ε̂, ŷ + ε̂]`.
pub fn predict_interval(yhat: &[f64], eps: &[f64], alpha: f64) -> Result<IntervalForecast> {
    if yhat.len() != eps.len() {
        return Err(Error::Shape(format!(
            "{} predictions with {} radii",
            yhat.len(),
            eps.len()
        )));
    }
    if let Some(e) = eps.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::Contract(format!("interval radius {e} must be nonnegative")));
    }
    Ok(IntervalForecast {
        yhat: yhat.to_vec(),
        eps: eps.to_vec(),
        lo: yhat.iter().zip(eps).map(|(y, e)| y - e).collect(),
        hi: yhat.iter().zip(eps).map(|(y, e)| y + e).collect(),
        alpha,
    })
}

/// Fraction of `(i, j)` with `lo ≤ y ≤ hi`; `truth` is row-major with one
/// row per interval.
pub fn coverage_rate(truth: &[f64], intervals: &[IntervalForecast]) -> Result<f64> {
    let mut inside = 0usize;
    let mut total = 0usize;
    let mut offset = 0;
    for iv in intervals {
        let d = iv.lo.len();
        let row = truth
            .get(offset..offset + d)
            .ok_or_else(|| Error::Shape("fewer truths than interval entries".into()))?;
        for ((y, lo), hi) in row.iter().zip(&iv.lo).zip(&iv.hi) {
            inside += (lo <= y && y <= hi) as usize;
        }
        total += d;
        offset += d;
    }
    if offset != truth.len() {
        return Err(Error::Shape("more truths than interval entries".into()));
    }
    if total == 0 {
        return Err(Error::Sizing("coverage of an empty set".into()));
    }
    Ok(inside as f64 / total as f64)
}

/// Mean of `|hi − lo|` over every entry.
pub fn width_length(intervals: &[IntervalForecast]) -> Result<f64> {
    let (sum, n) = intervals.iter().fold((0.0, 0usize), |(s, n), iv| {
        (
            s + iv.lo.iter().zip(&iv.hi).map(|(l, h)| (h - l).abs()).sum::<f64>(),
            n + iv.lo.len(),
        )
    });
    if n == 0 {
        return Err(Error::Sizing("width of an empty set".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(d: usize, s: Vec<f64>) -> ScorePool {
        ScorePool { dims: d, scores: s }
    }

    #[test]
    fn nonconformity_examples() {
        assert_eq!(nonconformity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), [0.0, 0.0]);
        assert_eq!(nonconformity(&[2.0, 3.0], &[2.5, 1.0]).unwrap(), [0.5, 2.0]);
        assert_eq!(nonconformity(&[2.5, 1.0], &[2.0, 3.0]).unwrap(), [0.5, 2.0]);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(quantile_rank(19, 0.05), 19);
        assert_eq!(quantile_rank(9, 0.1), 9);
        let s: Vec<f64> = (1..=19).map(f64::from).rev().collect();
        assert_eq!(empirical_quantile(&pool(1, s), 0.05).unwrap(), [19.0]);
        let s: Vec<f64> = (1..=9).map(|x| x as f64 * 0.5).collect();
        assert_eq!(empirical_quantile(&pool(1, s), 0.1).unwrap(), [4.5]);
    }

    #[test]
    fn too_few_scores() {
        let err = empirical_quantile(&pool(1, vec![1.0; 18]), 0.05).unwrap_err();
        assert!(
            matches!(err, Error::InsufficientCalibration { have: 18, min: 19, .. }),
            "{err}"
        );
    }

    #[test]
    fn interval_examples() {
        let iv = predict_interval(&[5.0], &[1.2], 0.1).unwrap();
        assert!((iv.lo[0] - 3.8).abs() < 1e-15 && (iv.hi[0] - 6.2).abs() < 1e-15);
        let iv = predict_interval(&[5.0, 1.0], &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(iv.lo, iv.hi);
        let iv = predict_interval(&[5.0, 1.0], &[0.25, 1.5], 0.1).unwrap();
        assert!((width_length(&[iv]).unwrap() - (0.5 + 3.0) / 2.0).abs() < 1e-15);
        assert!(matches!(
            predict_interval(&[1.0], &[-0.1], 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn coverage_examples() {
        let ivs = vec![predict_interval(&[1.0, 1.0], &[1.0, 1.0], 0.1).unwrap(); 3];
        assert_eq!(coverage_rate(&[0.0, 2.0, 1.0, 1.5, 0.5, 1.0], &ivs).unwrap(), 1.0);
        assert_eq!(width_length(&ivs).unwrap(), 2.0);
        assert_eq!(coverage_rate(&[0.0, 2.1, 1.0, 1.5, 0.5, 1.0], &ivs).unwrap(), 5.0 / 6.0);
    }

    proptest! {
        #[test]
        fn smaller_alpha_never_narrows(
            scores in prop::collection::vec(0.0f64..10.0, 60),
            a1 in 0.05f64..0.5,
            gap in 0.0f64..0.4,
        ) {
            let p = pool(3, scores);
            let e1 = empirical_quantile(&p, a1).unwrap();
            let e2 = empirical_quantile(&p, a1 + gap).unwrap();
            for (x, y) in e1.iter().zip(&e2) {
                prop_assert!(x >= y);
            }
        }
    }
}
