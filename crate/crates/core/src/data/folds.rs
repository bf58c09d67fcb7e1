use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

/// Growing-window forward-validation plan over `n` time-ordered samples.
///
/// The samples are cut into `K` contiguous folds; pair `k` trains on folds
/// `1..=k` and calibrates on fold `k+1`, for `k = 1..K−1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub n_samples: usize,
    pub folds: Vec<Range<usize>>,
    /// `(train, calibrate)` index ranges.
    pub pairs: Vec<(Range<usize>, Range<usize>)>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Total calibration samples across all pairs.
    pub fn calibration_size(&self) -> usize {
        self.pairs.iter().map(|(_, c)| c.len()).sum()
    }
}

/// Near-equal contiguous folds; the first `n mod K` folds take one extra
/// sample.
pub fn growing_window_folds(n_samples: usize, k: usize) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if n_samples < k {
        return Err(Error::Sizing(format!(
            "{n_samples} samples cannot form {k} non-empty folds"
        )));
    }
    let base = n_samples / k;
    let extra = n_samples % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(start..start + len);
        start += len;
    }
    let pairs = (1..k).map(|i| (0..folds[i - 1].end, folds[i].clone())).collect();
    Ok(FoldPlan {
        n_samples,
        folds,
        pairs,
    })
}
