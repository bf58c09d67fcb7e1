//! Split and cross conformal calibration of multi-output point forecasts.

mod calibrate;
mod learner;
mod score;

pub use calibrate::{ccp_calibrate, icp_calibrate, Calibration, FoldLearner};
pub use learner::{FittedModel, ModelLearner};
pub use score::{
    coverage_rate, empirical_quantile, nonconformity, predict_interval, quantile_rank, width_length, IntervalForecast,
    ScorePool,
};
