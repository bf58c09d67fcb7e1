//! Dataset plumbing: ingestion, scaling, calendar features, windowing,
//! spatial adjacency and fold plans.

mod calendar;
mod folds;
mod frame;
mod normalize;
mod spatial;
mod task;
mod window;

pub use calendar::{load_holidays, one_hot_metadata, METADATA_WIDTH};
pub use folds::{growing_window_folds, FoldPlan};
pub use frame::{format_timestamp, load_traffic_csv, parse_timestamp, write_traffic_csv, SeriesFrame};
pub use normalize::Normalizer;
pub use spatial::{build_adjacency, SpatialGraph};
pub use task::{prepare_task, MetaDataset, PreparedTask, TaskDataset, TaskSource};
pub use window::{make_windows, MultimodalWindow, WindowSpec, PERIOD_STRIDE};
