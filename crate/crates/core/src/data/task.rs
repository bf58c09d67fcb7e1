use std::ops::Range;
use std::sync::Arc;

use super::{build_adjacency, make_windows, MultimodalWindow, Normalizer, SeriesFrame, SpatialGraph, WindowSpec};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Raw multimodal inputs of one task.
#[derive(Clone, Debug)]
pub struct TaskSource {
    pub frame: SeriesFrame,
    /// Row-major `T×exog_dims` textual/calendar features.
    pub exog: Vec<f64>,
    pub exog_dims: usize,
    /// `W×H×C` image.
    pub image: Tensor,
    pub cell_positions: Vec<(f64, f64)>,
}

/// A task after scaling and windowing.
#[derive(Clone, Debug)]
pub struct PreparedTask {
    pub windows: Vec<MultimodalWindow>,
    pub normalizer: Normalizer,
    pub adjacency: Arc<SpatialGraph>,
    pub cell_ids: Vec<String>,
}

impl PreparedTask {
    /// Windows whose target index lies in `rows`.
    pub fn windows_in(&self, rows: Range<usize>) -> Vec<MultimodalWindow> {
        self.windows
            .iter()
            .filter(|w| rows.contains(&w.target_index))
            .cloned()
            .collect()
    }
}

/// Scales traffic with a normalizer fitted on `fit_rows` only, then windows
/// the whole series.
pub fn prepare_task(
    src: &TaskSource,
    spec: &WindowSpec,
    fit_rows: Range<usize>,
    length_scale: f64,
) -> Result<PreparedTask> {
    let d = src.frame.dims();
    if src.cell_positions.len() != d {
        return Err(Error::Shape(format!(
            "{} cell positions for {} cells",
            src.cell_positions.len(),
            d
        )));
    }
    if fit_rows.is_empty() || fit_rows.end > src.frame.len() {
        return Err(Error::Sizing(format!(
            "normalizer range {:?} outside a series of {} rows",
            fit_rows,
            src.frame.len()
        )));
    }
    let fit = &src.frame.values()[fit_rows.start * d..fit_rows.end * d];
    let normalizer = Normalizer::fit(fit, d)?;
    let scaled = normalizer.apply(src.frame.values());
    let windows = make_windows(&scaled, d, &src.exog, src.exog_dims, spec, Arc::new(src.image.clone()))?;
    let adjacency = Arc::new(build_adjacency(&src.cell_positions, length_scale)?);
    Ok(PreparedTask {
        windows,
        normalizer,
        adjacency,
        cell_ids: src.frame.cell_ids().to_vec(),
    })
}

/// Support (inner-loop) and query (outer-loop) windows of one task.
#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub name: String,
    pub support: Vec<MultimodalWindow>,
    pub query: Vec<MultimodalWindow>,
    pub adjacency: Arc<SpatialGraph>,
}

impl TaskDataset {
    /// Chronological split: the first `round(ratio·n)` windows support.
    pub fn split(
        name: impl Into<String>,
        windows: Vec<MultimodalWindow>,
        support_ratio: f64,
        adjacency: Arc<SpatialGraph>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&support_ratio) {
            return Err(Error::Config(format!("support ratio {support_ratio} outside [0, 1]")));
        }
        let n_support = (support_ratio * windows.len() as f64).round() as usize;
        let mut support = windows;
        let query = support.split_off(n_support);
        Ok(Self {
            name: name.into(),
            support,
            query,
            adjacency,
        })
    }

    pub fn dims(&self) -> Option<usize> {
        self.support
            .first()
            .or_else(|| self.query.first())
            .map(|w| w.target.len())
    }
}

/// The `N` auxiliary tasks used for meta-training.
#[derive(Clone, Debug)]
pub struct MetaDataset {
    pub tasks: Vec<TaskDataset>,
}

impl MetaDataset {
    /// Requires every task to be non-empty on both sides and to share `D`.
    pub fn new(tasks: Vec<TaskDataset>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("meta dataset needs at least one task".into()));
        }
        let d = tasks[0].dims();
        for t in &tasks {
            if t.support.is_empty() || t.query.is_empty() {
                return Err(Error::Sizing(format!(
                    "task {} has an empty support or query set",
                    t.name
                )));
            }
            if t.dims() != d {
                return Err(Error::Shape(format!(
                    "task {} has {:?} cells, expected {:?}; all tasks must share D",
                    t.name,
                    t.dims(),
                    d
                )));
            }
        }
        Ok(Self { tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(n: usize) -> Vec<MultimodalWindow> {
        let img = Arc::new(Tensor::zeros(vec![1, 1, 1]));
        (0..n)
            .map(|i| MultimodalWindow {
                target_index: i,
                horizon: 1,
                closeness_tra: vec![0.0],
                closeness_txt: vec![0.0],
                period_tra: vec![0.0],
                period_txt: vec![0.0],
                target: vec![0.0],
                image: Arc::clone(&img),
            })
            .collect()
    }

    #[test]
    fn eighty_twenty_split() {
        let t = TaskDataset::split("t", windows(100), 0.8, Arc::new(SpatialGraph::empty(1))).unwrap();
        assert_eq!((t.support.len(), t.query.len()), (80, 20));
        assert_eq!(t.support.last().unwrap().target_index, 79);
    }

    #[test]
    fn empty_query_is_rejected() {
        let t = TaskDataset::split("t", windows(10), 1.0, Arc::new(SpatialGraph::empty(1))).unwrap();
        assert!(MetaDataset::new(vec![t]).is_err());
    }
}
