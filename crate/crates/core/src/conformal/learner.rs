use std::ops::Range;
use std::sync::Arc;

use super::calibrate::FoldLearner;
use crate::data::{MultimodalWindow, Normalizer, SpatialGraph};
use crate::error::{Error, Result};
use crate::meta::{finetune, FinetuneConfig};
use crate::model::{predict, ModelConfig, ParameterSet, WindowBatch};
use crate::numerics::rng;

/// Fine-tunes a fresh copy of `init` on each requested window range.
/// Rows are window indices; outputs are denormalized.
#[derive(Clone, Debug)]
pub struct ModelLearner {
    pub model: ModelConfig,
    pub init: ParameterSet,
    pub windows: Vec<MultimodalWindow>,
    pub normalizer: Normalizer,
    pub adjacency: Arc<SpatialGraph>,
    pub finetune: FinetuneConfig,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct FittedModel {
    pub params: ParameterSet,
    pub losses: Vec<f64>,
}

impl ModelLearner {
    fn batch(&self, rows: Range<usize>) -> Result<WindowBatch> {
        let w = self
            .windows
            .get(rows.clone())
            .ok_or_else(|| Error::Sizing(format!("rows {rows:?} outside {} windows", self.windows.len())))?;
        if w.is_empty() {
            return Err(Error::Sizing("empty window range".into()));
        }
        WindowBatch::new(&self.model, w, &self.adjacency)
    }
}

impl FoldLearner for ModelLearner {
    type Fitted = FittedModel;

    fn dims(&self) -> usize {
        self.model.cells
    }

    fn n_samples(&self) -> usize {
        self.windows.len()
    }

    fn fit(&self, rows: Range<usize>) -> Result<FittedModel> {
        let batch = self.batch(rows.clone())?;
        let seed = rng::derive(self.seed, &[0xcc9, rows.start as u64, rows.end as u64]);
        let out = finetune(&self.model, &self.init, &batch, &self.finetune, seed)?;
        Ok(FittedModel {
            params: out.params,
            losses: out.losses,
        })
    }

    fn predict(&self, fitted: &FittedModel, rows: Range<usize>) -> Result<Vec<f64>> {
        let batch = self.batch(rows)?;
        Ok(self.normalizer.invert(&predict(&self.model, &fitted.params, &batch)?))
    }

    fn truth(&self, rows: Range<usize>) -> Result<Vec<f64>> {
        let w = self
            .windows
            .get(rows.clone())
            .ok_or_else(|| Error::Sizing(format!("rows {rows:?} outside {} windows", self.windows.len())))?;
        let scaled: Vec<f64> = w.iter().flat_map(|w| w.target.iter().copied()).collect();
        Ok(self.normalizer.invert(&scaled))
    }
}
