use serde::{Deserialize, Serialize};

use crate::data::WindowSpec;
use crate::error::{Error, Result};

/// How the output layer combines the two pooled branch vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// `ŷ = h_c·W₁ + h_p·W₂ + b` with `W₁, W₂ ∈ R^{d×D}`.
    #[default]
    Matrix,
    /// `ŷ = (w₁·h_c + w₂·h_p)·P + b` with scalar `w₁, w₂` and `P ∈ R^{d×D}`
    /// in the body.
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub heads: usize,
    pub blocks: usize,
    pub dropout: f64,
    /// Channels of both 3×3 convolutions.
    pub cnn_channels: usize,
    pub closeness: usize,
    pub period: usize,
    pub cells: usize,
    pub text_dims: usize,
    /// `[W, H, C]`.
    pub image: [usize; 3],
    pub head: HeadKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            heads: 4,
            blocks: 2,
            dropout: 0.05,
            cnn_channels: 4,
            closeness: 3,
            period: 3,
            cells: 6,
            text_dims: 34,
            image: [8, 8, 2],
            head: HeadKind::Matrix,
        }
    }
}

impl ModelConfig {
    /// Copies the data-dependent dimensions into `self`.
    pub fn with_data(mut self, cells: usize, text_dims: usize, image: &[usize], window: &WindowSpec) -> Result<Self> {
        let image: [usize; 3] = image
            .try_into()
            .map_err(|_| Error::Shape(format!("image must be W×H×C, got {image:?}")))?;
        self.cells = cells;
        self.text_dims = text_dims;
        self.image = image;
        self.closeness = window.closeness;
        self.period = window.period;
        self.validate()?;
        Ok(self)
    }

    pub fn head_width(&self) -> usize {
        self.hidden / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("model: {m}")));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return fail(format!(
                "hidden width {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            ));
        }
        if self.blocks == 0 {
            return fail("need at least one ST-block".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.cnn_channels == 0 || self.closeness == 0 || self.period == 0 || self.cells == 0 {
            return fail("channel, window and cell counts must be positive".into());
        }
        if self.image.iter().any(|&x| x == 0) {
            return fail(format!("image dims {:?} must be positive", self.image));
        }
        Ok(())
    }
}
