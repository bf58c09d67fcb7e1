use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::WindowSpec;
use crate::error::{Error, Result};
use crate::meta::MetaConfig;
use crate::model::ModelConfig;
use crate::sim::{SimConfig, TaskShift};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Point,
    Ablation,
    RatioSweep,
    IntervalSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Point => "point",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::RatioSweep => "ratio-sweep",
            ExperimentKind::IntervalSweep => "interval-sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// A simulated series with its own seed and perturbed parameters.
    #[default]
    Simulate,
    /// CSV files on disk.
    Files,
}

/// The dataset that is fine-tuned on and evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub source: TargetSource,
    /// Windows used for fine-tuning and calibration; the rest are test.
    pub train_windows: usize,
    /// Simulated targets only: windows after the training block.
    pub test_windows: usize,
    /// Simulated targets only: perturbation relative to `[sim]`.
    pub shift: TaskShift,
    pub traffic: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            source: TargetSource::Simulate,
            train_windows: 336,
            test_windows: 168,
            shift: TaskShift {
                amplitude: 0.3,
                base_load: 0.3,
                noise: 0.3,
            },
            traffic: None,
            events: None,
            image: None,
            cells: None,
            holidays: None,
        }
    }
}

/// Simulated auxiliary tasks for meta-training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    pub count: usize,
    /// Windows per task (support plus query).
    pub windows: usize,
    pub shift: TaskShift,
    pub support_ratio: f64,
    /// Adjacency kernel length scale in meters, shared with the target.
    pub length_scale: f64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            count: 4,
            windows: 336,
            shift: TaskShift {
                amplitude: 0.2,
                base_load: 0.2,
                noise: 0.2,
            },
            support_ratio: 0.8,
            length_scale: 250.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalSpec {
    pub alphas: Vec<f64>,
    /// Fold counts; `2` is the inductive split.
    pub folds: Vec<usize>,
    /// Per-dimension level `α/D` instead of `α`.
    pub bonferroni: bool,
}

impl Default for ConformalSpec {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, 0.15, 0.25],
            folds: vec![5],
            bonferroni: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Simulated-to-real ratios; `0` means real data only.
    pub ratios: Vec<usize>,
    pub horizons: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0, 1, 2, 3, 4, 8],
            horizons: vec![1, 24],
        }
    }
}

/// One experiment, read from a TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub kind: ExperimentKind,
    /// Empty means `runs/` under the working directory.
    pub out_dir: PathBuf,
    pub sim: SimConfig,
    pub aux: AuxConfig,
    pub target: TargetConfig,
    pub window: WindowSpec,
    pub model: ModelConfig,
    pub meta: MetaConfig,
    pub conformal: ConformalSpec,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            let t = &mut cfg.target;
            for p in [
                &mut t.traffic,
                &mut t.events,
                &mut t.image,
                &mut t.cells,
                &mut t.holidays,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.window.validate()?;
        self.meta.validate()?;
        let c = &self.conformal;
        if let Some(a) = c.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("significance {a} outside (0, 1)")));
        }
        if let Some(k) = c.folds.iter().find(|k| **k < 2) {
            return Err(Error::Config(format!("fold count {k} must be at least 2")));
        }
        if self.aux.count == 0 || self.aux.windows < 2 {
            return Err(Error::Config("need at least one auxiliary task of two windows".into()));
        }
        if !(self.aux.support_ratio > 0.0 && self.aux.support_ratio < 1.0) {
            return Err(Error::Config(format!(
                "support ratio {} outside (0, 1)",
                self.aux.support_ratio
            )));
        }
        if self.target.train_windows < 2 {
            return Err(Error::Config("target needs at least two training windows".into()));
        }
        if self.sweep.horizons.iter().any(|h| *h == 0) {
            return Err(Error::Config("sweep horizons must be >= 1".into()));
        }
        if self.target.source == TargetSource::Files {
            let t = &self.target;
            for (name, p) in [
                ("traffic", &t.traffic),
                ("events", &t.events),
                ("image", &t.image),
                ("cells", &t.cells),
            ] {
                match p {
                    None => return Err(Error::Config(format!("file target needs a {name} path"))),
                    Some(p) if !p.exists() => return Err(Error::Config(format!("{name} file {p:?} does not exist"))),
                    _ => {}
                }
            }
            if let Some(p) = &t.holidays {
                if !p.exists() {
                    return Err(Error::Config(format!("holiday file {p:?} does not exist")));
                }
            }
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `<kind>-s<seed>-<hash>`, shared by every artifact of a run.
    pub fn stem(&self) -> String {
        format!("{}-s{}-{}", self.kind.name(), self.seed, self.hash())
    }
}
