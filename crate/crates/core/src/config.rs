//! One JSON document configuring every command. Sections mirror the module
//! config types; unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{AugmentConfig, SynthSpec};
use crate::error::{MatteError, Result};
use crate::guidance::{GuidanceMode, PerturbConfig};
use crate::metrics::MetricRegion;
use crate::prn::{ColorNetConfig, PrnConfig};
use crate::trainer::{ColorSupervision, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainTarget {
    #[default]
    Matte,
    Color,
}

/// Where `train` takes samples from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh augmented composites (matting) or RAB samples (colour) from
    /// procedurally generated pools.
    #[default]
    Synthetic,
    /// A directory written by `synth`.
    Directory(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Redraw the guidance of directory samples every time they are used.
    pub reperturb: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            reperturb: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub regions: Vec<MetricRegion>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            regions: vec![MetricRegion::Whole, MetricRegion::Unknown],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub mode: GuidanceMode,
    /// Background colour of the panel's composite preview.
    pub panel_background: [f64; 3],
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::Binary,
            panel_background: [0.0, 0.8, 0.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthSpec,
    pub augment: AugmentConfig,
    pub model: PrnConfig,
    pub color_model: ColorNetConfig,
    pub train: TrainConfig,
    pub target: TrainTarget,
    pub color_supervision: ColorSupervision,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub refine: RefineConfig,
    /// Worker threads for data generation, training and evaluation.
    /// Results do not depend on it.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| MatteError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MatteError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Sets every seed in the document from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.rng_seed = seed;
        self.train.seed = seed;
        self.augment.perturb.rng_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        self.color_model.validate()?;
        self.train.validate()?;
        if self.workers == Some(0) {
            return Err(MatteError::Config("workers must be >= 1".into()));
        }
        if self.eval.regions.is_empty() {
            return Err(MatteError::Config("eval.regions is empty".into()));
        }
        Ok(())
    }

    pub fn perturb(&self) -> &PerturbConfig {
        &self.augment.perturb
    }
}

/// Small preset that trains in seconds; used by examples and tests.
pub fn quick_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synth.canvas = (48, 48);
    cfg.synth.count = 4;
    cfg.synth.foreground_count = 4;
    cfg.synth.background_count = 4;
    cfg.augment.crop_size = 32;
    cfg.model = PrnConfig::tiny();
    cfg.color_model = ColorNetConfig::tiny();
    cfg.train = TrainConfig {
        total_iters: 8,
        warmup_iters: 2,
        batch_size: 2,
        gt_phase_end: 2,
        mixed_phase_end: 4,
        ..Default::default()
    };
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let cfg = quick_config();
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
        assert!(RunConfig::from_json(r#"{"trian": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"total_iter": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"batch_size": 0}}"#).is_err());
        let c = RunConfig::from_json(r#"{"data": {"source": {"directory": "d"}}, "eval": {"regions": ["detail"]}}"#)
            .unwrap();
        assert_eq!(c.data.source, DataSource::Directory("d".into()));
        assert_eq!(c.eval.regions, vec![MetricRegion::Detail]);
    }
}
