//! Run configuration with defaults matching the reference hyperparameters:
//! rank-2 threshold 0.95, fusion scale 0.04, small-object ratio 0.0048,
//! Gaussian sigma 25 px, size buckets 0.48% / 1.76%, loss weights
//! (2, 1, 10, 10, 1, 1).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::EnsembleConfig;
use crate::heatmap::{HeatmapError, HeatmapSpec, HeatmapStyle, PointingLine};
use crate::losses::{BoxLossWeights, LossWeights};
use crate::metrics::SizeBuckets;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Heatmap generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub style: HeatmapStyleKind,
    pub sigma: f64,
    pub cone_half_angle_deg: f64,
    pub line: LineSelection,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            style: HeatmapStyleKind::Gaussian,
            sigma: 25.0,
            cone_half_angle_deg: 15.0,
            line: LineSelection::Both,
        }
    }
}

impl HeatmapConfig {
    pub fn style_for(&self) -> Result<HeatmapStyle, HeatmapError> {
        match self.style {
            HeatmapStyleKind::Gaussian => HeatmapStyle::gaussian(self.sigma),
            HeatmapStyleKind::Conic => HeatmapStyle::conic(self.cone_half_angle_deg.to_radians()),
        }
    }

    pub fn spec_for(&self, line: PointingLine) -> Result<HeatmapSpec, HeatmapError> {
        Ok(HeatmapSpec {
            style: self.style_for()?,
            line,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapStyleKind {
    Gaussian,
    Conic,
}

impl std::str::FromStr for HeatmapStyleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(HeatmapStyleKind::Gaussian),
            "conic" => Ok(HeatmapStyleKind::Conic),
            other => Err(format!("unknown heatmap style `{other}`")),
        }
    }
}

/// Which pointing lines a heatmap run renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSelection {
    H2f,
    W2f,
    /// Render both lines as separate rasters.
    Both,
    /// Render both lines and merge them into one raster.
    Merged,
}

impl std::str::FromStr for LineSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h2f" => Ok(LineSelection::H2f),
            "w2f" => Ok(LineSelection::W2f),
            "both" => Ok(LineSelection::Both),
            "merged" => Ok(LineSelection::Merged),
            other => Err(format!(
                "unknown line selection `{other}` (expected h2f, w2f, both, or merged)"
            )),
        }
    }
}

/// Everything a pipeline run needs, loadable from a JSON file. Missing
/// fields fall back to the defaults, so partial configs are fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ensemble: EnsembleConfig,
    pub heatmap: HeatmapConfig,
    pub loss_weights: LossWeights,
    pub box_loss: BoxLossWeights,
    pub iou_thresholds: Vec<f64>,
    pub size_buckets: SizeBuckets,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            heatmap: HeatmapConfig::default(),
            loss_weights: LossWeights::default(),
            box_loss: BoxLossWeights::default(),
            iou_thresholds: vec![0.25, 0.5, 0.75],
            size_buckets: SizeBuckets::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let content = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&content).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| ConfigError::Invalid(m.to_string());
        self.ensemble.validate().map_err(invalid)?;
        self.loss_weights.validate().map_err(invalid)?;
        self.size_buckets.validate().map_err(invalid)?;
        if !self.heatmap.sigma.is_finite() || self.heatmap.sigma <= 0.0 {
            return Err(invalid("heatmap.sigma must be positive"));
        }
        if !(self.heatmap.cone_half_angle_deg > 0.0 && self.heatmap.cone_half_angle_deg < 90.0) {
            return Err(invalid("heatmap.cone_half_angle_deg must lie in (0, 90)"));
        }
        if self.iou_thresholds.is_empty() {
            return Err(invalid("iou_thresholds must not be empty"));
        }
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(invalid("iou_thresholds must lie in (0, 1]"));
        }
        if !(self.box_loss.l1 >= 0.0 && self.box_loss.giou >= 0.0) {
            return Err(invalid("box_loss weights must be non-negative"));
        }
        Ok(())
    }
}
