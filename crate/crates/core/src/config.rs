//! Pipeline configuration, loaded from TOML.
//!
//! ```toml
//! [hsv]
//! lower = [0, 70, 170]
//! upper = [255, 255, 255]
//!
//! [detect]
//! threshold = 150
//! seed_group_gap = 20
//!
//! [traversal]
//! theta = 3
//! disk_mode = false
//! ```
//!
//! Every key is optional; missing keys take the defaults shown.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{BoundsError, HsvBounds};
use crate::detect::DetectConfig;
use crate::eval::EvalConfig;
use crate::geometry::Filter;
use crate::traversal::TraversalParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("traversal.theta must be at least 1")]
    Theta,
    #[error("eval.sigma must lie in [0, 1], got {0}")]
    Sigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsvConfig {
    pub lower: [u8; 3],
    pub upper: [u8; 3],
    /// Min-max stretch each HSV channel before thresholding.
    pub normalize: bool,
}

impl Default for HsvConfig {
    fn default() -> Self {
        Self {
            lower: HsvBounds::MARKING.lower(),
            upper: HsvBounds::MARKING.upper(),
            normalize: true,
        }
    }
}

impl HsvConfig {
    pub fn bounds(&self) -> Result<HsvBounds, BoundsError> {
        HsvBounds::new(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    pub filter: Filter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub overlay_color: [u8; 3],
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            overlay_color: [255, 0, 0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub hsv: HsvConfig,
    pub detect: DetectConfig,
    pub traversal: TraversalParams,
    pub warp: WarpConfig,
    pub output: OutputConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hsv.bounds()?;
        if self.traversal.theta == 0 {
            return Err(ConfigError::Theta);
        }
        if !(0.0..=1.0).contains(&self.eval.sigma) {
            return Err(ConfigError::Sigma(self.eval.sigma));
        }
        Ok(())
    }

    pub fn bounds(&self) -> HsvBounds {
        self.hsv.bounds().unwrap_or_default()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
