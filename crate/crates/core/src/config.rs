//! Pipeline configuration as TOML.
//!
//! Every key is optional; omitted keys take the base configuration:
//!
//! ```toml
//! class_count = 18
//! background_class = 1
//! margin = 0.0
//! beta = 0.9
//! weight_mode = "base_plus_factor"   # or "factor_only"
//! pool_reduction = "sum"             # or "mean", "max"
//! intervals = [[-3.0, -2.0, "BL"], [-5.0, 3.0, "UL"]]
//!
//! [grid]
//! min = [-51.2, -51.2, -5.0]
//! max = [51.2, 51.2, 3.0]
//! voxel_size = [0.8, 0.8, 0.8]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::DEFAULT_BETA;
use crate::heights::{HeightError, HeightInterval, HeightIntervalSet, Layer, PoolReduction};
use crate::ingest::UNLABELED;
use crate::voxelizer::{GridError, GridSpec, LdoOptions, WeightMode};

pub const DEFAULT_CLASS_COUNT: u16 = 18;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Parse(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Heights(#[from] HeightError),
    #[error("config field `{field}`: {detail}")]
    Invalid { field: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub voxel_size: [f64; 3],
}

impl From<&GridSpec> for GridSection {
    fn from(s: &GridSpec) -> Self {
        Self {
            min: s.min(),
            max: s.max(),
            voxel_size: s.voxel_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    class_count: u16,
    background_class: u16,
    margin: f64,
    beta: f64,
    weight_mode: WeightMode,
    pool_reduction: PoolReduction,
    intervals: Vec<(f64, f64, Layer)>,
    grid: GridSection,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            class_count: DEFAULT_CLASS_COUNT,
            background_class: 1,
            margin: 0.0,
            beta: DEFAULT_BETA,
            weight_mode: WeightMode::default(),
            pool_reduction: PoolReduction::default(),
            intervals: HeightIntervalSet::default()
                .intervals()
                .iter()
                .map(|iv| (iv.z_min, iv.z_max, iv.layer))
                .collect(),
            grid: GridSection::from(&GridSpec::base()),
        }
    }
}

/// Validated pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub class_count: u16,
    pub grid: GridSpec,
    pub intervals: HeightIntervalSet,
    pub options: LdoOptions,
    pub beta: f64,
    pub pool_reduction: PoolReduction,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        RawConfig::default().validate().expect("defaults are valid")
    }
}

impl RawConfig {
    fn validate(self) -> Result<PipelineConfig, ConfigError> {
        if self.class_count < 2 || self.class_count == UNLABELED {
            return Err(ConfigError::Invalid {
                field: "class_count",
                detail: format!("{} must be in 2..{UNLABELED}", self.class_count),
            });
        }
        if self.background_class == 0 || self.background_class >= self.class_count {
            return Err(ConfigError::Invalid {
                field: "background_class",
                detail: format!("{} must be in 1..{}", self.background_class, self.class_count),
            });
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(ConfigError::Invalid {
                field: "margin",
                detail: format!("{} must be finite and >= 0", self.margin),
            });
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ConfigError::Invalid {
                field: "beta",
                detail: format!("{} must be finite and >= 0", self.beta),
            });
        }
        let grid = GridSpec::new(self.grid.min, self.grid.max, self.grid.voxel_size)?;
        let intervals = HeightIntervalSet::new(
            self.intervals
                .into_iter()
                .map(|(lo, hi, layer)| HeightInterval::new(lo, hi, layer))
                .collect::<Result<_, _>>()?,
        )?;
        Ok(PipelineConfig {
            class_count: self.class_count,
            grid,
            intervals,
            options: LdoOptions {
                margin: self.margin,
                background_class: self.background_class,
                weight_mode: self.weight_mode,
            },
            beta: self.beta,
            pool_reduction: self.pool_reduction,
        })
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.validate()
    }

    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            class_count: self.class_count,
            background_class: self.options.background_class,
            margin: self.options.margin,
            beta: self.beta,
            weight_mode: self.options.weight_mode,
            pool_reduction: self.pool_reduction,
            intervals: self
                .intervals
                .intervals()
                .iter()
                .map(|iv| (iv.z_min, iv.z_max, iv.layer))
                .collect(),
            grid: GridSection::from(&self.grid),
        };
        toml::to_string(&raw).expect("config serializes")
    }
}
