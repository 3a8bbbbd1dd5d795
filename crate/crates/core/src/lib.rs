//! Local-density-aware dense occupancy (LDO) ground truth from multi-frame
//! LiDAR scenes, plus reference forward passes for height-guided pooling,
//! global-local fusion, the weighted occupancy loss and occupancy metrics.

pub mod aggregation;
pub mod config;
pub mod feature;
pub mod fusion;
pub mod geometry;
pub mod heights;
pub mod ingest;
pub mod metrics;
pub mod tensor_file;
pub mod voxelizer;
mod wire;

pub use wire::FormatError;

/// Label of a voxel that holds no points. Never a point or box label.
pub const EMPTY: u16 = 0;

pub use aggregation::{build_dense_cloud, DenseCloud};
pub use config::{ConfigError, PipelineConfig};
pub use feature::{FeatureError, FeatureGrid};
pub use geometry::{OrientedBox, RigidTransform};
pub use ingest::{load_scene, IngestError, SceneSequence};
pub use metrics::{evaluate, OccEvalReport};
pub use voxelizer::{build_ldo, GridSpec, LdoGrid, LdoOptions, WeightMode};
