//! Grid-based motion clustering for RGB-D feature correspondences.
//!
//! Correspondences between a reference and a matched frame are binned by the
//! residual they leave under a first pose estimate. Neighboring grid cells
//! that agree on a non-static motion pattern are merged into dynamic
//! clusters; everything else is kept as static background for pose
//! refinement.

pub mod cluster;
pub mod config;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod pose_eval;
pub mod simulator;
pub mod stats;

pub use cluster::{Label, LabelEntry, LabelMap};
pub use error::{Error, Result};
pub use geometry::{Correspondence, MotionBin, Pixel, Vec3, SE3};
pub use grid::GridConfig;
pub use pipeline::{run_filter_pipeline, FilterOutput, FilterReport, PipelineConfig};
pub use pose_eval::{estimate_pose, refine_pose, rigid_align, RansacParams, Trajectory};
pub use simulator::{generate, GroundTruth, SceneConfig};
pub use stats::StatModel;
