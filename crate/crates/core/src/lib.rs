//! Dynamic-scene RGB-D processing.
//!
//! Depth frames are split into background and per-detection human parts by a
//! dual bounding-box filter, the cleaned background drives frame-to-frame
//! odometry and a point-cloud map, and human centers are tracked in world
//! coordinates. A synthetic renderer provides ground truth for all stages.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod io;
pub mod mapping;
pub mod odometry;
pub mod pipeline;
pub mod placement;
pub mod separation;
pub mod synthetic;
pub mod tracking;

pub use error::{Error, Result};
pub use evaluation::{evaluate, AteReport, StampedPose, Trajectory};
pub use geometry::{Intrinsics, Point3H, PoseSE3};
pub use image::{ColorImage, DepthImage};
pub use io::{DetectionSet, FrameBundle, TumSequence};
pub use mapping::PointCloud;
pub use odometry::{OdometryConfig, OdometryReport};
pub use pipeline::{run_pipeline, FrameTiming, Pipeline, PipelineConfig, PipelineOutput};
pub use placement::Mesh;
pub use separation::{Detection, DepthInterval, DualBoxFilter, HumanPart, SeparationResult};
pub use synthetic::SyntheticScene;
pub use tracking::{AssociationConfig, Track, Tracker};
