//! Multi-view multi-person 3D pose estimation by fusing 2D keypoint heatmaps
//! in a shared voxel grid.

pub mod calib;
pub mod config;
pub mod dataio;
pub mod depthmask;
pub mod error;
pub mod fusion;
pub mod heatmap2d;
pub mod metrics;
pub mod persons;
pub mod pipeline;
pub mod skeleton;
pub mod synthgen;
pub mod viz;

pub use calib::{CameraCalib, Distortion, Pixel};
pub use config::FusionConfig;
pub use error::{Error, Result};
pub use fusion::{GridGeometry, RoomBounds, VoxelGrid};
pub use heatmap2d::{Detection2D, Keypoint2};
pub use persons::{fuse_frame, Pose3D};
pub use skeleton::SkeletonDef;
