//! LiDAR–camera extrinsic calibration from a single static laser scan and a
//! moving stereo camera, with tools to study observability and target placement.

pub mod geometry;
pub mod evaluation;
pub mod experiment;
pub mod jsonfmt;
pub mod linalg;
pub mod observability;
pub mod optimizer;
pub mod pipeline;
pub mod placement;
pub mod scene_sim;
pub mod spatial;
pub mod segmentation;
