//! Tightly coupled factor-graph solver for camera poses, landmarks and the
//! camera-to-laser extrinsic.

mod factors;
mod graph;
mod solve;

pub use factors::{
    huber, point_to_plane_residual, point_to_point_residual, reprojection_residual, PlaneFactor, PointFactor,
    ReprojectionFactor, ReprojectionLinearization,
};
pub use graph::{CalibrationGraph, CostBreakdown, HuberDeltas};
pub use solve::{solve, GaugeMode, IterationRecord, Reassociator, SolveConfig, SolveReport, Termination};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("normal equations are singular (condition {condition:.3e}, nullity {nullity})")]
    SingularNormalEquations { condition: f64, nullity: usize },
    #[error("solver did not converge after {} iterations", report.iterations)]
    NonConvergence { report: Box<SolveReport> },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}
