//! Event-camera simulation and closed-form events-to-video reconstruction.
//!
//! Frames are normalized intensities `f ∈ [0, 1]`. An event fires whenever
//! `ln(f + k)` at a pixel moves a full threshold away from its latched
//! reference, so a frame is recovered from the previous one and the event
//! counts `E±` as
//!
//! ```text
//! f1 = exp(θ+ E+ − θ− E−) (f0 + k) − k
//! ```
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that do not care.

pub mod error;
pub mod estimator;
pub mod io;
pub mod metrics;
pub mod reconstruct;
pub mod scalar;
pub mod search;
pub mod simulator;
pub mod synthetic;
pub mod types;
pub mod voxel;

pub use error::{Error, Result};
pub use estimator::{
    build_observations, build_observations_with, fit_all, fit_thresholds_given_k, objective, objective_gradient_check,
    Condition, FitResult, Observation, ObservationSet, RowAnchor,
};
pub use metrics::{evaluate_sequence, mse, ssim, SequenceReport};
pub use reconstruct::{count_events, reconstruct_sequence, Reconstruction, ReconstructionState};
pub use scalar::Scalar;
pub use simulator::{sample_thresholds, simulate_events, Simulator};
pub use synthetic::MovingTexture;
pub use types::{CameraParams, CountPair, Event, EventStream, Frame, Polarity, VoxelGrid};
pub use voxel::encode_voxel_grid;

pub type Frame32 = Frame<f32>;
pub type Frame64 = Frame<f64>;
pub type CameraParams32 = CameraParams<f32>;
pub type CameraParams64 = CameraParams<f64>;
pub type VoxelGrid32 = VoxelGrid<f32>;
pub type VoxelGrid64 = VoxelGrid<f64>;
pub type ObservationSet32 = ObservationSet<f32>;
pub type ObservationSet64 = ObservationSet<f64>;
pub type FitResult32 = FitResult<f32>;
pub type FitResult64 = FitResult<f64>;
