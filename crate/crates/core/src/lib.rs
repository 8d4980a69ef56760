//! Kernel methods for designing and analysing two-arm randomized trials with
//! longitudinal outcomes.
//!
//! The pipeline fits a Gaussian-process model to baseline-subtracted
//! trajectories, maps each trajectory to its Fisher score, and compares arms
//! with kernel two-sample tests. Power and sample size follow from the
//! noncentral F law of the Hotelling statistic in the score space.

pub mod error;
pub mod fisherkernel;
pub mod gpmodel;
pub mod ingest;
pub mod linalg;
pub mod lmm;
pub mod numeric;
pub mod optim;
pub mod power;
pub mod simharness;
pub mod special;
pub mod twosample;

pub use error::{Error, ParseIssue, Result};
pub use gpmodel::{FitConfig, FitResult, GpParams, ObservationGrid, Trajectory};
