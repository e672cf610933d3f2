//! Core building blocks for simulation parameter estimation: normalized
//! parameter spaces, trajectories and discrepancy metrics, analytic
//! fixed-step simulators, and a small hand-rolled numerical kit (autodiff
//! tape, MLPs, optimizers, GP regression, Gaussian mixtures, checkpoints).

pub mod checkpoint;
pub mod error;
pub mod gp;
pub mod mdn;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod space;
pub mod trajectory;

pub use error::{CoreError, Result};
pub use metrics::{
    accuracy, aggregate, spread, trajectory_mse, trajectory_mse_unchecked_start, AccuracyVector,
    Aggregate,
};
pub use space::{ParamDef, ParamVector, ParameterSpace};
pub use trajectory::{Trajectory, TrajectorySource};
