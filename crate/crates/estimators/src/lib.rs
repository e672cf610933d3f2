//! Parameter estimators for the simulation calibration benchmark.
//!
//! Every estimator consumes a [`cost::CalibTarget`] (reference trajectories
//! plus a shared simulation budget) and produces an [`Estimate`]: a point, a
//! particle set, or a mixture posterior over normalized parameters.

pub mod adr;
pub mod bayesopt;
pub mod bayessim;
pub mod cost;
pub mod discriminator;
pub mod estimate;
pub mod features;
pub mod maml;
pub mod policy;
pub mod regression;
pub mod reps;
pub mod simopt;
pub mod svgd;

pub use estimate::Estimate;
pub use sipe_core::mdn::gaussian;
