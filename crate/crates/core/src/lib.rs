//! Kalman baselines, a Kalman-structured recurrent filter that learns its
//! gain and error covariance, synthetic constant-velocity data with switching
//! measurement-noise regimes, and the metrics used to compare them.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod kalman;
pub mod linalg;
pub mod run;
pub mod ssm;

pub use error::{Error, Result};
pub mod nn;
pub mod rkn;
pub mod train;
