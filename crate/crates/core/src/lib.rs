//! Statistical evaluation of direction-finding antennas.
//!
//! Port far-fields (analytic or sampled) are turned into steering vectors,
//! corrupted with complex Gaussian noise and fed to a single-snapshot MUSIC
//! estimator. Monte-Carlo runs over hemispherical direction grids produce
//! RMSE metrics that are used to compare antennas, rank characteristic-mode
//! sets, and post-process recorded tracks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod flightreplay;
pub mod geometry;
pub mod linalg;
pub mod modeselect;
pub mod patterns;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{Estimate, Estimator, SteeringVector};
pub use evaluation::{run_monte_carlo, EvalReport, MonteCarloConfig};

pub use geometry::DoaGrid;
pub use patterns::{Direction, FarFieldPattern, PortSet};
