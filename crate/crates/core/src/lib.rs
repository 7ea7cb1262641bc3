//! Privacy mappings that trade expected distortion against information
//! leakage to adversaries with exact, biased or uncertain knowledge of the
//! joint statistics of private and useful data.
//!
//! All quantities are in nats unless a function says otherwise.

pub mod census;
pub mod cli;
pub mod error;
pub mod io;
pub mod matrix;
pub mod model;
pub mod objective;
pub mod priors;
pub mod prob;
pub mod solver;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{AdversaryPrior, DistortionSpec, PrivacyModel, SupportLevel};
pub use priors::DirichletPrior;
pub use prob::{Channel, Dist, JointDist};
pub use solver::{SolveConfig, SolveResult, Status};
