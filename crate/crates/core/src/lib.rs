//! Diagonal state space models in a teacher-student setting.
//!
//! The crate covers the forward model ([`ssm`], [`head`]), data and
//! initialization recipes ([`data`]), the training loss with its analytic
//! gradient and the polynomial equation of motion for the diagonal of `A`
//! ([`loss`]), optimizers including an adaptive Dormand-Prince gradient flow
//! integrator ([`optimize`], [`ode`]), and closed-form analysis of the
//! poisoned loss landscape ([`analysis`]). [`verify`] bundles the numeric
//! invariant suites exposed by the command line tool.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what every experiment uses.

pub mod analysis;
pub mod data;
pub mod error;
pub mod head;
mod linalg;
pub mod loss;
pub mod ode;
pub mod optimize;
pub mod rng;
pub mod scalar;
pub mod ssm;
pub mod verify;

pub use error::{Result, SsmError};
pub use scalar::Scalar;

pub type Ssm = ssm::DiagonalSsm<f64>;
pub type Mlp = head::MlpHead<f64>;
pub type HeadF64 = head::Head<f64>;
pub type Set = data::TrainingSet<f64>;
pub type Sequence = data::LabeledSequence<f64>;
pub type Gradients = loss::GradientBundle<f64>;
pub type Saddle = analysis::SaddleReport<f64>;

