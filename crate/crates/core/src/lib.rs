//! Training-set design experiments for recurrent models of the Lorenz'63
//! system.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynsys`]: the Lorenz system, RK4, fixed points, Lyapunov spectrum.
//! - [`sampling`]: the training-set builders, the Kac sample budget and
//!   the normalization scaler.
//! - [`lstm`]: a from-scratch stacked LSTM with a logistic output head.
//! - [`training`]: teacher-forced truncated BPTT with Adam.
//! - [`eval`]: closed-loop prediction, valid time, correlation dimension
//!   and ensemble experiments.
//! - [`analysis`]: t-SNE of parameter vectors, radial distributions and
//!   d2 histograms.

pub mod dynsys;
pub mod analysis;
pub mod error;
pub mod eval;
pub mod lstm;
pub mod sampling;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
