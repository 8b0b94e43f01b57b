//! Recurrent and transformer GANs for augmenting wearable-sensor activity
//! windows, with the classifiers, metrics and timing harness used to judge
//! the synthetic data.

pub mod error;
pub mod datasets;
pub mod evaluation;
pub mod io;
pub mod models;
pub mod nn;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Tape, Tensor, Var};
