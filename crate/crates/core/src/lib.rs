//! Learned nonlinear dynamic models that carry a fixed-size state standing
//! in for the posterior over hidden causes, trained one timestep at a time
//! and then mixed into a single time-invariant update.
//!
//! The crate covers the model itself ([`spr`]), its training
//! ([`training`]), the comparison models ([`baselines`]), synthetic and
//! file-backed data ([`datasets`]) and forecast scoring ([`evaluation`]).

pub mod baselines;
mod codec;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod spr;
pub mod training;

pub use codec::FORMAT_VERSION;
pub use error::{Error, Result};
