//! Multi-location epidemic forecasting with cross-location attention,
//! temporal convolution and graph message passing, trained by a small
//! reverse-mode differentiation engine.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod model;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
