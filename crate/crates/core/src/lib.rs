//! Split-learning and federated-learning simulation on synthetic image
//! data, built on a small deterministic CNN engine.

pub mod central;
pub mod data;
pub mod error;
pub mod fl;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sl;
pub mod tensor;
pub mod train;

pub use error::{CoreError, Result};
pub use tensor::Tensor;
