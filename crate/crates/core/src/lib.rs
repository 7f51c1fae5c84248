pub mod error;
pub mod exec;
pub mod metrics;
pub mod modes;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod state;
pub mod tomography;

pub use error::{Error, Result};
