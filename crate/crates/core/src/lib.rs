pub mod analytic;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod matrix;
pub mod network;
pub mod optim;
pub mod partition;
pub mod spectral;
pub mod sweep;
pub mod trainer;
pub mod task;

pub use error::{Error, Result};
