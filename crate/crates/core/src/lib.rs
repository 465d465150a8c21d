pub mod attention;
pub mod cli;
pub mod config;
pub mod error;
pub mod explain;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod thread;
pub mod train;

pub use error::{Error, Result};
