pub mod active;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
