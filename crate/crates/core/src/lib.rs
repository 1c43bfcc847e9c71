pub mod channels;
pub mod cli;
pub mod engine;
pub mod entropy;
pub mod error;
pub mod qcore;
pub mod thermo;
pub use error::{Error, Result};
