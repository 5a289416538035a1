pub mod analysis;
pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod spans;

pub use error::{Error, Result};
