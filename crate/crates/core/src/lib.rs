pub mod error;
pub mod estimator;
pub mod fluctuations;
pub mod keyrate;
pub mod observables;
pub mod photonstats;
pub mod scenario;
pub mod channel;
pub mod cli;
pub mod special;

pub use error::{Error, Result};
