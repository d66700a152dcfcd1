pub mod bridge;
pub mod checkpoint;
pub mod envs;
pub mod harness;
pub mod error;
pub mod numcore;
pub mod replay;
pub mod sac;
pub mod saci;

pub use error::{Error, Result};
