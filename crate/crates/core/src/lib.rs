pub mod anchors;
pub mod avs;
pub mod data;
pub mod error;
pub mod exec;
pub mod kploss;
pub mod nn;
pub mod trainer;

pub use error::{KpError, Result};
