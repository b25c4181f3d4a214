//! Language-guided human-object interaction detection.

pub mod alignment;
pub mod cli;
pub mod detection;
pub mod error;
pub mod eval;
pub mod harness;
pub mod primitives;
pub mod reasoning;
pub mod relation;
pub mod text;

pub use error::{Error, Result};
