//! Uniform sampling and approximate counting over join-project queries.

pub mod acyclic;
pub mod chain;
pub mod counting;
pub mod error;
pub mod generate;
pub mod index;
pub mod io;
pub mod matrix;
pub mod matrix_count;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod star;
pub mod verify;

pub use error::{Error, Result};
