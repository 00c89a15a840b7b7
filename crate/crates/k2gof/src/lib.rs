//! Replication engine, file formats and command-line front end for K-2
//! rotated goodness-of-fit testing. The numerics live in `k2gof-core`.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod expr;
pub mod io;
pub mod ks;
pub mod usermodel;

pub use error::{Error, Result};
