//! Subsystem-embedding coupled cluster and coupled-cluster Green's functions
//! for small fermionic impurity models.

pub mod ccgf;
pub mod ccsolver;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod fockspace;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sesflow;

pub use error::{Error, Result};
