//! Numerical solvers for Itô stochastic delay-differential equations with
//! several arbitrary fixed delays.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod problem;
pub mod schemes;

pub use error::{Result, SddeError};
