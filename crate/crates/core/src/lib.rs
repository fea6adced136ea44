//! Poisson point processes, Gilbert graph edge-length functionals and
//! quantitative multivariate normal approximation bounds.

pub mod bounds;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod gilbert;
pub mod linalg;
pub mod model;
pub mod numerics;
pub mod process;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
