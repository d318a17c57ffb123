//! Detection-efficiency and noise thresholds for nonclassicality tests.
//!
//! The crate builds behaviors from quantum strategies, pushes them through
//! detector-loss and channel-noise models, evaluates inequality functionals
//! and locates the efficiency at which a quantum violation disappears.

pub mod behaviors;
pub mod closedform;
pub mod error;
pub mod functionals;
pub mod io;
pub mod loss;
pub mod optimize;
pub mod polytope;
pub mod qcore;

pub use error::{Error, Result};
