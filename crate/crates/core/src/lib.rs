//! Homogeneous nilpotent Lie groups with anisotropic dilations: quasi-norms,
//! atoms with vanishing moments, radial maximal functions on grids, and
//! decision procedures for when two dilation matrices yield equivalent
//! quasi-norms or equal Hardy spaces.

pub mod atoms;
pub mod classify;
pub mod dilations;
pub mod error;
pub mod grid;
pub mod lie;
pub mod linalg;
pub mod maximal;
pub mod moments;
pub mod quasinorm;
pub mod rng;

pub use error::{Error, Result};
