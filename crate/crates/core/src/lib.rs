//! Symmetric periodic simultaneous-binary-collision orbits of the planar
//! pairwise symmetric four-body problem: regularized dynamics, the
//! equal-mass orbit, continuation in the mass ratio and linear stability.

pub mod continuation;
pub mod coords;
pub mod dual;
pub mod dynamics;
pub mod eigen;
pub mod equalmass;
pub mod error;
pub mod integrate;
pub mod orbitrep;
pub mod stability;
pub mod symmetry;

pub use error::{Error, Result};
