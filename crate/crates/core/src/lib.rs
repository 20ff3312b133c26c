//! Pseudo-spectral laboratory for the stability of monotone shear flows.
//!
//! Perturbations of a shear `(b(y), 0)` in the two-dimensional Navier-Stokes
//! equations are studied in the moving frame `z = x - t b(t,y)`, `v = b(t,y)`,
//! where transport by the background becomes a tilt of the Fourier symbol.

pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linear;
pub mod numerics;
pub mod oracles;

pub use error::{Error, Result};
pub mod multipliers;
pub mod profile;
pub mod rayleigh;
pub mod simulator;
