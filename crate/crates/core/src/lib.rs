//! Two two-level atoms crossing a single-mode cavity with delayed Gaussian
//! couplings: Hamiltonians, adiabatic spectra, mixing angles, coherent and
//! damped propagation, and the entangling and teleportation sequences built
//! from them.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod model;
pub mod numerics;
pub mod ode;
pub mod protocols;
pub mod spectrum;

pub use error::{Error, Result};
