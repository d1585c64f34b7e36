//! Simulation and analysis of post-selected polarization entanglement produced by
//! interfering a heralded SPDC photon with a weak coherent pulse on a beam splitter.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod fock;
pub mod optics;
pub mod record;
pub mod scenario;
pub mod sources;

pub use error::{Error, Result};
