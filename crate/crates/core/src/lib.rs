//! Bootstrap percolation and kinetically constrained models on finite windows of Z and Z².
//!
//! The crate is organised bottom-up: [`lattice`] and [`rng`] hold configurations and
//! random streams, [`family`] holds update families and their constraints, [`bootstrap`]
//! and [`legalpath`] are the deterministic dynamics, [`kcm`] and [`spectra`] the
//! stochastic ones, and [`classify`], [`eastcomb`] and [`stats`] are analysis layers.

pub mod bootstrap;
pub mod classify;
pub mod cli;
pub mod eastcomb;
pub mod error;
pub mod family;
pub mod kcm;
pub mod lattice;
pub mod legalpath;
pub mod rng;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use family::UpdateFamily;
pub use lattice::{BoundaryCondition, Configuration, Region, Site};
pub use rng::RandomStream;
