//! Permeability regression for voxelized porous media: synthetic sample
//! generation, lattice Boltzmann ground truth, a Vision Mamba regressor with
//! transformer and CNN baselines, training, ablations and activation-memory
//! scaling measurements.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod manifest;
pub mod model;
pub mod plot;
pub mod rng;
pub mod synth;
pub mod train;
pub mod voxel;

pub use error::{Error, Result};
