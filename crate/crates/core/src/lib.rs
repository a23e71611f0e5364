//! Neuroevolution of neuromodulated plastic controllers on a partially
//! observable tree-graph environment.
//!
//! The pipeline: [`features`] pretrains a fully-connected autoencoder on the
//! environment's images and turns latent codes into controller inputs;
//! [`neuromod`] runs the evolved controller with modulated Hebbian plasticity;
//! [`harness`] runs trials with mid-trial goal changes; [`evolve`] searches
//! genomes; [`analysis`] summarizes recorded neuron activations.

pub mod analysis;
pub mod config;
pub mod ctgraph;
pub mod error;
pub mod evolve;
pub mod features;
pub mod harness;
pub mod neuromod;
pub mod seed;

pub use error::{Error, Result};
