//! Surrogate modeling of transient PDEs on uniform grids.
//!
//! The pipeline decomposes each solution/condition field into fixed-size
//! subdomain patches, compresses every patch with a convolutional
//! autoencoder, and advances the per-patch latent vectors in time with a
//! small autoregressive network that fuses each patch with its face
//! neighbors. Rollouts run entirely in latent space; only the requested
//! timesteps are decoded back to the grid.
//!
//! Crate layout:
//! - [`nn`] — f64 tensors, a reverse-mode tape, dense/conv layers, Adam.
//! - [`field`] — grids, fields, and field time series.
//! - [`datagen`] — explicit reference solvers and data augmentation.
//! - [`decomp`] — patch decomposition, neighbor topology, normalization.
//! - [`autoencoder`] — per-field patch autoencoders.
//! - [`integrator`] — the latent time stepper and its curriculum trainer.
//! - [`rollout`] — autoregressive latent unrolling with boundary imposition.
//! - [`eval`] — nRMSE reports, persistence baseline, melt-pool depth.
//! - [`container`] — the shared binary container for datasets/checkpoints.
//! - [`config`] / [`pipeline`] — experiment configs and batch orchestration.



pub mod autoencoder;
pub mod config;
pub mod container;
pub mod datagen;

pub mod decomp;
pub mod error;
pub mod eval;

pub mod field;
pub mod integrator;

pub mod nn;
pub mod pgm;
pub mod pipeline;
pub mod rollout;




pub use error::{Error, Result};
