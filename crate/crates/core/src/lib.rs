//! Pilot-based MIMO-OFDM channel estimation with a conditional diffusion
//! transformer, plus linear-interpolation and LMMSE baselines and an NMSE
//! evaluation harness.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod container;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pilot;
pub mod plot;
pub mod train;

pub use error::{Error, Result};
