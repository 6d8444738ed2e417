//! Classical estimators the diffusion model is benchmarked against.

mod linear;
mod lmmse;

pub use linear::linear_interp_estimate;
pub use lmmse::{antenna_stage, fit_lmmse, frequency_stage, from_matrix, lmmse_estimate, to_matrix, LmmseModel};
