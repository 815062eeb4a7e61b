//! Minimal dense kernel: forward ops with hand-derived backward rules, an
//! Adam optimizer and a finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::finite_diff_check;
pub use ops::{causal_mhsa, ffn, layer_norm, linear, AttentionParams, FfnParams, LN_EPS};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
