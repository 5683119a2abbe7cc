//! Multi-class linear SVM that maximizes the smallest pairwise class margin,
//! together with its logistic variant, classical baselines and the
//! cross-validation harness used to compare them.
//!
//! A model scores a sample with `wₖᵀx + bₖ` per class and predicts the
//! argmax. Training minimizes a per-pair loss over every rival class plus
//! `λ Σ_{k<l} ‖wₖ − wₗ‖^p` and a small `ε (‖W‖²_F + ‖b‖²)` term; large `p`
//! concentrates the penalty on the closest class pair.

pub mod baselines;
pub mod cv;
pub mod data;
mod error;
pub mod io;
pub mod model;
pub mod objective;
pub mod optim;
pub mod par;
pub mod verify;

pub use error::{Error, Result};
