//! Dense tensors, a reverse-mode tape, Adam, and a finite-difference checker.
//!
//! Everything is `f64`. Tensors are plain values; a [`Tape`] records one
//! computation and is discarded after its backward sweep.

mod gradcheck;
mod ops;
mod optim;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{gradcheck, Coordinate, GradcheckOptions, GradcheckReport};
pub use ops::EmptyRows;
pub use optim::{Adam, AdamConfig, ParamGroup};
pub use param::{param_rng, truncated_normal, Group, Param, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

/// Layer-norm epsilon used throughout the model.
pub const LN_EPS: f64 = 1e-12;
