//! Minimal dense-tensor library with reverse-mode automatic differentiation.
//!
//! Values are 64-bit floats in row-major order. A forward pass records onto a
//! [`Tape`]; [`Tape::backward`] sweeps it once in reverse. Parameters live in a
//! [`ParamStore`] and are bound to a tape through [`Bindings`], which can mark
//! whole name prefixes as frozen.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use error::{NumericsError, Result};
pub use params::{Bindings, ParamStore};
pub use tape::{concat_cols, concat_rows, Gradients, Tape, Var};
pub use tensor::Tensor;
