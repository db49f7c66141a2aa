//! Dense `f64` tensors with a define-by-run reverse-mode tape.
//!
//! The engine covers the operations needed by the volumetric regression
//! networks in `poremamba`: strided patch convolution, channel-wise linear
//! maps, normalization layers, attention primitives, pooling and a handful
//! of elementwise nonlinearities. Every operation records an adjoint rule on
//! the [`Tape`] it was built on; [`Tape::backward`] sweeps the tape in reverse.
//!
//! A tape can also be created in symbolic mode, where operations only
//! propagate shapes. This is used to count retained activations without
//! allocating them.

mod error;
mod tape;
mod tensor;

pub mod check;
pub mod ops;

pub use error::{Result, TensorError};
pub use tape::{BackwardCtx, Footprint, Origin, Tape, Var};
pub use tensor::{numel, Tensor};
