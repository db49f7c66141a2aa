//! Differentiable operations. Each records its adjoint on the tape of its
//! first operand; on a symbolic tape only shapes are propagated.

mod dropout;
mod elementwise;
mod linear;
mod norm;
mod reduce;
mod resize;
mod structural;

pub use dropout::dropout;
pub use elementwise::{
    binary, broadcast_shape, gelu_scalar, sigmoid_scalar, softplus_scalar, unary, Binary, Unary,
};
pub use linear::{linear_head, matmul, matmul_t, patch_conv, pointwise_linear};
pub use norm::{batch_norm, layer_norm, Mode, RunningStats, DEFAULT_EPS};
pub use reduce::{global_mean, mean, mse_loss, softmax, sum};
pub use resize::trilinear_resize;
pub use structural::{narrow, reshape};

use crate::error::Result;
use crate::tape::Var;

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        binary(self, other, Binary::Mul)
    }

    pub fn neg(self) -> Result<Var<'t>> {
        unary(self, Unary::Neg)
    }

    pub fn exp(self) -> Result<Var<'t>> {
        unary(self, Unary::Exp)
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        unary(self, Unary::Softplus)
    }

    pub fn gelu(self) -> Result<Var<'t>> {
        unary(self, Unary::Gelu)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        unary(self, Unary::Relu)
    }

    pub fn square(self) -> Result<Var<'t>> {
        unary(self, Unary::Square)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        unary(self, Unary::Scale(c))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        reshape(self, shape)
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        narrow(self, axis, start, len)
    }

    pub fn sum(self) -> Result<Var<'t>> {
        sum(self)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        mean(self)
    }
}
