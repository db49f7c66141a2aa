use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

/// Same values under a new shape; the adjoint is passed through unchanged.
pub fn reshape<'t>(x: Var<'t>, shape: &[usize]) -> Result<Var<'t>> {
    const OP: &str = "reshape";
    let tape = x.tape();
    if numel(shape) != x.numel() || shape.iter().any(|&d| d == 0) {
        return Err(TensorError::shape(OP, format!("{:?} -> {shape:?}", x.shape())));
    }
    if tape.is_symbolic() {
        // a view: no new storage is retained
        return Ok(tape.record_symbolic(OP, shape.to_vec(), &[x], 0));
    }
    tape.record_rc(OP, shape.to_vec(), x.value(), &[x], 0, |ctx| {
        vec![Some(ctx.grad.to_vec())]
    })
}

/// Slice `[start, start + len)` along `axis`.
pub fn narrow<'t>(x: Var<'t>, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
    const OP: &str = "narrow";
    let tape = x.tape();
    let xs = x.shape();
    if axis >= xs.len() || len == 0 || start + len > xs[axis] {
        return Err(TensorError::shape(
            OP,
            format!("axis {axis} range {start}..{} of {xs:?}", start + len),
        ));
    }
    let outer = numel(&xs[..axis]);
    let inner = numel(&xs[axis + 1..]);
    let full = xs[axis];
    let mut out_shape = xs.clone();
    out_shape[axis] = len;
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &[x], 0));
    }
    let xv = x.value();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let from = (o * full + start) * inner;
        out.extend_from_slice(&xv[from..from + len * inner]);
    }
    let total = xv.len();
    tape.record(OP, out_shape, out, &[x], 0, move |ctx| {
        let mut gx = vec![0.0; total];
        for o in 0..outer {
            let from = (o * full + start) * inner;
            gx[from..from + len * inner]
                .copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
        }
        vec![Some(gx)]
    })
}
