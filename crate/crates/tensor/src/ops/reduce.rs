use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

/// Sum of all elements, shape `[1]`.
pub fn sum<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let tape = x.tape();
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic("sum", vec![1], &[x], 0));
    }
    let n = x.numel();
    let s: f64 = x.value().iter().sum();
    tape.record("sum", vec![1], vec![s], &[x], 0, move |ctx| {
        vec![Some(vec![ctx.grad[0]; n])]
    })
}

/// Mean of all elements, shape `[1]`.
pub fn mean<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let tape = x.tape();
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic("mean", vec![1], &[x], 0));
    }
    let n = x.numel();
    let s: f64 = x.value().iter().sum::<f64>() / n as f64;
    tape.record("mean", vec![1], vec![s], &[x], 0, move |ctx| {
        vec![Some(vec![ctx.grad[0] / n as f64; n])]
    })
}

/// Mean over every axis after the channel axis: `[B, C, ...] -> [B, C]`.
pub fn global_mean<'t>(x: Var<'t>) -> Result<Var<'t>> {
    const OP: &str = "global_mean";
    let tape = x.tape();
    let xs = x.shape();
    if xs.len() < 3 {
        return Err(TensorError::shape(OP, format!("need [B, C, spatial..], got {xs:?}")));
    }
    let rows = xs[0] * xs[1];
    let spatial = numel(&xs[2..]);
    let out_shape = vec![xs[0], xs[1]];
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &[x], 0));
    }
    let xv = x.value();
    let out: Vec<f64> = xv
        .chunks(spatial)
        .map(|c| c.iter().sum::<f64>() / spatial as f64)
        .collect();
    debug_assert_eq!(out.len(), rows);
    tape.record(OP, out_shape, out, &[x], 0, move |ctx| {
        let mut gx = Vec::with_capacity(rows * spatial);
        for r in 0..rows {
            gx.extend(std::iter::repeat_n(ctx.grad[r] / spatial as f64, spatial));
        }
        vec![Some(gx)]
    })
}

/// Softmax over the last axis with max subtraction.
pub fn softmax<'t>(x: Var<'t>) -> Result<Var<'t>> {
    const OP: &str = "softmax";
    let tape = x.tape();
    let xs = x.shape();
    let width = *xs.last().ok_or_else(|| TensorError::shape(OP, "rank 0"))?;
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, xs, &[x], 0));
    }
    let xv = x.value();
    let mut out = vec![0.0; xv.len()];
    for (src, dst) in xv.chunks(width).zip(out.chunks_mut(width)) {
        let m = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - m).exp();
            z += *d;
        }
        dst.iter_mut().for_each(|d| *d /= z);
    }
    let y = std::rc::Rc::new(out);
    let ys = std::rc::Rc::clone(&y);
    tape.record_rc(OP, xs, y, &[x], 0, move |ctx| {
        let mut gx = vec![0.0; ys.len()];
        for ((yr, gr), dst) in ys
            .chunks(width)
            .zip(ctx.grad.chunks(width))
            .zip(gx.chunks_mut(width))
        {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((d, y), g) in dst.iter_mut().zip(yr).zip(gr) {
                *d = y * (g - dot);
            }
        }
        vec![Some(gx)]
    })
}

/// Mean squared error between predictions and targets with equal element
/// counts. Shape `[1]`.
pub fn mse_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    const OP: &str = "mse_loss";
    let tape = pred.tape();
    let n = pred.numel();
    if n != target.numel() {
        return Err(TensorError::shape(
            OP,
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, vec![1], &[pred, target], 0));
    }
    let (pv, tv) = (pred.value(), target.value());
    let diff: Vec<f64> = pv.iter().zip(tv.iter()).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    tape.record(OP, vec![1], vec![loss], &[pred, target], 0, move |ctx| {
        let scale = 2.0 * ctx.grad[0] / n as f64;
        let gp: Vec<f64> = diff.iter().map(|d| scale * d).collect();
        let gt = ctx.needs[1].then(|| gp.iter().map(|v| -v).collect());
        vec![Some(gp), gt]
    })
}
