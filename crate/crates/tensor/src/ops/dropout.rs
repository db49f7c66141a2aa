use rand::Rng;

use crate::error::{Result, TensorError};
use crate::ops::norm::Mode;
use crate::tape::Var;

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`. Eval mode and
/// `rate == 0` are the identity.
pub fn dropout<'t, R: Rng + ?Sized>(x: Var<'t>, rate: f64, mode: Mode, rng: &mut R) -> Result<Var<'t>> {
    const OP: &str = "dropout";
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let tape = x.tape();
    if tape.is_symbolic() {
        // the mask is retained for the backward pass
        let n = x.numel();
        return Ok(tape.record_symbolic(OP, x.shape(), &[x], n));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out: Vec<f64> = x.value().iter().zip(&mask).map(|(v, m)| v * m).collect();
    let saved = mask.len();
    tape.record(OP, x.shape(), out, &[x], saved, move |ctx| {
        vec![Some(ctx.grad.iter().zip(&mask).map(|(g, m)| g * m).collect())]
    })
}
