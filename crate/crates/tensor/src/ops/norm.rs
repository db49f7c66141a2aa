use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Normalizes every fibre along `axis` to zero mean and unit variance
/// (biased variance plus `eps`), then applies `gain` and `shift`.
pub fn layer_norm<'t>(
    x: Var<'t>,
    axis: usize,
    gain: Var<'t>,
    shift: Var<'t>,
    eps: f64,
) -> Result<Var<'t>> {
    const OP: &str = "layer_norm";
    let tape = x.tape();
    let xs = x.shape();
    if axis >= xs.len() {
        return Err(TensorError::shape(OP, format!("axis {axis} out of range for {xs:?}")));
    }
    let c = xs[axis];
    if gain.shape() != [c] || shift.shape() != [c] {
        return Err(TensorError::shape(
            OP,
            format!("gain {:?} / shift {:?} vs {c} channels", gain.shape(), shift.shape()),
        ));
    }
    let outer = numel(&xs[..axis]);
    let inner = numel(&xs[axis + 1..]);
    let total = outer * c * inner;
    // saved: normalized input plus one inverse std per fibre
    let saved = total + outer * inner;
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, xs, &[x, gain, shift], saved));
    }
    let (xv, gv, sv) = (x.value(), gain.value(), shift.value());
    let mut xhat = vec![0.0; total];
    let mut inv_std = vec![0.0; outer * inner];
    let mut out = vec![0.0; total];
    let mut mean = vec![0.0; inner];
    let mut var = vec![0.0; inner];
    for o in 0..outer {
        let base = o * c * inner;
        mean.fill(0.0);
        var.fill(0.0);
        for ch in 0..c {
            let row = &xv[base + ch * inner..base + (ch + 1) * inner];
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= c as f64);
        for ch in 0..c {
            let row = &xv[base + ch * inner..base + (ch + 1) * inner];
            for i in 0..inner {
                let d = row[i] - mean[i];
                var[i] += d * d;
            }
        }
        for i in 0..inner {
            inv_std[o * inner + i] = 1.0 / (var[i] / c as f64 + eps).sqrt();
        }
        for ch in 0..c {
            for i in 0..inner {
                let idx = base + ch * inner + i;
                let xh = (xv[idx] - mean[i]) * inv_std[o * inner + i];
                xhat[idx] = xh;
                out[idx] = gv[ch] * xh + sv[ch];
            }
        }
    }
    tape.record(OP, xs, out, &[x, gain, shift], saved, move |ctx| {
        let g = ctx.grad;
        let gx = ctx.needs[0].then(|| {
            let mut gx = vec![0.0; total];
            let mut m1 = vec![0.0; inner];
            let mut m2 = vec![0.0; inner];
            for o in 0..outer {
                let base = o * c * inner;
                m1.fill(0.0);
                m2.fill(0.0);
                for ch in 0..c {
                    for i in 0..inner {
                        let idx = base + ch * inner + i;
                        let gh = g[idx] * gv[ch];
                        m1[i] += gh;
                        m2[i] += gh * xhat[idx];
                    }
                }
                for ch in 0..c {
                    for i in 0..inner {
                        let idx = base + ch * inner + i;
                        let gh = g[idx] * gv[ch];
                        gx[idx] = inv_std[o * inner + i]
                            * (gh - m1[i] / c as f64 - xhat[idx] * m2[i] / c as f64);
                    }
                }
            }
            gx
        });
        let (mut gg, mut gs) = (vec![0.0; c], vec![0.0; c]);
        if ctx.needs[1] || ctx.needs[2] {
            for o in 0..outer {
                for ch in 0..c {
                    for i in 0..inner {
                        let idx = o * c * inner + ch * inner + i;
                        gg[ch] += g[idx] * xhat[idx];
                        gs[ch] += g[idx];
                    }
                }
            }
        }
        vec![gx, ctx.needs[1].then_some(gg), ctx.needs[2].then_some(gs)]
    })
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of training batches folded into the statistics.
    pub tracked: u64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            tracked: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalization over every axis except the channel axis 1.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// mean and unbiased variance into `running` with exponential `momentum`.
/// Eval mode normalizes with `running` and fails if it was never updated.
pub fn batch_norm<'t>(
    x: Var<'t>,
    gain: Var<'t>,
    shift: Var<'t>,
    running: &mut RunningStats,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<Var<'t>> {
    const OP: &str = "batch_norm";
    let tape = x.tape();
    let xs = x.shape();
    if xs.len() < 2 {
        return Err(TensorError::shape(OP, format!("input rank {} < 2", xs.len())));
    }
    let (batch, c) = (xs[0], xs[1]);
    let inner = numel(&xs[2..]);
    if gain.shape() != [c] || shift.shape() != [c] || running.mean.len() != c || running.var.len() != c {
        return Err(TensorError::shape(OP, format!("parameters do not have {c} channels")));
    }
    let count = batch * inner;
    let total = batch * c * inner;
    if mode == Mode::Eval && running.tracked == 0 {
        return Err(TensorError::State(
            "batch_norm evaluated before any training step".into(),
        ));
    }
    if mode == Mode::Train && count < 2 {
        return Err(TensorError::Usage(format!(
            "batch_norm in train mode needs at least 2 values per channel, got {count}"
        )));
    }
    let saved = total + c;
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, xs, &[x, gain, shift], saved));
    }
    let (xv, gv, sv) = (x.value(), gain.value(), shift.value());
    let idx = move |n: usize, ch: usize, i: usize| (n * c + ch) * inner + i;
    let mut mean = vec![0.0; c];
    let mut inv_std = vec![0.0; c];
    match mode {
        Mode::Train => {
            for ch in 0..c {
                let mut s = 0.0;
                for n in 0..batch {
                    for i in 0..inner {
                        s += xv[idx(n, ch, i)];
                    }
                }
                let m = s / count as f64;
                let mut ss = 0.0;
                for n in 0..batch {
                    for i in 0..inner {
                        let d = xv[idx(n, ch, i)] - m;
                        ss += d * d;
                    }
                }
                let biased = ss / count as f64;
                let unbiased = ss / (count - 1) as f64;
                mean[ch] = m;
                inv_std[ch] = 1.0 / (biased + eps).sqrt();
                running.mean[ch] = (1.0 - momentum) * running.mean[ch] + momentum * m;
                running.var[ch] = (1.0 - momentum) * running.var[ch] + momentum * unbiased;
            }
            running.tracked += 1;
        }
        Mode::Eval => {
            for ch in 0..c {
                mean[ch] = running.mean[ch];
                inv_std[ch] = 1.0 / (running.var[ch] + eps).sqrt();
            }
        }
    }
    let mut xhat = vec![0.0; total];
    let mut out = vec![0.0; total];
    for n in 0..batch {
        for ch in 0..c {
            for i in 0..inner {
                let j = idx(n, ch, i);
                xhat[j] = (xv[j] - mean[ch]) * inv_std[ch];
                out[j] = gv[ch] * xhat[j] + sv[ch];
            }
        }
    }
    tape.record(OP, xs, out, &[x, gain, shift], saved, move |ctx| {
        let g = ctx.grad;
        let mut gg = vec![0.0; c];
        let mut gs = vec![0.0; c];
        for n in 0..batch {
            for ch in 0..c {
                for i in 0..inner {
                    let j = idx(n, ch, i);
                    gg[ch] += g[j] * xhat[j];
                    gs[ch] += g[j];
                }
            }
        }
        let gx = ctx.needs[0].then(|| {
            let mut gx = vec![0.0; total];
            for n in 0..batch {
                for ch in 0..c {
                    for i in 0..inner {
                        let j = idx(n, ch, i);
                        gx[j] = match mode {
                            Mode::Eval => g[j] * gv[ch] * inv_std[ch],
                            Mode::Train => {
                                gv[ch] * inv_std[ch]
                                    * (g[j]
                                        - gs[ch] / count as f64
                                        - xhat[j] * gg[ch] / count as f64)
                            }
                        };
                    }
                }
            }
            gx
        });
        vec![gx, ctx.needs[1].then_some(gg), ctx.needs[2].then_some(gs)]
    })
}
