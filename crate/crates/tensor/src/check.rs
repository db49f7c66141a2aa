//! Central finite-difference gradient checking.

use crate::{Tape, Tensor, Var};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-2)`. The floor keeps entries whose true
/// gradient is near zero from dominating through difference noise.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

/// Deterministic weights in `[-1, 1)` from a SplitMix64 sequence.
pub fn weights(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..len)
        .map(|_| {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Contracts `y` with fixed pseudo-random weights so every output element
/// contributes a distinct adjoint.
pub fn probe<'t>(y: Var<'t>, seed: u64) -> Var<'t> {
    let w = Tensor::new(y.shape(), weights(y.numel(), seed ^ 0x9e37_79b9)).expect("matching length");
    let wv = y.tape().constant(&w);
    y.mul(wv).and_then(|p| p.sum()).expect("same shape")
}

/// Largest elementwise relative error between the tape gradient and central
/// differences, over every entry of every input.
pub fn gradcheck<F>(inputs: &[Tensor], f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&tape, &vars);
    tape.backward(loss).expect("scalar loss");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| v.grad().unwrap_or_else(|| vec![0.0; v.numel()]))
        .collect();
    let eval = |ins: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.param(t)).collect();
        f(&tape, &vars).item()
    };
    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let x0 = t.data()[j];
            work[i].data_mut()[j] = x0 + STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = x0 - STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = x0;
            let num = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[i][j], num));
        }
    }
    worst
}
