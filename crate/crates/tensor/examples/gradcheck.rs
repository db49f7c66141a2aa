//! Builds a small two-layer network on the tape, prints its loss and
//! gradient norm, then checks every gradient against central differences.
//!
//! ```text
//! cargo run --example gradcheck
//! ```

use poremamba_tensor::check::{gradcheck, probe, weights, REL_TOL};
use poremamba_tensor::ops;
use poremamba_tensor::{Tape, Tensor, Var};

fn tensor(shape: &[usize], seed: u64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), weights(len, seed)).unwrap()
}

fn net<'t>(_: &'t Tape, v: &[Var<'t>]) -> Var<'t> {
    let h = ops::pointwise_linear(v[0], v[1], Some(v[2])).unwrap().gelu().unwrap();
    let y = ops::pointwise_linear(h, v[3], Some(v[4])).unwrap();
    probe(ops::global_mean(y).unwrap(), 9)
}

fn main() {
    // [B, C, D, H, W] input, two pointwise layers with a GELU between
    let inputs = vec![
        tensor(&[2, 3, 2, 2, 2], 1),
        tensor(&[5, 3], 2),
        tensor(&[5], 3),
        tensor(&[1, 5], 4),
        tensor(&[1], 5),
    ];
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = net(&tape, &vars);
    tape.backward(loss).unwrap();
    let norm: f64 = vars
        .iter()
        .flat_map(|v| v.grad().unwrap())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    println!("loss {:.6}  |grad| {:.6}  nodes {}", loss.item(), norm, tape.len());

    let worst = gradcheck(&inputs, net);
    println!("worst relative error {worst:.3e} (tolerance {REL_TOL:.0e})");
}
