use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

/// `ln(1 + e^x)`, returning `x` itself above 30 where the correction is
/// below double precision.
pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Exact (erf-based) Gaussian error linear unit.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Neg,
    Exp,
    Softplus,
    Gelu,
    Relu,
    Square,
    Scale(f64),
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Neg => "neg",
            Unary::Exp => "exp",
            Unary::Softplus => "softplus",
            Unary::Gelu => "gelu",
            Unary::Relu => "relu",
            Unary::Square => "square",
            Unary::Scale(_) => "scale",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Softplus => softplus_scalar(x),
            Unary::Gelu => gelu_scalar(x),
            Unary::Relu => x.max(0.0),
            Unary::Square => x * x,
            Unary::Scale(c) => c * x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Exp => y,
            Unary::Softplus => sigmoid_scalar(x),
            Unary::Gelu => gelu_derivative(x),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Scale(c) => c,
        }
    }
}

pub fn unary<'t>(x: Var<'t>, kind: Unary) -> Result<Var<'t>> {
    let tape = x.tape();
    let shape = x.shape();
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(kind.name(), shape, &[x], 0));
    }
    let xv = x.value();
    let out: Vec<f64> = xv.iter().map(|&v| kind.apply(v)).collect();
    let yv = Rc::new(out);
    let y_saved = Rc::clone(&yv);
    tape.record_rc(kind.name(), shape, yv, &[x], 0, move |ctx| {
        let g = ctx
            .grad
            .iter()
            .zip(xv.iter().zip(y_saved.iter()))
            .map(|(g, (&x, &y))| g * kind.derivative(x, y))
            .collect();
        vec![Some(g)]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

/// Output shape of a broadcast between equal-rank shapes where each axis
/// pair is equal or contains a 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(TensorError::shape(
            op,
            format!("rank mismatch {a:?} vs {b:?}"),
        ));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(TensorError::shape(
                op,
                format!("cannot broadcast {a:?} with {b:?}"),
            )),
        })
        .collect()
}

/// For each element of `out`, the linear index of the broadcast source in
/// a tensor of shape `src`.
fn broadcast_map(out: &[usize], src: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut src_strides = vec![0usize; rank];
    let mut s = 1;
    for ax in (0..rank).rev() {
        src_strides[ax] = if src[ax] == 1 { 0 } else { s };
        s *= src[ax];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        map.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= src_strides[ax] * out[ax];
            idx[ax] = 0;
        }
    }
    map
}

fn reduce_to(grad: &[f64], map: Option<&[usize]>, len: usize) -> Vec<f64> {
    match map {
        None => grad.to_vec(),
        Some(m) => {
            let mut out = vec![0.0; len];
            for (g, &i) in grad.iter().zip(m) {
                out[i] += g;
            }
            out
        }
    }
}

/// Elementwise binary operation with singleton-axis broadcasting. The
/// adjoint of a broadcast operand is summed over its broadcast axes.
pub fn binary<'t>(a: Var<'t>, b: Var<'t>, kind: Binary) -> Result<Var<'t>> {
    let tape = a.tape();
    let (sa, sb) = (a.shape(), b.shape());
    let out_shape = broadcast_shape(kind.name(), &sa, &sb)?;
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(kind.name(), out_shape, &[a, b], 0));
    }
    let (av, bv) = (a.value(), b.value());
    let map_a = (sa != out_shape).then(|| broadcast_map(&out_shape, &sa));
    let map_b = (sb != out_shape).then(|| broadcast_map(&out_shape, &sb));
    let n = numel(&out_shape);
    let at = |i: usize| match &map_a {
        Some(m) => av[m[i]],
        None => av[i],
    };
    let bt = |i: usize| match &map_b {
        Some(m) => bv[m[i]],
        None => bv[i],
    };
    let out: Vec<f64> = match kind {
        Binary::Add => (0..n).map(|i| at(i) + bt(i)).collect(),
        Binary::Sub => (0..n).map(|i| at(i) - bt(i)).collect(),
        Binary::Mul => (0..n).map(|i| at(i) * bt(i)).collect(),
    };
    let (na, nb) = (av.len(), bv.len());
    tape.record(kind.name(), out_shape, out, &[a, b], 0, move |ctx| {
        let g = ctx.grad;
        let ga = ctx.needs[0].then(|| match kind {
            Binary::Add | Binary::Sub => reduce_to(g, map_a.as_deref(), na),
            Binary::Mul => {
                let prod: Vec<f64> = (0..g.len())
                    .map(|i| {
                        g[i] * match &map_b {
                            Some(m) => bv[m[i]],
                            None => bv[i],
                        }
                    })
                    .collect();
                reduce_to(&prod, map_a.as_deref(), na)
            }
        });
        let gb = ctx.needs[1].then(|| match kind {
            Binary::Add => reduce_to(g, map_b.as_deref(), nb),
            Binary::Sub => {
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                reduce_to(&neg, map_b.as_deref(), nb)
            }
            Binary::Mul => {
                let prod: Vec<f64> = (0..g.len())
                    .map(|i| {
                        g[i] * match &map_a {
                            Some(m) => av[m[i]],
                            None => av[i],
                        }
                    })
                    .collect();
                reduce_to(&prod, map_b.as_deref(), nb)
            }
        });
        vec![ga, gb]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};

    #[test]
    fn closed_forms() {
        assert!((softplus_scalar(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus_scalar(40.0), 40.0);
        assert!(softplus_scalar(-800.0) >= 0.0);
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(
            broadcast_shape("t", &[1, 3, 1], &[2, 3, 4]).unwrap(),
            vec![2, 3, 4]
        );
        assert!(broadcast_shape("t", &[2, 3], &[3, 3]).is_err());
        assert!(broadcast_shape("t", &[3], &[1, 3]).is_err());
    }

    #[test]
    fn broadcast_adjoint_sums_over_broadcast_axes() {
        let tape = Tape::new();
        let a = tape.param(&Tensor::from_fn(&[2, 3, 2], |i| i as f64));
        let b = tape.param(&Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let y = binary(a, b, Binary::Mul).unwrap();
        let s = crate::ops::sum(y).unwrap();
        tape.backward(s).unwrap();
        let gb = b.grad().unwrap();
        // oracle: d/d b[c] = sum over n, w of a[n, c, w]
        let av: Vec<f64> = (0..12).map(|i| i as f64).collect();
        for c in 0..3 {
            let mut e = 0.0;
            for n in 0..2 {
                for w in 0..2 {
                    e += av[n * 6 + c * 2 + w];
                }
            }
            assert_eq!(gb[c], e);
        }
    }
}
