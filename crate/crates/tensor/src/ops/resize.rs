use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

/// Linear interpolation taps `(lo, hi, w_hi)` mapping `src` samples onto
/// `dst` samples with aligned end points. A single destination sample
/// reads the source centre.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|j| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                j as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Applies `taps` along `axis` (forward) or its transpose (adjoint).
fn apply_axis(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    taps: &[(usize, usize, f64)],
    src_len: usize,
    transpose: bool,
) -> (Vec<f64>, Vec<usize>) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    let (from_len, to_len) = if transpose {
        (taps.len(), src_len)
    } else {
        (src_len, taps.len())
    };
    debug_assert_eq!(shape[axis], from_len);
    let mut out = vec![0.0; outer * to_len * inner];
    for o in 0..outer {
        for (j, &(lo, hi, w)) in taps.iter().enumerate() {
            for i in 0..inner {
                if transpose {
                    let g = data[(o * from_len + j) * inner + i];
                    out[(o * to_len + lo) * inner + i] += (1.0 - w) * g;
                    out[(o * to_len + hi) * inner + i] += w * g;
                } else {
                    let a = data[(o * from_len + lo) * inner + i];
                    let b = data[(o * from_len + hi) * inner + i];
                    out[(o * to_len + j) * inner + i] = (1.0 - w) * a + w * b;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = to_len;
    (out, new_shape)
}

/// Trilinear resampling of the last three axes to `target`.
///
/// End points are aligned, so equal sizes give the identity and affine
/// fields are reproduced exactly at any size.
pub fn trilinear_resize<'t>(x: Var<'t>, target: [usize; 3]) -> Result<Var<'t>> {
    const OP: &str = "trilinear_resize";
    let tape = x.tape();
    let xs = x.shape();
    if xs.len() < 3 || target.iter().any(|&t| t == 0) {
        return Err(TensorError::shape(OP, format!("{xs:?} -> {target:?}")));
    }
    let r = xs.len();
    let mut out_shape = xs.clone();
    out_shape[r - 3..].copy_from_slice(&target);
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &[x], 0));
    }
    let src = [xs[r - 3], xs[r - 2], xs[r - 1]];
    let all_taps: Vec<Vec<(usize, usize, f64)>> =
        (0..3).map(|a| taps(src[a], target[a])).collect();
    let mut data = x.value().as_ref().clone();
    let mut shape = xs.clone();
    for a in 0..3 {
        (data, shape) = apply_axis(&data, &shape, r - 3 + a, &all_taps[a], src[a], false);
    }
    let in_shape = xs;
    tape.record(OP, out_shape.clone(), data, &[x], 0, move |ctx| {
        let mut g = ctx.grad.to_vec();
        let mut shape = out_shape.clone();
        for a in (0..3).rev() {
            (g, shape) = apply_axis(&g, &shape, r - 3 + a, &all_taps[a], src[a], true);
        }
        debug_assert_eq!(shape, in_shape);
        vec![Some(g)]
    })
}
