//! Channel mixing: patch convolution, pointwise linear maps, batched
//! matrix products and the scalar regression head.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::numel;

/// `C (m x n) = alpha * A (m x k) * B (k x n) + beta * C` on strided views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= (m.max(1) - 1) * rsa + (k.max(1) - 1) * csa + 1 || k == 0);
    debug_assert!(b.len() >= (k.max(1) - 1) * rsb + (n - 1) * csb + 1 || k == 0);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the debug assertions above state the extents every caller
    // guarantees; all strides index inside the provided slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Per-location affine map over the channel axis.
///
/// `x`: `[B, Cin, ...]`, `weight`: `[Cout, Cin]`, `bias`: `[Cout]`.
pub fn pointwise_linear<'t>(x: Var<'t>, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
    const OP: &str = "pointwise_linear";
    let tape = x.tape();
    let xs = x.shape();
    let ws = weight.shape();
    if xs.len() < 2 {
        return Err(TensorError::shape(OP, format!("input rank {} < 2", xs.len())));
    }
    if ws.len() != 2 || ws[1] != xs[1] {
        return Err(TensorError::shape(
            OP,
            format!("weight {ws:?} does not map {} input channels", xs[1]),
        ));
    }
    let (batch, cin, cout) = (xs[0], xs[1], ws[0]);
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::shape(OP, format!("bias {:?} != [{cout}]", b.shape())));
        }
    }
    let spatial: usize = numel(&xs[2..]);
    let mut out_shape = xs.clone();
    out_shape[1] = cout;
    let parents: Vec<Var<'t>> = std::iter::once(x)
        .chain(std::iter::once(weight))
        .chain(bias)
        .collect();
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &parents, 0));
    }
    let (xv, wv) = (x.value(), weight.value());
    let bv = bias.map(|b| b.value());
    let mut out = vec![0.0; batch * cout * spatial];
    for n in 0..batch {
        let xb = &xv[n * cin * spatial..(n + 1) * cin * spatial];
        let yb = &mut out[n * cout * spatial..(n + 1) * cout * spatial];
        if let Some(bv) = &bv {
            for (co, row) in yb.chunks_mut(spatial).enumerate() {
                row.fill(bv[co]);
            }
        }
        gemm(cout, cin, spatial, 1.0, &wv, cin, 1, xb, spatial, 1, 1.0, yb, spatial, 1);
    }
    let has_bias = bias.is_some();
    tape.record(OP, out_shape, out, &parents, 0, move |ctx| {
        let g = ctx.grad;
        let gx = ctx.needs[0].then(|| {
            let mut gx = vec![0.0; batch * cin * spatial];
            for n in 0..batch {
                let gb = &g[n * cout * spatial..(n + 1) * cout * spatial];
                let gxb = &mut gx[n * cin * spatial..(n + 1) * cin * spatial];
                // W^T (cin x cout) * G (cout x S)
                gemm(cin, cout, spatial, 1.0, &wv, 1, cin, gb, spatial, 1, 0.0, gxb, spatial, 1);
            }
            gx
        });
        let gw = ctx.needs[1].then(|| {
            let mut gw = vec![0.0; cout * cin];
            for n in 0..batch {
                let gb = &g[n * cout * spatial..(n + 1) * cout * spatial];
                let xb = &xv[n * cin * spatial..(n + 1) * cin * spatial];
                // G (cout x S) * X^T (S x cin)
                gemm(cout, spatial, cin, 1.0, gb, spatial, 1, xb, 1, spatial, 1.0, &mut gw, cin, 1);
            }
            gw
        });
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(ctx.needs[2].then(|| {
                let mut gbias = vec![0.0; cout];
                for n in 0..batch {
                    for co in 0..cout {
                        let off = (n * cout + co) * spatial;
                        gbias[co] += g[off..off + spatial].iter().sum::<f64>();
                    }
                }
                gbias
            }));
        }
        grads
    })
}

/// Rearranges non-overlapping `k^3` blocks of `[B, C, D, H, W]` into
/// columns `[B, C*k^3, D'*H'*W']`, or back when `inverse`.
fn im2col(
    src: &[f64],
    dst: &mut [f64],
    dims: [usize; 5],
    k: usize,
    inverse: bool,
) {
    let [batch, c, d, h, w] = dims;
    let (dd, hh, ww) = (d / k, h / k, w / k);
    let tokens = dd * hh * ww;
    let rows = c * k * k * k;
    for n in 0..batch {
        for ci in 0..c {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = ((ci * k + kz) * k + ky) * k + kx;
                        for tz in 0..dd {
                            for ty in 0..hh {
                                let src_base = (((n * c + ci) * d + tz * k + kz) * h + ty * k + ky) * w + kx;
                                let dst_base = (n * rows + row) * tokens + (tz * hh + ty) * ww;
                                for tx in 0..ww {
                                    let s = src_base + tx * k;
                                    let t = dst_base + tx;
                                    if inverse {
                                        dst[s] = src[t];
                                    } else {
                                        dst[t] = src[s];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3D convolution with cubic kernel `k`, stride `k` and no padding, i.e. a
/// linear map of each non-overlapping `k^3` block.
///
/// `x`: `[B, Cin, D, H, W]`, `weight`: `[Cout, Cin, k, k, k]`,
/// `bias`: `[Cout]`. Output: `[B, Cout, D/k, H/k, W/k]`.
pub fn patch_conv<'t>(
    x: Var<'t>,
    weight: Var<'t>,
    bias: Option<Var<'t>>,
    k: usize,
) -> Result<Var<'t>> {
    const OP: &str = "patch_conv";
    let tape = x.tape();
    let xs = x.shape();
    let ws = weight.shape();
    if xs.len() != 5 {
        return Err(TensorError::shape(OP, format!("input must be rank 5, got {xs:?}")));
    }
    if k == 0 {
        return Err(TensorError::Config("patch size must be positive".into()));
    }
    for (axis, name) in [(2, "D"), (3, "H"), (4, "W")] {
        if xs[axis] % k != 0 {
            return Err(TensorError::Config(format!(
                "axis {name} extent {} is not divisible by patch size {k}",
                xs[axis]
            )));
        }
    }
    let (batch, cin) = (xs[0], xs[1]);
    if ws.len() != 5 || ws[1] != cin || ws[2] != k || ws[3] != k || ws[4] != k {
        return Err(TensorError::shape(
            OP,
            format!("weight {ws:?} incompatible with {cin} channels and kernel {k}"),
        ));
    }
    let cout = ws[0];
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::shape(OP, format!("bias {:?} != [{cout}]", b.shape())));
        }
    }
    let out_shape = vec![batch, cout, xs[2] / k, xs[3] / k, xs[4] / k];
    let tokens = numel(&out_shape[2..]);
    let rows = cin * k * k * k;
    let parents: Vec<Var<'t>> = [x, weight].into_iter().chain(bias).collect();
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &parents, 0));
    }
    let dims = [batch, cin, xs[2], xs[3], xs[4]];
    let (xv, wv) = (x.value(), weight.value());
    let bv = bias.map(|b| b.value());
    let mut cols = vec![0.0; batch * rows * tokens];
    im2col(&xv, &mut cols, dims, k, false);
    let mut out = vec![0.0; batch * cout * tokens];
    for n in 0..batch {
        let yb = &mut out[n * cout * tokens..(n + 1) * cout * tokens];
        if let Some(bv) = &bv {
            for (co, row) in yb.chunks_mut(tokens).enumerate() {
                row.fill(bv[co]);
            }
        }
        let cb = &cols[n * rows * tokens..(n + 1) * rows * tokens];
        gemm(cout, rows, tokens, 1.0, &wv, rows, 1, cb, tokens, 1, 1.0, yb, tokens, 1);
    }
    drop(cols);
    let has_bias = bias.is_some();
    tape.record(OP, out_shape, out, &parents, 0, move |ctx| {
        let g = ctx.grad;
        let gx = ctx.needs[0].then(|| {
            let mut gcols = vec![0.0; batch * rows * tokens];
            for n in 0..batch {
                let gb = &g[n * cout * tokens..(n + 1) * cout * tokens];
                let gc = &mut gcols[n * rows * tokens..(n + 1) * rows * tokens];
                gemm(rows, cout, tokens, 1.0, &wv, 1, rows, gb, tokens, 1, 0.0, gc, tokens, 1);
            }
            let mut gx = vec![0.0; xv.len()];
            im2col(&gcols, &mut gx, dims, k, true);
            gx
        });
        let gw = ctx.needs[1].then(|| {
            // columns are rebuilt rather than kept alive between passes
            let mut cols = vec![0.0; batch * rows * tokens];
            im2col(&xv, &mut cols, dims, k, false);
            let mut gw = vec![0.0; cout * rows];
            for n in 0..batch {
                let gb = &g[n * cout * tokens..(n + 1) * cout * tokens];
                let cb = &cols[n * rows * tokens..(n + 1) * rows * tokens];
                gemm(cout, tokens, rows, 1.0, gb, tokens, 1, cb, 1, tokens, 1.0, &mut gw, rows, 1);
            }
            gw
        });
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(ctx.needs[2].then(|| {
                let mut gbias = vec![0.0; cout];
                for n in 0..batch {
                    for co in 0..cout {
                        let off = (n * cout + co) * tokens;
                        gbias[co] += g[off..off + tokens].iter().sum::<f64>();
                    }
                }
                gbias
            }));
        }
        grads
    })
}

/// Batched matrix product of the last two axes with optional transposes:
/// `op(a) @ op(b)` where `op` transposes when the flag is set. Leading axes
/// must be equal.
pub fn matmul_t<'t>(a: Var<'t>, b: Var<'t>, trans_a: bool, trans_b: bool) -> Result<Var<'t>> {
    const OP: &str = "matmul";
    let tape = a.tape();
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sb.len() < 2 || sa.len() != sb.len() {
        return Err(TensorError::shape(OP, format!("{sa:?} x {sb:?}")));
    }
    let r = sa.len();
    if sa[..r - 2] != sb[..r - 2] {
        return Err(TensorError::shape(
            OP,
            format!("batch axes differ: {sa:?} x {sb:?}"),
        ));
    }
    let (ar, ac) = (sa[r - 2], sa[r - 1]);
    let (br, bc) = (sb[r - 2], sb[r - 1]);
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(TensorError::shape(
            OP,
            format!("inner extents differ: {sa:?} x {sb:?}"),
        ));
    }
    let batch = numel(&sa[..r - 2]);
    let mut out_shape = sa[..r - 2].to_vec();
    out_shape.extend([m, n]);
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, out_shape, &[a, b], 0));
    }
    // strides of op(a) and op(b) as logical (m x k) and (k x n) views
    let (rsa, csa) = if trans_a { (1, ac) } else { (ac, 1) };
    let (rsb, csb) = if trans_b { (1, bc) } else { (bc, 1) };
    let (av, bv) = (a.value(), b.value());
    let (sz_a, sz_b, sz_c) = (ar * ac, br * bc, m * n);
    let mut out = vec![0.0; batch * sz_c];
    for i in 0..batch {
        gemm(
            m,
            k,
            n,
            1.0,
            &av[i * sz_a..(i + 1) * sz_a],
            rsa,
            csa,
            &bv[i * sz_b..(i + 1) * sz_b],
            rsb,
            csb,
            0.0,
            &mut out[i * sz_c..(i + 1) * sz_c],
            n,
            1,
        );
    }
    tape.record(OP, out_shape, out, &[a, b], 0, move |ctx| {
        let g = ctx.grad;
        // d op(a) = G (m x n) * op(b)^T (n x k), written through op(a)'s strides
        let ga = ctx.needs[0].then(|| {
            let mut ga = vec![0.0; batch * sz_a];
            for i in 0..batch {
                gemm(
                    m,
                    n,
                    k,
                    1.0,
                    &g[i * sz_c..(i + 1) * sz_c],
                    n,
                    1,
                    &bv[i * sz_b..(i + 1) * sz_b],
                    csb,
                    rsb,
                    0.0,
                    &mut ga[i * sz_a..(i + 1) * sz_a],
                    rsa,
                    csa,
                );
            }
            ga
        });
        // d op(b) = op(a)^T (k x m) * G (m x n)
        let gb = ctx.needs[1].then(|| {
            let mut gb = vec![0.0; batch * sz_b];
            for i in 0..batch {
                gemm(
                    k,
                    m,
                    n,
                    1.0,
                    &av[i * sz_a..(i + 1) * sz_a],
                    csa,
                    rsa,
                    &g[i * sz_c..(i + 1) * sz_c],
                    n,
                    1,
                    0.0,
                    &mut gb[i * sz_b..(i + 1) * sz_b],
                    rsb,
                    csb,
                );
            }
            gb
        });
        vec![ga, gb]
    })
}

pub fn matmul<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    matmul_t(a, b, false, false)
}

/// Scalar regression head: `y[i] = w . h[i] + b` for `h: [B, C]`,
/// `w: [C]`, `b: [1]`. Output `[B, 1]`.
pub fn linear_head<'t>(h: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    const OP: &str = "linear_head";
    let tape = h.tape();
    let hs = h.shape();
    if hs.len() != 2 || w.shape() != [hs[1]] || b.numel() != 1 {
        return Err(TensorError::shape(
            OP,
            format!("h {hs:?}, w {:?}, b {:?}", w.shape(), b.shape()),
        ));
    }
    let (batch, c) = (hs[0], hs[1]);
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, vec![batch, 1], &[h, w, b], 0));
    }
    let (hv, wv, bv) = (h.value(), w.value(), b.value());
    let out: Vec<f64> = (0..batch)
        .map(|i| {
            hv[i * c..(i + 1) * c]
                .iter()
                .zip(wv.iter())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                + bv[0]
        })
        .collect();
    tape.record(OP, vec![batch, 1], out, &[h, w, b], 0, move |ctx| {
        let g = ctx.grad;
        let gh = ctx.needs[0].then(|| {
            let mut gh = vec![0.0; batch * c];
            for i in 0..batch {
                for j in 0..c {
                    gh[i * c + j] = g[i] * wv[j];
                }
            }
            gh
        });
        let gw = ctx.needs[1].then(|| {
            let mut gw = vec![0.0; c];
            for i in 0..batch {
                for j in 0..c {
                    gw[j] += g[i] * hv[i * c + j];
                }
            }
            gw
        });
        let gb = ctx.needs[2].then(|| vec![g.iter().sum()]);
        vec![gh, gw, gb]
    })
}
