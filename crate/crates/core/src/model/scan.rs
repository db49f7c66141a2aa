//! Channelwise selective scan along one spatial axis.
//!
//! For every sequence obtained by fixing all indices except `axis`:
//!
//! ```text
//! s_t = α_t s_{t-1} + B_t u_t,   s_{-1} = 0
//! y_t = C_t s_t + D u_t
//! ```
//!
//! The backward direction runs the same recurrence from the far end of the
//! axis, so its output at position `t` summarizes positions `t..L`.

use poremamba_tensor::{Result as TResult, TensorError, Var};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Spatial axis of a `[B, C, D, H, W]` token grid. `x` is the fastest axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Tensor axis index in `[B, C, D, H, W]`.
    pub fn tensor_axis(self) -> usize {
        match self {
            Axis::X => 4,
            Axis::Y => 3,
            Axis::Z => 2,
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

struct Layout {
    len: usize,
    inner: usize,
    outer: usize,
    channels: usize,
    /// Elements per channel block (product of the spatial axes before
    /// `axis` that follow the channel axis).
    per_channel: usize,
}

impl Layout {
    fn channel(&self, o: usize) -> usize {
        (o / self.per_channel) % self.channels
    }

    /// Flat index of step `k` of sequence `(o, i)` in scan order.
    fn position(&self, dir: Direction, k: usize) -> usize {
        match dir {
            Direction::Forward => k,
            Direction::Backward => self.len - 1 - k,
        }
    }
}

/// Selective scan over tensor axis `axis` (2, 3 or 4) of `[B, C, D, H, W]`
/// fields `u`, `alpha`, `b`, `c` with channel skip `d: [C]`.
pub fn selective_scan<'t>(
    u: Var<'t>,
    alpha: Var<'t>,
    b: Var<'t>,
    c: Var<'t>,
    d: Var<'t>,
    axis: usize,
    dir: Direction,
) -> TResult<Var<'t>> {
    const OP: &str = "selective_scan";
    let tape = u.tape();
    let shape = u.shape();
    if shape.len() != 5 || !(2..5).contains(&axis) {
        return Err(TensorError::Shape {
            op: OP,
            detail: format!("need [B, C, D, H, W] and a spatial axis, got {shape:?} / {axis}"),
        });
    }
    for (name, v) in [("alpha", alpha), ("B", b), ("C", c)] {
        if v.shape() != shape {
            return Err(TensorError::Shape {
                op: OP,
                detail: format!("{name} {:?} vs u {shape:?}", v.shape()),
            });
        }
    }
    if d.shape() != [shape[1]] {
        return Err(TensorError::Shape {
            op: OP,
            detail: format!("skip {:?} vs {} channels", d.shape(), shape[1]),
        });
    }
    if shape[axis] < 1 {
        return Err(TensorError::Shape {
            op: OP,
            detail: "empty scan axis".into(),
        });
    }
    let total: usize = shape.iter().product();
    // the hidden states are kept for the adjoint
    if tape.is_symbolic() {
        return Ok(tape.record_symbolic(OP, shape, &[u, alpha, b, c, d], total));
    }
    let lay = Layout {
        len: shape[axis],
        inner: shape[axis + 1..].iter().product(),
        outer: shape[..axis].iter().product(),
        channels: shape[1],
        per_channel: shape[2..axis].iter().product(),
    };
    let (uv, av, bv, cv, dv) = (u.value(), alpha.value(), b.value(), c.value(), d.value());
    let mut states = vec![0.0; total];
    let mut y = vec![0.0; total];
    let mut s = vec![0.0; lay.inner];
    for o in 0..lay.outer {
        let skip = dv[lay.channel(o)];
        s.fill(0.0);
        for k in 0..lay.len {
            let base = (o * lay.len + lay.position(dir, k)) * lay.inner;
            for i in 0..lay.inner {
                let j = base + i;
                s[i] = av[j] * s[i] + bv[j] * uv[j];
                states[j] = s[i];
                y[j] = cv[j] * s[i] + skip * uv[j];
            }
        }
    }

    tape.record(OP, shape, y, &[u, alpha, b, c, d], total, move |ctx| {
        let g = ctx.grad;
        let mut gu = vec![0.0; total];
        let mut ga = vec![0.0; total];
        let mut gb = vec![0.0; total];
        let mut gc = vec![0.0; total];
        let mut gd = vec![0.0; lay.channels];
        // adjoint of the state carried back from the following step
        let mut carry = vec![0.0; lay.inner];
        for o in 0..lay.outer {
            let ch = lay.channel(o);
            let skip = dv[ch];
            carry.fill(0.0);
            for k in (0..lay.len).rev() {
                let base = (o * lay.len + lay.position(dir, k)) * lay.inner;
                let prev = (k > 0).then(|| (o * lay.len + lay.position(dir, k - 1)) * lay.inner);
                let next = (k + 1 < lay.len).then(|| (o * lay.len + lay.position(dir, k + 1)) * lay.inner);
                for i in 0..lay.inner {
                    let j = base + i;
                    let mut ds = g[j] * cv[j];
                    if let Some(nb) = next {
                        ds += av[nb + i] * carry[i];
                    }
                    carry[i] = ds;
                    gc[j] = g[j] * states[j];
                    gb[j] = ds * uv[j];
                    gu[j] = ds * bv[j] + g[j] * skip;
                    ga[j] = prev.map_or(0.0, |pb| ds * states[pb + i]);
                    gd[ch] += g[j] * uv[j];
                }
            }
        }
        vec![Some(gu), Some(ga), Some(gb), Some(gc), Some(gd)]
    })
}

/// Direct evaluation of the scan as a cumulative-product sum over one
/// sequence, used as a reference in tests and examples:
/// `y_t = C_t Σ_{j ≤ t} (Π_{i=j+1}^{t} α_i) B_j u_j + D u_t`.
pub fn scan_reference(u: &[f64], alpha: &[f64], b: &[f64], c: &[f64], d: f64) -> Vec<f64> {
    let len = u.len();
    (0..len)
        .map(|t| {
            let mut acc = 0.0;
            for j in 0..=t {
                let decay: f64 = alpha[j + 1..=t].iter().product();
                acc += decay * b[j] * u[j];
            }
            c[t] * acc + d * u[t]
        })
        .collect()
}
