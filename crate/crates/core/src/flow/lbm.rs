//! D3Q19 BGK lattice Boltzmann solver for body-force driven Stokes flow.
//!
//! The equilibrium is linear in the populations, `w (ρ + 3 c·j)`, and the
//! forcing term keeps only its first-order part, so the discrete steady
//! state is exactly proportional to the body force. Only voxels in
//! x-spanning pore clusters are simulated; everything else holds zero
//! velocity. Populations are stored after collision, one contiguous array
//! per direction, and each step pulls from the neighbours through a
//! precomputed source table that already folds in halfway bounce-back.

use rayon::prelude::*;

use super::lattice::{neighbour, opposite, Lateral, C, Q, W};
use super::percolation::flowing_mask;
use crate::error::{Error, Result};
use crate::voxel::VoxelGrid;

/// Lattice-unit solution on the simulated nodes.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    /// Voxel index of each simulated node.
    pub nodes: Vec<usize>,
    /// Per-node velocity `[ux, uy, uz]`.
    pub velocity: Vec<[f64; 3]>,
    /// Per-node density deviation from 1.
    pub density: Vec<f64>,
    pub force: f64,
    pub nu: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LatticeParams {
    pub tau: f64,
    pub force: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub check_interval: usize,
    pub lateral: [Lateral; 2],
}

const BOUNCE: u32 = u32::MAX;

struct Domain {
    nodes: Vec<usize>,
    /// `from[q * count + i]`: node whose population `q` streams into node
    /// `i`, or `BOUNCE` when the link is blocked.
    from: Vec<u32>,
}

fn build_domain(grid: &VoxelGrid, lateral: [Lateral; 2]) -> Domain {
    let n = grid.n();
    let mask = flowing_mask(grid, lateral);
    let nodes: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
    let mut slot = vec![BOUNCE; mask.len()];
    for (i, &v) in nodes.iter().enumerate() {
        slot[v] = i as u32;
    }
    let count = nodes.len();
    let mut from = vec![BOUNCE; count * Q];
    for (i, &v) in nodes.iter().enumerate() {
        let (x, y, z) = (v % n, (v / n) % n, v / (n * n));
        for q in 0..Q {
            let back = [-C[q][0], -C[q][1], -C[q][2]];
            if let Some((u, _)) = neighbour(n, lateral, x, y, z, back) {
                from[q * count + i] = slot[u];
            }
        }
    }
    Domain { nodes, from }
}

/// Disjoint per-node writes into shared output arrays from parallel tasks.
#[derive(Clone, Copy)]
struct Scatter(*mut f64);

// SAFETY: every task writes only the slots of its own node.
unsafe impl Send for Scatter {}
unsafe impl Sync for Scatter {}

impl Scatter {
    /// # Safety
    /// `k` must be in bounds and written by one task only.
    #[inline]
    unsafe fn write(self, k: usize, v: f64) {
        *self.0.add(k) = v;
    }
}

/// Density and momentum (including the half-force shift) of one node's
/// incoming populations.
#[inline]
fn moments(fin: &[f64; Q], force: f64) -> [f64; 4] {
    let mut m = [0.0; 4];
    for q in 0..Q {
        m[0] += fin[q];
        for a in 0..3 {
            m[a + 1] += fin[q] * C[q][a] as f64;
        }
    }
    m[1] += 0.5 * force;
    m
}

#[inline]
fn equilibrium(q: usize, m: &[f64; 4]) -> f64 {
    let cj = C[q][0] as f64 * m[1] + C[q][1] as f64 * m[2] + C[q][2] as f64 * m[3];
    W[q] * (m[0] + 3.0 * cj)
}

/// Lattice state after collision.
trait State: Sync {
    fn incoming(&self, from: &[u32], count: usize, i: usize) -> [f64; Q];
    /// Streams into and collides node `i`, storing the result in `out`.
    fn step(&self, out: Scatter, from: &[u32], count: usize, i: usize, force: f64);
    fn len(&self) -> usize;
    fn as_mut_ptr(&mut self) -> *mut f64;
}

/// Full post-collision populations, one array per direction.
struct Populations {
    f: Vec<f64>,
    omega: f64,
    source: [f64; Q],
}

impl State for Populations {
    #[inline]
    fn incoming(&self, from: &[u32], count: usize, i: usize) -> [f64; Q] {
        std::array::from_fn(|q| match from[q * count + i] {
            BOUNCE => self.f[opposite(q) * count + i],
            j => self.f[q * count + j as usize],
        })
    }

    #[inline]
    fn step(&self, out: Scatter, from: &[u32], count: usize, i: usize, force: f64) {
        let fin = self.incoming(from, count, i);
        let m = moments(&fin, force);
        for q in 0..Q {
            let v = fin[q] - self.omega * (fin[q] - equilibrium(q, &m)) + self.source[q];
            // SAFETY: slot q * count + i belongs to node i alone.
            unsafe { out.write(q * count + i, v) };
        }
    }

    fn len(&self) -> usize {
        self.f.len()
    }

    fn as_mut_ptr(&mut self) -> *mut f64 {
        self.f.as_mut_ptr()
    }
}

/// With `tau = 1` the post-collision populations are `feq(ρ, j) + S`, so
/// the four moments per node carry the whole state.
struct Relaxed {
    m: Vec<f64>,
    source: [f64; Q],
}

impl Relaxed {
    /// Moments of the incoming populations of node `i`, computed directly
    /// from the neighbours' moments.
    #[inline]
    fn pull(&self, from: &[u32], count: usize, i: usize, force: f64) -> [f64; 4] {
        let m = &self.m;
        let own = [m[4 * i], m[4 * i + 1], m[4 * i + 2], m[4 * i + 3]];
        let mut acc = [W[0] * own[0] + self.source[0], 0.0, 0.0, 0.0];
        for q in 1..Q {
            let c = [C[q][0] as f64, C[q][1] as f64, C[q][2] as f64];
            let v = match from[q * count + i] {
                BOUNCE => {
                    W[q] * (own[0] - 3.0 * (c[0] * own[1] + c[1] * own[2] + c[2] * own[3]))
                        - self.source[q]
                }
                j => {
                    let j = 4 * j as usize;
                    W[q] * (m[j] + 3.0 * (c[0] * m[j + 1] + c[1] * m[j + 2] + c[2] * m[j + 3]))
                        + self.source[q]
                }
            };
            acc[0] += v;
            acc[1] += v * c[0];
            acc[2] += v * c[1];
            acc[3] += v * c[2];
        }
        acc[1] += 0.5 * force;
        acc
    }
}

impl State for Relaxed {
    #[inline]
    fn incoming(&self, from: &[u32], count: usize, i: usize) -> [f64; Q] {
        let post = |q: usize, node: usize| {
            let m: &[f64; 4] = self.m[4 * node..4 * node + 4].try_into().unwrap();
            equilibrium(q, m) + self.source[q]
        };
        std::array::from_fn(|q| match from[q * count + i] {
            BOUNCE => post(opposite(q), i),
            j => post(q, j as usize),
        })
    }

    #[inline]
    fn step(&self, out: Scatter, from: &[u32], count: usize, i: usize, force: f64) {
        let m = self.pull(from, count, i, force);
        for (a, v) in m.iter().enumerate() {
            // SAFETY: slots 4i..4i+4 belong to node i alone.
            unsafe { out.write(4 * i + a, *v) };
        }
    }

    fn len(&self) -> usize {
        self.m.len()
    }

    fn as_mut_ptr(&mut self) -> *mut f64 {
        self.m.as_mut_ptr()
    }
}

fn mean_speed<S: State>(state: &S, from: &[u32], count: usize, force: f64) -> f64 {
    let total: f64 = (0..count)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let m = moments(&state.incoming(from, count, i), force);
            (m[1] * m[1] + m[2] * m[2] + m[3] * m[3]).sqrt()
        })
        .sum();
    total / count as f64
}

pub fn solve(grid: &VoxelGrid, params: &LatticeParams) -> Result<LatticeSolution> {
    let nu = (params.tau - 0.5) / 3.0;
    let domain = build_domain(grid, params.lateral);
    let count = domain.nodes.len();
    if count == 0 {
        return Ok(LatticeSolution {
            nodes: Vec::new(),
            velocity: Vec::new(),
            density: Vec::new(),
            force: params.force,
            nu,
            iterations: 0,
            residual: 0.0,
        });
    }
    let omega = 1.0 / params.tau;
    let fx = params.force;
    let source: [f64; Q] =
        std::array::from_fn(|q| (1.0 - 0.5 * omega) * W[q] * 3.0 * C[q][0] as f64 * fx);
    let run = Run {
        from: &domain.from,
        count,
        force: fx,
        params,
    };
    // both kernels start from the rest state right after one collision
    let (m, iterations, residual) = if params.tau == 1.0 {
        let mut rest = vec![0.0; 4 * count];
        for i in 0..count {
            rest[4 * i] = 1.0;
        }
        let make = |m: Vec<f64>| Relaxed { m, source };
        run.iterate(make(rest), make(vec![0.0; 4 * count]))?
    } else {
        let make = |f: Vec<f64>| Populations { f, omega, source };
        let rest = (0..count * Q).map(|k| W[k / count] + source[k / count]).collect();
        run.iterate(make(rest), make(vec![0.0; count * Q]))?
    };
    let velocity = m.iter().map(|m| [m[1], m[2], m[3]]).collect();
    let density = m.iter().map(|m| m[0] - 1.0).collect();
    Ok(LatticeSolution {
        nodes: domain.nodes,
        velocity,
        density,
        force: fx,
        nu,
        iterations,
        residual,
    })
}

struct Run<'a> {
    from: &'a [u32],
    count: usize,
    force: f64,
    params: &'a LatticeParams,
}

impl Run<'_> {
    /// Steps until the mean speed settles; returns per-node moments of the
    /// final incoming populations, the step count and the last residual.
    fn iterate<S: State>(&self, mut cur: S, mut next: S) -> Result<(Vec<[f64; 4]>, usize, f64)> {
        let (from, count, fx) = (self.from, self.count, self.force);
        debug_assert_eq!(cur.len(), next.len());
        let mut previous = 0.0;
        let mut residual = f64::INFINITY;
        let mut step = 0;
        while step < self.params.max_iterations {
            let out = Scatter(next.as_mut_ptr());
            let state = &cur;
            (0..count)
                .into_par_iter()
                .with_min_len(4096)
                .for_each(move |i| state.step(out, from, count, i, fx));
            std::mem::swap(&mut cur, &mut next);
            step += 1;
            if step % self.params.check_interval == 0 {
                let speed = mean_speed(&cur, from, count, fx);
                if !speed.is_finite() {
                    return Err(Error::NonConvergence {
                        iterations: step,
                        residual: f64::NAN,
                    });
                }
                residual = if speed > 0.0 {
                    (speed - previous).abs() / speed
                } else {
                    0.0
                };
                previous = speed;
                log::trace!("lbm step {step}: mean |u| {speed:e}, change {residual:e}");
                if residual < self.params.tolerance {
                    break;
                }
            }
        }
        if residual >= self.params.tolerance {
            return Err(Error::NonConvergence {
                iterations: step,
                residual,
            });
        }
        let m = (0..count)
            .map(|i| moments(&cur.incoming(from, count, i), fx))
            .collect();
        Ok((m, step, residual))
    }
}
