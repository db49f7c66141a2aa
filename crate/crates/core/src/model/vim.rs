//! Vision Mamba regressor: patch embedding, blocks of token-wise parameter
//! generation with axiswise bidirectional selective scans and a residual
//! MLP, then layer norm, global average pooling and a linear head.

use poremamba_tensor::ops::{self, DEFAULT_EPS};
use poremamba_tensor::{Tensor, Var};
use serde::{Deserialize, Serialize};

use super::scan::{selective_scan, Axis, Direction};
use super::{check_input, Init, ModelConfig, ParamSet, Pass, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VimConfig {
    pub patch: usize,
    pub channels: usize,
    pub blocks: usize,
    pub expansion: usize,
    /// Input cube side in voxels.
    pub n: usize,
    pub scan_axes: Vec<Axis>,
}

impl Default for VimConfig {
    fn default() -> Self {
        VimConfig {
            patch: 8,
            channels: 64,
            blocks: 3,
            expansion: 4,
            n: 64,
            scan_axes: Axis::ALL.to_vec(),
        }
    }
}

impl VimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.n == 0 || self.n % self.patch != 0 {
            return Err(Error::Config(format!(
                "input side {} is not divisible by patch size {}",
                self.n, self.patch
            )));
        }
        if self.channels == 0 || self.blocks == 0 || self.expansion == 0 {
            return Err(Error::Config(
                "channels, blocks and expansion must all be at least 1".into(),
            ));
        }
        if self.scan_axes.is_empty() {
            return Err(Error::Config("at least one scan axis is required".into()));
        }
        let mut axes = self.scan_axes.clone();
        axes.sort();
        axes.dedup();
        if axes.len() != self.scan_axes.len() {
            return Err(Error::Config(format!("repeated scan axis in {:?}", self.scan_axes)));
        }
        Ok(())
    }

    /// Token grid side `n / p`.
    pub fn grid(&self) -> usize {
        self.n / self.patch
    }
}

pub fn count_parameters(cfg: &VimConfig) -> usize {
    let (c, p, e) = (cfg.channels, cfg.patch, cfg.expansion);
    let embed = c * p.pow(3) + c;
    let generator = c * 5 * c + 5 * c;
    let mlp = c * e * c + e * c + e * c * c + c;
    let block = generator + 2 * c + 2 * 2 * c + mlp;
    embed + cfg.blocks * block + 2 * c + c + 1
}

/// Parameter indices of one block.
#[derive(Debug, Clone)]
struct BlockIds {
    norm1: (usize, usize),
    gen_w: usize,
    gen_b: usize,
    a: usize,
    d: usize,
    norm2: (usize, usize),
    fc1: (usize, usize),
    fc2: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Vim {
    cfg: VimConfig,
    params: ParamSet,
    embed: (usize, usize),
    blocks: Vec<BlockIds>,
    norm: (usize, usize),
    head: (usize, usize),
}

/// Block parameters bound to a tape.
pub struct BlockVars<'t> {
    pub norm1: (Var<'t>, Var<'t>),
    pub gen_w: Var<'t>,
    pub gen_b: Var<'t>,
    pub a: Var<'t>,
    pub d: Var<'t>,
    pub norm2: (Var<'t>, Var<'t>),
    pub fc1: (Var<'t>, Var<'t>),
    pub fc2: (Var<'t>, Var<'t>),
}

/// The five generated fields of one block, each `[B, C, D', H', W']`.
pub struct Fields<'t> {
    pub g_in: Var<'t>,
    pub g_out: Var<'t>,
    pub b: Var<'t>,
    pub c: Var<'t>,
    pub delta: Var<'t>,
}

/// One pointwise map `C -> 5C` split in channel order
/// `[g_in, g_out, B, C, Δ_raw]`, with `Δ = softplus(Δ_raw)`.
pub fn generate_fields<'t>(z: Var<'t>, w: Var<'t>, bias: Var<'t>) -> Result<Fields<'t>> {
    let c = z.shape()[1];
    let f = ops::pointwise_linear(z, w, Some(bias))?;
    let part = |k: usize| f.narrow(1, k * c, c);
    Ok(Fields {
        g_in: part(0)?,
        g_out: part(1)?,
        b: part(2)?,
        c: part(3)?,
        delta: part(4)?.softplus()?,
    })
}

/// `u = g_in ⊙ z`.
pub fn gated_input<'t>(g_in: Var<'t>, z: Var<'t>) -> Result<Var<'t>> {
    Ok(g_in.mul(z)?)
}

/// `α = exp(−softplus(A) ⊙ Δ)` with `A: [C]` broadcast over the grid.
pub fn decay<'t>(a: Var<'t>, delta: Var<'t>) -> Result<Var<'t>> {
    let c = a.numel();
    let a_pos = a.reshape(&[1, c, 1, 1, 1])?.softplus()?;
    Ok(a_pos.mul(delta)?.neg()?.exp()?)
}

/// `g_out ⊙ (y_fwd + y_bwd) / 2`.
pub fn fuse_and_gate<'t>(y_fwd: Var<'t>, y_bwd: Var<'t>, g_out: Var<'t>) -> Result<Var<'t>> {
    Ok(g_out.mul(y_fwd.add(y_bwd)?.scale(0.5)?)?)
}

/// Arithmetic mean of the per-axis outputs.
pub fn axis_fuse<'t>(outputs: &[Var<'t>]) -> Result<Var<'t>> {
    let (first, rest) = outputs
        .split_first()
        .ok_or_else(|| Error::Config("no scan axes to fuse".into()))?;
    if rest.is_empty() {
        return Ok(*first);
    }
    let mut acc = *first;
    for y in rest {
        acc = acc.add(*y)?;
    }
    Ok(acc.scale(1.0 / outputs.len() as f64)?)
}

/// Scan stage: generated fields, gated input, per-axis bidirectional scans
/// and their fused, gated mean. Input and output `[B, C, D', H', W']`.
pub fn mix_tokens<'t>(zn: Var<'t>, v: &BlockVars<'t>, axes: &[Axis]) -> Result<Var<'t>> {
    let f = generate_fields(zn, v.gen_w, v.gen_b)?;
    let u = gated_input(f.g_in, zn)?;
    let alpha = decay(v.a, f.delta)?;
    let mut per_axis = Vec::with_capacity(axes.len());
    for &ax in axes {
        let t = ax.tensor_axis();
        let yf = selective_scan(u, alpha, f.b, f.c, v.d, t, Direction::Forward)?;
        let yb = selective_scan(u, alpha, f.b, f.c, v.d, t, Direction::Backward)?;
        per_axis.push(fuse_and_gate(yf, yb, f.g_out)?);
    }
    axis_fuse(&per_axis)
}

/// `z⁺ = z + mix(norm1(z))`, `z_out = z⁺ + MLP(norm2(z⁺))`.
pub fn block_forward<'t>(z: Var<'t>, v: &BlockVars<'t>, axes: &[Axis]) -> Result<Var<'t>> {
    let zn = ops::layer_norm(z, 1, v.norm1.0, v.norm1.1, DEFAULT_EPS)?;
    let z_plus = z.add(mix_tokens(zn, v, axes)?)?;
    let h = ops::layer_norm(z_plus, 1, v.norm2.0, v.norm2.1, DEFAULT_EPS)?;
    let h = ops::pointwise_linear(h, v.fc1.0, Some(v.fc1.1))?.gelu()?;
    let h = ops::pointwise_linear(h, v.fc2.0, Some(v.fc2.1))?;
    Ok(z_plus.add(h)?)
}

impl Vim {
    pub fn new(cfg: VimConfig, init: &mut Init) -> Result<Self> {
        cfg.validate()?;
        let (c, p, e) = (cfg.channels, cfg.patch, cfg.expansion);
        let mut ps = ParamSet::new();
        let embed = (
            ps.push("embed.weight", init.uniform(&[c, 1, p, p, p], p.pow(3))),
            ps.push("embed.bias", Tensor::zeros(&[c])),
        );
        let norm_pair = |ps: &mut ParamSet, name: &str| {
            (
                ps.push(format!("{name}.gain"), Tensor::full(&[c], 1.0)),
                ps.push(format!("{name}.shift"), Tensor::zeros(&[c])),
            )
        };
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let pre = format!("blocks.{i}");
            let norm1 = norm_pair(&mut ps, &format!("{pre}.norm1"));
            let gen_w = ps.push(format!("{pre}.gen.weight"), init.uniform(&[5 * c, c], c));
            let gen_b = ps.push(format!("{pre}.gen.bias"), Tensor::zeros(&[5 * c]));
            let a = ps.push(format!("{pre}.A"), Tensor::zeros(&[c]));
            let d = ps.push(format!("{pre}.D"), Tensor::full(&[c], 1.0));
            let norm2 = norm_pair(&mut ps, &format!("{pre}.norm2"));
            let fc1 = (
                ps.push(format!("{pre}.mlp.fc1.weight"), init.uniform(&[e * c, c], c)),
                ps.push(format!("{pre}.mlp.fc1.bias"), Tensor::zeros(&[e * c])),
            );
            let fc2 = (
                ps.push(format!("{pre}.mlp.fc2.weight"), init.uniform(&[c, e * c], e * c)),
                ps.push(format!("{pre}.mlp.fc2.bias"), Tensor::zeros(&[c])),
            );
            blocks.push(BlockIds {
                norm1,
                gen_w,
                gen_b,
                a,
                d,
                norm2,
                fc1,
                fc2,
            });
        }
        let norm = norm_pair(&mut ps, "norm");
        let head = (
            ps.push("head.weight", Tensor::zeros(&[c])),
            ps.push("head.bias", Tensor::zeros(&[1])),
        );
        debug_assert_eq!(ps.scalar_count(), count_parameters(&cfg));
        Ok(Vim {
            cfg,
            params: ps,
            embed,
            blocks,
            norm,
            head,
        })
    }

    pub fn vim_config(&self) -> &VimConfig {
        &self.cfg
    }

    /// Binds block `i` to already bound parameter variables.
    pub fn block_vars<'t>(&self, vars: &[Var<'t>], i: usize) -> BlockVars<'t> {
        let b = &self.blocks[i];
        BlockVars {
            norm1: (vars[b.norm1.0], vars[b.norm1.1]),
            gen_w: vars[b.gen_w],
            gen_b: vars[b.gen_b],
            a: vars[b.a],
            d: vars[b.d],
            norm2: (vars[b.norm2.0], vars[b.norm2.1]),
            fc1: (vars[b.fc1.0], vars[b.fc1.1]),
            fc2: (vars[b.fc2.0], vars[b.fc2.1]),
        }
    }

    /// Token grid after patch embedding, `[B, C, n/p, n/p, n/p]`.
    pub fn embed<'t>(&self, vars: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        check_input(&x, self.cfg.n)?;
        Ok(ops::patch_conv(x, vars[self.embed.0], Some(vars[self.embed.1]), self.cfg.patch)?)
    }
}

impl Regressor for Vim {
    fn config(&self) -> ModelConfig {
        ModelConfig::Vim(self.cfg.clone())
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<'t>(&mut self, vars: &[Var<'t>], x: Var<'t>, _pass: &mut Pass<'_>) -> Result<Var<'t>> {
        let mut z = self.embed(vars, x)?;
        for i in 0..self.blocks.len() {
            z = block_forward(z, &self.block_vars(vars, i), &self.cfg.scan_axes)?;
        }
        let z = ops::layer_norm(z, 1, vars[self.norm.0], vars[self.norm.1], DEFAULT_EPS)?;
        let h = ops::global_mean(z)?;
        Ok(ops::linear_head(h, vars[self.head.0], vars[self.head.1])?)
    }
}
