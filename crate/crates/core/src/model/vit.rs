//! Vision transformer baseline: patch embedding plus a learned positional
//! embedding on a fixed base grid, resampled trilinearly to the token grid,
//! followed by pre-norm attention blocks, pooling and a linear head.
//!
//! Tokens are kept channel-first as `[B, C, L]`.

use poremamba_tensor::ops::{self, DEFAULT_EPS};
use poremamba_tensor::{Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{check_input, Init, ModelConfig, ParamSet, Pass, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VitConfig {
    pub patch: usize,
    pub channels: usize,
    pub blocks: usize,
    pub heads: usize,
    pub expansion: usize,
    /// Side of the learned positional-embedding grid.
    pub base_grid: usize,
    pub dropout: f64,
    pub n: usize,
}

impl Default for VitConfig {
    fn default() -> Self {
        VitConfig {
            patch: 8,
            channels: 64,
            blocks: 3,
            heads: 8,
            expansion: 4,
            base_grid: 8,
            dropout: 0.1,
            n: 64,
        }
    }
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.n == 0 || self.n % self.patch != 0 {
            return Err(Error::Config(format!(
                "input side {} is not divisible by patch size {}",
                self.n, self.patch
            )));
        }
        if self.channels == 0 || self.blocks == 0 || self.expansion == 0 || self.base_grid == 0 {
            return Err(Error::Config("ViT sizes must be positive".into()));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} channels do not split into {} heads",
                self.channels, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.n / self.patch
    }
}

pub fn count_parameters(cfg: &VitConfig) -> usize {
    let (c, p, e) = (cfg.channels, cfg.patch, cfg.expansion);
    let embed = c * p.pow(3) + c;
    let pos = c * cfg.base_grid.pow(3);
    let attn = c * 3 * c + 3 * c + c * c + c;
    let mlp = c * e * c + e * c + e * c * c + c;
    let block = 2 * 2 * c + attn + mlp;
    embed + pos + cfg.blocks * block + 2 * c + c + 1
}

/// Resamples `base: [C, g, g, g]` (or `[1, C, g, g, g]`) to the token grid.
pub fn interpolate_pos_embed<'t>(base: Var<'t>, target: [usize; 3]) -> Result<Var<'t>> {
    if target.contains(&0) {
        return Err(Error::Config(format!("empty token grid {target:?}")));
    }
    Ok(ops::trilinear_resize(base, target)?)
}

/// Attention parameters bound to a tape.
pub struct AttentionVars<'t> {
    pub qkv: (Var<'t>, Var<'t>),
    pub out: (Var<'t>, Var<'t>),
}

/// Multi-head scaled dot-product self-attention on `[B, C, L]` tokens.
/// Returns the output projection and the attention weights
/// `[B, heads, L_query, L_key]`.
pub fn mhsa_with_weights<'t>(x: Var<'t>, v: &AttentionVars<'t>, heads: usize) -> Result<(Var<'t>, Var<'t>)> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::Config(format!("attention expects [B, C, L], got {s:?}")));
    }
    let (b, c, l) = (s[0], s[1], s[2]);
    if heads == 0 || c % heads != 0 {
        return Err(Error::Config(format!("{c} channels do not split into {heads} heads")));
    }
    let d = c / heads;
    let qkv = ops::pointwise_linear(x, v.qkv.0, Some(v.qkv.1))?.reshape(&[b, 3, heads, d, l])?;
    let part = |k: usize| -> Result<Var<'t>> { Ok(qkv.narrow(1, k, 1)?.reshape(&[b, heads, d, l])?) };
    let (q, k, val) = (part(0)?, part(1)?, part(2)?);
    let scores = ops::matmul_t(q, k, true, false)?.scale(1.0 / (d as f64).sqrt())?;
    let weights = ops::softmax(scores)?;
    let mixed = ops::matmul_t(val, weights, false, true)?.reshape(&[b, c, l])?;
    let out = ops::pointwise_linear(mixed, v.out.0, Some(v.out.1))?;
    Ok((out, weights))
}

pub fn mhsa<'t>(x: Var<'t>, v: &AttentionVars<'t>, heads: usize) -> Result<Var<'t>> {
    Ok(mhsa_with_weights(x, v, heads)?.0)
}

#[derive(Debug, Clone)]
struct BlockIds {
    norm1: (usize, usize),
    qkv: (usize, usize),
    out: (usize, usize),
    norm2: (usize, usize),
    fc1: (usize, usize),
    fc2: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Vit {
    cfg: VitConfig,
    params: ParamSet,
    embed: (usize, usize),
    pos: usize,
    blocks: Vec<BlockIds>,
    norm: (usize, usize),
    head: (usize, usize),
}

impl Vit {
    pub fn new(cfg: VitConfig, init: &mut Init) -> Result<Self> {
        cfg.validate()?;
        let (c, p, e, g) = (cfg.channels, cfg.patch, cfg.expansion, cfg.base_grid);
        let mut ps = ParamSet::new();
        let embed = (
            ps.push("embed.weight", init.uniform(&[c, 1, p, p, p], p.pow(3))),
            ps.push("embed.bias", Tensor::zeros(&[c])),
        );
        let pos = ps.push("pos_embed", init.normal(&[1, c, g, g, g], 0.02));
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
            let qkv = (
                ps.push(format!("{pre}.attn.qkv.weight"), init.uniform(&[3 * c, c], c)),
                ps.push(format!("{pre}.attn.qkv.bias"), Tensor::zeros(&[3 * c])),
            );
            let out = (
                ps.push(format!("{pre}.attn.out.weight"), init.uniform(&[c, c], c)),
                ps.push(format!("{pre}.attn.out.bias"), Tensor::zeros(&[c])),
            );
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
                qkv,
                out,
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
        Ok(Vit {
            cfg,
            params: ps,
            embed,
            pos,
            blocks,
            norm,
            head,
        })
    }

    pub fn vit_config(&self) -> &VitConfig {
        &self.cfg
    }

    /// Token sequence `[B, C, L]` after embedding and positional encoding.
    pub fn tokens<'t>(&self, vars: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let batch = check_input(&x, self.cfg.n)?;
        let t = self.cfg.grid();
        let z = ops::patch_conv(x, vars[self.embed.0], Some(vars[self.embed.1]), self.cfg.patch)?;
        let pos = interpolate_pos_embed(vars[self.pos], [t, t, t])?;
        Ok(z.add(pos)?.reshape(&[batch, self.cfg.channels, t * t * t])?)
    }
}

impl Regressor for Vit {
    fn config(&self) -> ModelConfig {
        ModelConfig::Vit(self.cfg.clone())
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<'t>(&mut self, vars: &[Var<'t>], x: Var<'t>, pass: &mut Pass<'_>) -> Result<Var<'t>> {
        let rate = self.cfg.dropout;
        let mut z = self.tokens(vars, x)?;
        for b in &self.blocks {
            let h = ops::layer_norm(z, 1, vars[b.norm1.0], vars[b.norm1.1], DEFAULT_EPS)?;
            let attn = AttentionVars {
                qkv: (vars[b.qkv.0], vars[b.qkv.1]),
                out: (vars[b.out.0], vars[b.out.1]),
            };
            z = z.add(mhsa(h, &attn, self.cfg.heads)?)?;
            let h = ops::layer_norm(z, 1, vars[b.norm2.0], vars[b.norm2.1], DEFAULT_EPS)?;
            let h = ops::pointwise_linear(h, vars[b.fc1.0], Some(vars[b.fc1.1]))?.gelu()?;
            let h = ops::dropout(h, rate, pass.mode, pass.rng)?;
            let h = ops::pointwise_linear(h, vars[b.fc2.0], Some(vars[b.fc2.1]))?;
            let h = ops::dropout(h, rate, pass.mode, pass.rng)?;
            z = z.add(h)?;
        }
        let z = ops::layer_norm(z, 1, vars[self.norm.0], vars[self.norm.1], DEFAULT_EPS)?;
        let h = ops::global_mean(z)?;
        Ok(ops::linear_head(h, vars[self.head.0], vars[self.head.1])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parameter_counts() {
        for (p, want) in [(4, 187_073), (8, 215_745), (16, 445_121), (32, 2_280_129)] {
            let cfg = VitConfig { patch: p, ..VitConfig::default() };
            assert_eq!(count_parameters(&cfg), want, "patch {p}");
            if p == 8 {
                let m = Vit::new(cfg.clone(), &mut Init::new(1)).unwrap();
                assert_eq!(m.params().scalar_count(), want);
            }
        }
    }

    #[test]
    fn config_errors() {
        assert!(VitConfig { heads: 7, ..VitConfig::default() }.validate().is_err());
        assert!(VitConfig { dropout: 1.0, ..VitConfig::default() }.validate().is_err());
        assert!(VitConfig { n: 20, ..VitConfig::default() }.validate().is_err());
    }
}
