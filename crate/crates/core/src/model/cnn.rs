//! Convolutional baseline: a ladder of stride-2 convolutions that halves the
//! grid and widens the channels at every stage, a pointwise latent layer and
//! a dense decoder with heavy dropout.

use poremamba_tensor::ops::{self, Mode, RunningStats, DEFAULT_EPS};
use poremamba_tensor::{Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{check_input, Init, ModelConfig, ParamSet, Pass, Regressor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub n: usize,
    /// Output channels of each stride-2 stage.
    pub ladder: Vec<usize>,
    pub latent: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub conv_bias: bool,
    pub latent_batch_norm: bool,
    pub momentum: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            n: 64,
            ladder: vec![16, 32, 64, 128, 256, 512],
            latent: 1024,
            hidden: vec![512, 256],
            dropout: 0.7,
            conv_bias: false,
            latent_batch_norm: true,
            momentum: 0.1,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder.contains(&0) || self.latent == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("CNN widths must be positive and the ladder non-empty".into()));
        }
        let shrink = 1usize
            .checked_shl(self.ladder.len() as u32)
            .ok_or_else(|| Error::Config("CNN ladder too deep".into()))?;
        if self.n == 0 || self.n % shrink != 0 {
            return Err(Error::Config(format!(
                "input side {} is not divisible by 2^{} for a {}-stage ladder",
                self.n,
                self.ladder.len(),
                self.ladder.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1]", self.momentum)));
        }
        Ok(())
    }
}

pub fn count_parameters(cfg: &CnnConfig) -> usize {
    let mut total = 0;
    let mut cin = 1;
    for &c in &cfg.ladder {
        total += c * cin * 8 + 2 * c + if cfg.conv_bias { c } else { 0 };
        cin = c;
    }
    total += cin * cfg.latent + if cfg.latent_batch_norm { 2 * cfg.latent } else { cfg.latent };
    let mut width = cfg.latent;
    for &h in &cfg.hidden {
        total += width * h + 2 * h;
        width = h;
    }
    total + width + 1
}

#[derive(Debug, Clone)]
struct Normed {
    weight: usize,
    bias: Option<usize>,
    /// Gain, shift and running statistics when batch-normalized.
    norm: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Cnn {
    cfg: CnnConfig,
    params: ParamSet,
    stages: Vec<Normed>,
    latent: Normed,
    dense: Vec<Normed>,
    out: (usize, usize),
    stats: Vec<(String, RunningStats)>,
}

impl Cnn {
    pub fn new(cfg: CnnConfig, init: &mut Init) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let mut stats = Vec::new();
        let mut layer = |ps: &mut ParamSet,
                         stats: &mut Vec<(String, RunningStats)>,
                         name: String,
                         shape: &[usize],
                         bias: bool,
                         norm: bool| {
            let cout = shape[0];
            let fan_in = shape[1..].iter().product();
            let weight = ps.push(format!("{name}.weight"), init.uniform(shape, fan_in));
            let bias = bias.then(|| ps.push(format!("{name}.bias"), init.uniform(&[cout], fan_in)));
            let norm = norm.then(|| {
                stats.push((format!("{name}.bn"), RunningStats::new(cout)));
                (
                    ps.push(format!("{name}.bn.gain"), Tensor::full(&[cout], 1.0)),
                    ps.push(format!("{name}.bn.shift"), Tensor::zeros(&[cout])),
                    stats.len() - 1,
                )
            });
            Normed { weight, bias, norm }
        };
        let mut stages = Vec::new();
        let mut cin = 1;
        for (i, &c) in cfg.ladder.iter().enumerate() {
            stages.push(layer(&mut ps, &mut stats, format!("conv.{i}"), &[c, cin, 2, 2, 2], cfg.conv_bias, true));
            cin = c;
        }
        let latent = layer(
            &mut ps,
            &mut stats,
            "latent".into(),
            &[cfg.latent, cin],
            !cfg.latent_batch_norm,
            cfg.latent_batch_norm,
        );
        let mut dense = Vec::new();
        let mut width = cfg.latent;
        for (i, &h) in cfg.hidden.iter().enumerate() {
            dense.push(layer(&mut ps, &mut stats, format!("dense.{i}"), &[h, width], false, true));
            width = h;
        }
        let out = layer(&mut ps, &mut stats, "out".into(), &[1, width], true, false);
        let out = (out.weight, out.bias.expect("output layer has a bias"));
        debug_assert_eq!(ps.scalar_count(), count_parameters(&cfg));
        Ok(Cnn {
            cfg,
            params: ps,
            stages,
            latent,
            dense,
            out,
            stats,
        })
    }

    pub fn cnn_config(&self) -> &CnnConfig {
        &self.cfg
    }

    fn normed<'t>(
        &mut self,
        vars: &[Var<'t>],
        x: Var<'t>,
        layer: &Normed,
        conv: bool,
        mode: Mode,
    ) -> Result<Var<'t>> {
        let bias = layer.bias.map(|b| vars[b]);
        let mut h = if conv {
            ops::patch_conv(x, vars[layer.weight], bias, 2)?
        } else {
            ops::pointwise_linear(x, vars[layer.weight], bias)?
        };
        if let Some((g, s, k)) = layer.norm {
            let running = &mut self.stats[k].1;
            h = ops::batch_norm(h, vars[g], vars[s], running, mode, self.cfg.momentum, DEFAULT_EPS)?;
        }
        Ok(h.relu()?)
    }
}

impl Regressor for Cnn {
    fn config(&self) -> ModelConfig {
        ModelConfig::Cnn(self.cfg.clone())
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<'t>(&mut self, vars: &[Var<'t>], x: Var<'t>, pass: &mut Pass<'_>) -> Result<Var<'t>> {
        let batch = check_input(&x, self.cfg.n)?;
        let mode = pass.mode;
        let mut h = x;
        let stages = self.stages.clone();
        for s in &stages {
            h = self.normed(vars, h, s, true, mode)?;
        }
        // any remaining spatial extent is averaged away
        let mut h = ops::global_mean(h)?;
        debug_assert_eq!(h.shape(), [batch, *self.cfg.ladder.last().unwrap()]);
        let latent = self.latent.clone();
        h = self.normed(vars, h, &latent, false, mode)?;
        let dense = self.dense.clone();
        for d in &dense {
            h = self.normed(vars, h, d, false, mode)?;
            h = ops::dropout(h, self.cfg.dropout, mode, pass.rng)?;
        }
        Ok(ops::pointwise_linear(h, vars[self.out.0], Some(vars[self.out.1]))?)
    }

    fn buffers(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(3 * self.stats.len());
        for (name, s) in &self.stats {
            let c = s.mean.len();
            out.push((format!("{name}.running_mean"), Tensor::new(vec![c], s.mean.clone()).unwrap()));
            out.push((format!("{name}.running_var"), Tensor::new(vec![c], s.var.clone()).unwrap()));
            out.push((format!("{name}.tracked"), Tensor::scalar(s.tracked as f64)));
        }
        out
    }

    fn load_buffers(&mut self, buffers: &[(String, Tensor)]) -> Result<()> {
        let expected = self.buffers();
        if buffers.len() != expected.len() {
            return Err(Error::Config(format!(
                "expected {} buffers, got {}",
                expected.len(),
                buffers.len()
            )));
        }
        for ((want, shape), (name, t)) in expected.iter().map(|(n, t)| (n, t.shape())).zip(buffers) {
            if want != name || shape != t.shape() {
                return Err(Error::Config(format!(
                    "buffer {name} {:?} does not match {want} {shape:?}",
                    t.shape()
                )));
            }
        }
        for (k, (_, s)) in self.stats.iter_mut().enumerate() {
            s.mean = buffers[3 * k].1.data().to_vec();
            s.var = buffers[3 * k + 1].1.data().to_vec();
            s.tracked = buffers[3 * k + 2].1.data()[0] as u64;
        }
        Ok(())
    }
}
