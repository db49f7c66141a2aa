//! Regression networks mapping a `[B, 1, n, n, n]` voxel batch to one
//! normalized permeability per sample.

pub mod checkpoint;
pub mod cnn;
pub mod scan;
pub mod vim;
pub mod vit;

use poremamba_tensor::ops::Mode;
use poremamba_tensor::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

pub use cnn::{Cnn, CnnConfig};
pub use vim::{Vim, VimConfig};
pub use vit::{Vit, VitConfig};

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Ordered trainable parameters of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.entries.push(Param {
            name: name.into(),
            value,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.entries[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    /// Total trainable scalar count.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter as a trainable leaf, in order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.entries.iter().map(|p| tape.param(&p.value)).collect()
    }
}

/// How a forward pass treats dropout and batch normalization.
pub struct Pass<'r> {
    pub mode: Mode,
    pub rng: &'r mut ChaCha8Rng,
}

/// A permeability regressor.
pub trait Regressor: Send {
    fn config(&self) -> ModelConfig;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// `x`: `[B, 1, n, n, n]` with `vars` from `self.params().bind(tape)`.
    /// Returns `[B, 1]` predictions.
    fn forward<'t>(&mut self, vars: &[Var<'t>], x: Var<'t>, pass: &mut Pass<'_>) -> Result<Var<'t>>;

    /// Non-trainable state (batch-norm running statistics) as named tensors.
    fn buffers(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    fn load_buffers(&mut self, buffers: &[(String, Tensor)]) -> Result<()> {
        if buffers.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "model has no buffers but {} were supplied",
                buffers.len()
            )))
        }
    }
}

/// Architecture selector with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Vim(VimConfig),
    Vit(VitConfig),
    Cnn(CnnConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Vim(_) => "vim",
            ModelConfig::Vit(_) => "vit",
            ModelConfig::Cnn(_) => "cnn",
        }
    }

    pub fn input_side(&self) -> usize {
        match self {
            ModelConfig::Vim(c) => c.n,
            ModelConfig::Vit(c) => c.n,
            ModelConfig::Cnn(c) => c.n,
        }
    }

    pub fn set_input_side(&mut self, n: usize) {
        match self {
            ModelConfig::Vim(c) => c.n = n,
            ModelConfig::Vit(c) => c.n = n,
            ModelConfig::Cnn(c) => c.n = n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Vim(c) => c.validate(),
            ModelConfig::Vit(c) => c.validate(),
            ModelConfig::Cnn(c) => c.validate(),
        }
    }

    /// Closed-form trainable parameter count.
    pub fn count_parameters(&self) -> usize {
        match self {
            ModelConfig::Vim(c) => vim::count_parameters(c),
            ModelConfig::Vit(c) => vit::count_parameters(c),
            ModelConfig::Cnn(c) => cnn::count_parameters(c),
        }
    }

    /// Freshly initialized model; initialization draws from `seed`.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Regressor>> {
        self.validate()?;
        let mut init = Init::new(seed);
        Ok(match self {
            ModelConfig::Vim(c) => Box::new(Vim::new(c.clone(), &mut init)?),
            ModelConfig::Vit(c) => Box::new(Vit::new(c.clone(), &mut init)?),
            ModelConfig::Cnn(c) => Box::new(Cnn::new(c.clone(), &mut init)?),
        })
    }
}

/// Parameter initializer drawing from one seeded stream in creation order.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: stream(seed, "init", 0),
        }
    }

    /// Uniform in `±fan_in^{-1/2}`.
    pub fn uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_| self.rng.random_range(-bound..=bound))
    }

    pub fn normal(&mut self, shape: &[usize], std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("positive standard deviation");
        Tensor::from_fn(shape, |_| dist.sample(&mut self.rng))
    }
}

/// Checks a `[B, 1, n, n, n]` input against the configured side.
pub(crate) fn check_input(x: &Var<'_>, n: usize) -> Result<usize> {
    let s = x.shape();
    if s.len() != 5 || s[1] != 1 || s[2..] != [n, n, n] {
        return Err(Error::Config(format!(
            "expected input [B, 1, {n}, {n}, {n}], got {s:?}"
        )));
    }
    Ok(s[0])
}

/// Runs a model on a batch of voxel grids in eval mode and returns the
/// normalized predictions.
pub fn predict(model: &mut dyn Regressor, input: &Tensor) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let vars = model.params().bind(&tape);
    let x = tape.input(input);
    let mut rng = stream(0, "predict", 0);
    let mut pass = Pass {
        mode: Mode::Eval,
        rng: &mut rng,
    };
    let y = model.forward(&vars, x, &mut pass)?;
    Ok(y.value().to_vec())
}
