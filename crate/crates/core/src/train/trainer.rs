use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use poremamba_tensor::ops::{self, Mode};
use poremamba_tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::metrics::{self, MetricsReport, Prediction};
use super::normalize::NormStats;
use crate::error::{Error, Result};
use crate::manifest::{load_grid, DatasetManifest, Split};
use crate::model::{ParamSet, Pass, Regressor};
use crate::rng::stream;
use crate::voxel::VoxelGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            lr: adam.lr,
            batch_size: 128,
            max_epochs: 300,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.adam().validate()
    }
}

/// Voxel grids with their permeabilities in mD.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub grids: Vec<VoxelGrid>,
    pub k: Vec<f64>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, grids: Vec<VoxelGrid>, k: Vec<f64>) -> Result<Self> {
        if ids.len() != grids.len() || k.len() != grids.len() {
            return Err(Error::Usage("dataset columns differ in length".into()));
        }
        if let Some(g) = grids.first() {
            if grids.iter().any(|h| h.n() != g.n()) {
                return Err(Error::Data("dataset mixes cube sizes".into()));
            }
        }
        Ok(Dataset { ids, grids, k })
    }

    /// Loads one split; every record must carry a permeability.
    pub fn load(manifest: &DatasetManifest, base: &Path, split: Split) -> Result<Self> {
        manifest.require_permeability(&[split])?;
        let records = manifest.split(split);
        let grids = records
            .par_iter()
            .map(|r| load_grid(base, r))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            records.iter().map(|r| r.id.clone()).collect(),
            grids,
            records.iter().map(|r| r.permeability_md.expect("checked above")).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn inputs(&self, idx: &[usize]) -> Result<Tensor> {
        let grids: Vec<&VoxelGrid> = idx.iter().map(|&i| &self.grids[i]).collect();
        VoxelGrid::batch_tensor(&grids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub valid_mse: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub norm: NormStats,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_mse: f64,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,valid_mse,lr,wall_seconds\n");
        for e in &self.log {
            let _ = writeln!(out, "{},{},{},{},{:.3}", e.epoch, e.train_mse, e.valid_mse, e.lr, e.wall_seconds);
        }
        out
    }
}

/// Splits a shuffled order into mini-batches. The last partial batch is
/// kept; with `min_batch = 2` a trailing singleton joins its predecessor.
pub fn batches(order: &[usize], size: usize, min_batch: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < min_batch) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Normalized predictions for every sample, in order, in eval mode.
pub fn predict_normalized(model: &mut dyn Regressor, data: &Dataset, batch_size: usize) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        out.extend(crate::model::predict(model, &data.inputs(chunk)?)?);
    }
    Ok(out)
}

/// One optimization step on a mini-batch; returns the batch MSE.
fn train_step(
    model: &mut dyn Regressor,
    opt: &mut Adam,
    x: &Tensor,
    target: &Tensor,
    pass: &mut Pass<'_>,
) -> Result<f64> {
    let tape = Tape::new();
    let vars = model.params().bind(&tape);
    let pred = model.forward(&vars, tape.input(x), pass)?;
    let loss = ops::mse_loss(pred, tape.constant(target))?;
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| v.grad().unwrap_or_else(|| vec![0.0; v.numel()]))
        .collect();
    let value = loss.item();
    opt.step(model.params_mut(), &grads)?;
    Ok(value)
}

/// Mini-batch Adam on min-max normalized targets with early stopping on
/// the validation MSE. The model is left holding its best-validation state.
pub fn train(model: &mut dyn Regressor, train: &Dataset, valid: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("training needs non-empty train and valid splits".into()));
    }
    let norm = NormStats::fit(&train.k)?;
    let targets = |d: &Dataset, idx: &[usize]| -> Result<Tensor> {
        Ok(Tensor::new(
            vec![idx.len(), 1],
            idx.iter().map(|&i| norm.normalize(d.k[i])).collect(),
        )?)
    };
    let valid_target: Vec<f64> = valid.k.iter().map(|&k| norm.normalize(k)).collect();
    // batch-norm layers need two values per channel in train mode
    let min_batch = if model.buffers().is_empty() { 1 } else { 2 };
    let mut opt = Adam::new(cfg.adam(), model.params())?;
    let start = Instant::now();
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ParamSet, Vec<(String, Tensor)>)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "shuffle", epoch as u64));
        let mut rng = stream(cfg.seed, "dropout", epoch as u64);
        let mut sum = 0.0;
        for b in batches(&order, cfg.batch_size, min_batch) {
            let mut pass = Pass {
                mode: Mode::Train,
                rng: &mut rng,
            };
            let loss = train_step(model, &mut opt, &train.inputs(&b)?, &targets(train, &b)?, &mut pass)?;
            sum += loss * b.len() as f64;
        }
        let train_mse = sum / train.len() as f64;
        let valid_mse = metrics::mse(&valid_target, &predict_normalized(model, valid, cfg.batch_size)?)?;
        if !train_mse.is_finite() || !valid_mse.is_finite() {
            return Err(Error::Degenerate(format!("training diverged at epoch {epoch}")));
        }
        let entry = EpochLog {
            epoch,
            train_mse,
            valid_mse,
            lr: cfg.lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch:>4}  train {train_mse:.6e}  valid {valid_mse:.6e}  {:.1}s",
            entry.wall_seconds
        );
        log.push(entry);
        if best.as_ref().is_none_or(|b| valid_mse < b.1) {
            best = Some((epoch, valid_mse, model.params().clone(), model.buffers()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("no validation improvement for {since_best} epochs, stopping");
                break;
            }
        }
    }
    let (best_epoch, best_valid_mse, params, buffers) = best.ok_or_else(|| Error::Config("max_epochs is 0".into()))?;
    *model.params_mut() = params;
    model.load_buffers(&buffers)?;
    Ok(TrainOutcome {
        norm,
        log,
        best_epoch,
        best_valid_mse,
    })
}

/// Metrics in mD on one dataset.
pub fn evaluate(model: &mut dyn Regressor, data: &Dataset, norm: &NormStats, batch_size: usize) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let pred = predict_normalized(model, data, batch_size)?;
    let samples = data
        .ids
        .iter()
        .zip(&data.k)
        .zip(pred)
        .map(|((id, &k), p)| Prediction {
            id: id.clone(),
            k_true_md: k,
            k_pred_md: norm.denormalize(p),
        })
        .collect();
    MetricsReport::from_predictions(samples)
}

/// Writes `{stem}.json` and `{stem}_scatter.csv` into `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    let csv = dir.join(format!("{stem}_scatter.csv"));
    fs::write(&csv, report.scatter_csv()).map_err(|e| Error::io(&csv, e))
}
