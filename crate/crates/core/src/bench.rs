//! Activation-memory scaling: retained-activation counts from a symbolic
//! forward pass, and log-log fits of footprint against token count.

use std::fmt::Write as _;

use poremamba_tensor::ops::Mode;
use poremamba_tensor::Tape;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Pass, VimConfig, VitConfig};
use crate::rng::stream;

pub const BYTES_PER_ELEMENT: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintRecord {
    pub model: String,
    pub patch: usize,
    pub tokens: usize,
    pub elements: u64,
    pub bytes: u64,
}

/// Retained activations of one training forward pass at `batch`, counted
/// on a shape-only tape.
pub fn count_activations(model: &ModelConfig, batch: usize) -> Result<FootprintRecord> {
    if batch == 0 {
        return Err(Error::Config("batch must be positive".into()));
    }
    let mut net = model.build(0)?;
    let n = model.input_side();
    let tape = Tape::symbolic();
    let vars = net.params().bind(&tape);
    let x = tape.input_shape(&[batch, 1, n, n, n]);
    let mut rng = stream(0, "bench", 0);
    let mut pass = Pass {
        mode: Mode::Train,
        rng: &mut rng,
    };
    net.forward(&vars, x, &mut pass)?;
    let elements = tape.footprint().activation_elements;
    let patch = match model {
        ModelConfig::Vim(c) => c.patch,
        ModelConfig::Vit(c) => c.patch,
        ModelConfig::Cnn(_) => 2,
    };
    Ok(FootprintRecord {
        model: model.name().into(),
        patch,
        tokens: (n / patch).pow(3),
        elements,
        bytes: elements * BYTES_PER_ELEMENT,
    })
}

/// Least-squares line `log y = intercept + slope · log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

impl LogLogFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Domain(format!("non-positive point {p:?} in log-log fit")));
    }
    let m = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all sizes are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = ssr / (m - 2.0);
    Ok(LogLogFit {
        slope,
        intercept,
        slope_stderr: (s2 / sxx).sqrt(),
        intercept_stderr: (s2 * (1.0 / m + mx * mx / sxx)).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Input cube side. Large enough that attention scores dominate the
    /// transformer footprint at the fitted patch sizes.
    pub n: usize,
    pub patches: Vec<usize>,
    pub batch: usize,
    /// Patch size whose transformer footprint is extrapolated from the fit.
    pub extrapolate_patch: usize,
    pub budget_gb: f64,
    pub vim: VimConfig,
    pub vit: VitConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 256,
            patches: vec![8, 16, 32],
            batch: 1,
            extrapolate_patch: 4,
            budget_gb: 80.0,
            vim: VimConfig::default(),
            vit: VitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: String,
    /// Exponent in token count.
    pub tokens: LogLogFit,
    /// Exponent in patch size; `-3` times the token exponent on a cube.
    pub patch: LogLogFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub model: String,
    pub patch: usize,
    pub tokens: usize,
    pub bytes: f64,
    pub budget_bytes: f64,
    pub exceeds_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub batch: usize,
    pub records: Vec<FootprintRecord>,
    pub fits: Vec<ModelFit>,
    pub extrapolation: Extrapolation,
}

impl BenchReport {
    pub fn records_csv(&self) -> String {
        let mut out = String::from("model,patch,tokens,elements,bytes\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.model, r.patch, r.tokens, r.elements, r.bytes);
        }
        out
    }

    pub fn fit(&self, model: &str) -> Option<&ModelFit> {
        self.fits.iter().find(|f| f.model == model)
    }
}

/// Footprints of both sequence models at every patch size, fitted slopes,
/// and the budget check of the extrapolated transformer footprint.
pub fn bench_report(cfg: &BenchConfig) -> Result<BenchReport> {
    if let Some(p) = cfg.patches.iter().find(|&&p| p == 0 || cfg.n % p != 0) {
        return Err(Error::Config(format!("patch {p} does not divide n = {}", cfg.n)));
    }
    let mut records = Vec::new();
    let mut fits = Vec::new();
    for kind in ["vim", "vit"] {
        let mut own = Vec::new();
        for &p in &cfg.patches {
            let model = match kind {
                "vim" => ModelConfig::Vim(VimConfig {
                    n: cfg.n,
                    patch: p,
                    ..cfg.vim.clone()
                }),
                _ => ModelConfig::Vit(VitConfig {
                    n: cfg.n,
                    patch: p,
                    ..cfg.vit.clone()
                }),
            };
            own.push(count_activations(&model, cfg.batch)?);
        }
        let by_tokens: Vec<(f64, f64)> = own.iter().map(|r| (r.tokens as f64, r.elements as f64)).collect();
        let by_patch: Vec<(f64, f64)> = own.iter().map(|r| (r.patch as f64, r.elements as f64)).collect();
        fits.push(ModelFit {
            model: kind.into(),
            tokens: fit_loglog(&by_tokens)?,
            patch: fit_loglog(&by_patch)?,
        });
        records.extend(own);
    }
    let vit = &fits[1];
    let tokens = (cfg.n / cfg.extrapolate_patch.max(1)).pow(3);
    let bytes = vit.tokens.predict(tokens as f64) * BYTES_PER_ELEMENT as f64;
    let budget_bytes = cfg.budget_gb * 1e9;
    let extrapolation = Extrapolation {
        model: "vit".into(),
        patch: cfg.extrapolate_patch,
        tokens,
        bytes,
        budget_bytes,
        exceeds_budget: bytes > budget_bytes,
    };
    Ok(BenchReport {
        n: cfg.n,
        batch: cfg.batch,
        records,
        fits,
        extrapolation,
    })
}
