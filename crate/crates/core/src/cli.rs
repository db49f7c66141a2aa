//! Command-line surface: `generate`, `simulate`, `train`, `eval`, `ablate`,
//! `bench` and `plotdata`, sharing `--config`, `--seed` and `--out`.
//!
//! Each subcommand is also available as a `cmd_*` function taking a
//! resolved [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::bench::{bench_report, BenchReport};
use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{simulate_manifest, SimulationSummary};
use crate::manifest::{base_dir, DatasetManifest, Split};
use crate::model::checkpoint;
use crate::model::scan::Axis;
use crate::plot::render_csv;
use crate::synth::generate_dataset;
use crate::train::{ablate, evaluate, train, AblationRow, Dataset, Grid, MetricsReport, TrainOutcome};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "poremamba", version, about = "Permeability regression on voxelized porous media")]
pub struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanArg {
    All,
    X,
    Y,
    Z,
}

impl ScanArg {
    fn axes(self) -> Vec<Axis> {
        match self {
            ScanArg::All => Axis::ALL.to_vec(),
            ScanArg::X => vec![Axis::X],
            ScanArg::Y => vec![Axis::Y],
            ScanArg::Z => vec![Axis::Z],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Blocks,
    Patch,
    Scan,
    Batch,
    All,
}

/// Model and optimizer overrides shared by `train` and `ablate`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, value_enum)]
    pub scan: Option<ScanArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let m = &mut cfg.model;
        if let Some(k) = self.model {
            m.kind = k;
        }
        if let Some(p) = self.patch {
            m.vim.patch = p;
            m.vit.patch = p;
        }
        if let Some(b) = self.blocks {
            m.vim.blocks = b;
            m.vit.blocks = b;
        }
        if let Some(s) = self.scan {
            m.vim.scan_axes = s.axes();
        }
        if let Some(e) = self.epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        cfg.train.validate()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize porous samples and a manifest.
    Generate {
        #[arg(long, default_value_t = 1692)]
        count: usize,
        /// Cube side in voxels (overrides the config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fill in permeabilities with the flow solver.
    Simulate {
        /// Defaults to `<out>/manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train a regressor; writes the best checkpoint and a CSV log.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Run one or all ablation grids of the Mamba model.
    Ablate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        grid: GridArg,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Activation-memory footprints and fitted scaling exponents.
    Bench {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        patches: Option<Vec<usize>>,
    },
    /// Render a CSV output as SVG.
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the input path with an `.svg` extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::NotFound {
            path: path.to_path_buf(),
            hint: hint.into(),
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    require(path, "create it with `poremamba generate`")?;
    DatasetManifest::load(path)
}

fn load_splits(manifest_path: &Path, splits: &[Split]) -> Result<Vec<Dataset>> {
    let manifest = load_manifest(manifest_path)?;
    let base = base_dir(manifest_path);
    manifest.require_permeability(splits).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{m} (run `poremamba simulate` first)")),
        other => other,
    })?;
    splits.iter().map(|&s| Dataset::load(&manifest, &base, s)).collect()
}

pub fn cmd_generate(cfg: &RunConfig, count: usize, out: &Path) -> Result<DatasetManifest> {
    generate_dataset(&cfg.synth, count, cfg.data.split, out)
}

/// Simulates every sample and rewrites the manifest in place.
pub fn cmd_simulate(cfg: &RunConfig, manifest_path: &Path) -> Result<(DatasetManifest, SimulationSummary)> {
    let mut manifest = load_manifest(manifest_path)?;
    let summary = simulate_manifest(&mut manifest, &base_dir(manifest_path), &cfg.flow)?;
    manifest.save(manifest_path)?;
    Ok((manifest, summary))
}

/// Trains the configured model; writes `model.ckpt` and `train_log.csv`.
pub fn cmd_train(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> Result<TrainOutcome> {
    let sets = load_splits(manifest_path, &[Split::Train, Split::Valid])?;
    let mut model_cfg = cfg.model.selected();
    if let Some(g) = sets[0].grids.first() {
        model_cfg.set_input_side(g.n());
    }
    let mut model = model_cfg.build(cfg.train.seed)?;
    info!(
        "training {} ({} parameters) on {} samples",
        model_cfg.name(),
        model_cfg.count_parameters(),
        sets[0].len()
    );
    let outcome = train(model.as_mut(), &sets[0], &sets[1], &cfg.train)?;
    checkpoint::save(&out.join(CHECKPOINT), model.as_ref(), Some(outcome.norm))?;
    write(&out.join("train_log.csv"), &outcome.log_csv())?;
    Ok(outcome)
}

/// Writes `metrics.json` and `metrics_scatter.csv`.
pub fn cmd_eval(manifest_path: &Path, checkpoint_path: &Path, split: Split, out: &Path) -> Result<MetricsReport> {
    require(checkpoint_path, "train one with `poremamba train`")?;
    let (mut model, norm) = checkpoint::load(checkpoint_path)?;
    let norm = norm.ok_or_else(|| Error::Format {
        path: checkpoint_path.to_path_buf(),
        detail: "checkpoint carries no target normalization".into(),
    })?;
    let data = load_splits(manifest_path, &[split])?.remove(0);
    let report = evaluate(model.as_mut(), &data, &norm, 128)?;
    crate::train::trainer::write_report(out, "metrics", &report)?;
    Ok(report)
}

/// Writes `ablation_<grid>.csv` and `.json` per grid.
pub fn cmd_ablate(cfg: &RunConfig, manifest_path: &Path, grids: &[Grid], out: &Path) -> Result<Vec<AblationRow>> {
    let sets = load_splits(manifest_path, &[Split::Train, Split::Valid, Split::Test])?;
    let mut base = cfg.model.vim.clone();
    if let Some(g) = sets[0].grids.first() {
        base.n = g.n();
    }
    let mut all = Vec::new();
    for &grid in grids {
        let rows = ablate(grid, &base, &cfg.train, &sets[0], &sets[1], &sets[2]);
        write(&out.join(format!("ablation_{}.csv", grid.name())), &crate::train::ablation::rows_csv(&rows))?;
        write_json(&out.join(format!("ablation_{}.json", grid.name())), &rows)?;
        all.extend(rows);
    }
    Ok(all)
}

/// Writes `bench.csv` and `bench.json`.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<BenchReport> {
    let report = bench_report(&cfg.bench)?;
    write(&out.join("bench.csv"), &report.records_csv())?;
    write_json(&out.join("bench.json"), &report)?;
    Ok(report)
}

pub fn cmd_plotdata(input: &Path, output: Option<&Path>) -> Result<PathBuf> {
    require(input, "point --input at a CSV written by eval, train, bench or ablate")?;
    let csv = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let svg = render_csv(&csv)?;
    let path = output.map_or_else(|| input.with_extension("svg"), Path::to_path_buf);
    write(&path, &svg)?;
    Ok(path)
}

/// Runs a parsed command line. Returns `false` when the run finished but a
/// sample- or grid-level step failed.
pub fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cli.out.as_path();
    let manifest_or_default = |m: &Option<PathBuf>| m.clone().unwrap_or_else(|| out.join(MANIFEST));
    match &cli.command {
        Command::Generate { count, n } => {
            if let Some(n) = n {
                cfg.synth.n = *n;
            }
            let m = cmd_generate(&cfg, *count, out)?;
            let phi: Vec<f64> = m.records.iter().map(|r| r.porosity).collect();
            let mean = phi.iter().sum::<f64>() / phi.len().max(1) as f64;
            let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "wrote {} samples to {} (train {}, valid {}, test {})",
                m.records.len(),
                out.display(),
                m.count(Split::Train),
                m.count(Split::Valid),
                m.count(Split::Test)
            );
            println!("porosity mean {mean:.4}, range [{lo:.4}, {hi:.4}]");
            Ok(true)
        }
        Command::Simulate { manifest } => {
            let path = manifest_or_default(manifest);
            let (_, s) = cmd_simulate(&cfg, &path)?;
            println!("solved {} samples", s.solved);
            if let (Some(lo), Some(hi)) = (s.k_min, s.k_max) {
                println!("permeability range [{lo:.6e}, {hi:.6e}] mD");
            }
            for (id, why) in &s.flagged {
                println!("flagged {id}: {why}");
            }
            Ok(s.flagged.is_empty())
        }
        Command::Train { manifest, overrides } => {
            overrides.apply(&mut cfg)?;
            let o = cmd_train(&cfg, &manifest_or_default(manifest), out)?;
            println!(
                "best epoch {} of {}, validation MSE {:.6e}; checkpoint in {}",
                o.best_epoch,
                o.log.len(),
                o.best_valid_mse,
                out.join(CHECKPOINT).display()
            );
            Ok(true)
        }
        Command::Eval {
            manifest,
            checkpoint,
            split,
        } => {
            let ckpt = checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT));
            let r = cmd_eval(&manifest_or_default(manifest), &ckpt, (*split).into(), out)?;
            println!("R² {:.4}  RMSE {:.6e} mD  on {} samples", r.r2, r.rmse_md, r.samples.len());
            if let (Some(lo), Some(hi)) = (r.min_rel_err, r.max_rel_err) {
                println!("relative error range [{lo:.4}, {hi:.4}]");
            }
            Ok(true)
        }
        Command::Ablate {
            manifest,
            grid,
            overrides,
        } => {
            overrides.apply(&mut cfg)?;
            let grids = match grid {
                GridArg::Blocks => vec![Grid::Blocks],
                GridArg::Patch => vec![Grid::Patch],
                GridArg::Scan => vec![Grid::Scan],
                GridArg::Batch => vec![Grid::Batch],
                GridArg::All => Grid::ALL.to_vec(),
            };
            let rows = cmd_ablate(&cfg, &manifest_or_default(manifest), &grids, out)?;
            for r in &rows {
                match r.r2 {
                    Some(r2) => println!("{:>6} = {:<4} R² {r2:.4}", r.grid.name(), r.value),
                    None => println!("{:>6} = {:<4} {}", r.grid.name(), r.value, r.status),
                }
            }
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::Bench { n, patches } => {
            if let Some(n) = n {
                cfg.bench.n = *n;
            }
            if let Some(p) = patches {
                cfg.bench.patches = p.clone();
            }
            let r = cmd_bench(&cfg, out)?;
            for f in &r.fits {
                println!(
                    "{}: footprint ∝ tokens^{:.3} (± {:.3})",
                    f.model, f.tokens.slope, f.tokens.slope_stderr
                );
            }
            let e = &r.extrapolation;
            println!(
                "{} at patch {}: {:.1} GB extrapolated{}",
                e.model,
                e.patch,
                e.bytes / 1e9,
                if e.exceeds_budget { ", exceeds budget" } else { "" }
            );
            Ok(true)
        }
        Command::Plotdata { input, output } => {
            let path = cmd_plotdata(input, output.as_deref())?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}
