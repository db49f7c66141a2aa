//! The whole pipeline on a tiny dataset: generate, simulate, train,
//! evaluate, and render the parity plot.
//!
//! ```text
//! cargo run --release --example train_eval -- <out_dir> <count> <epochs>
//! ```

use std::path::PathBuf;

use poremamba::cli::{cmd_eval, cmd_generate, cmd_plotdata, cmd_simulate, cmd_train, CHECKPOINT, MANIFEST};
use poremamba::config::RunConfig;
use poremamba::manifest::Split;

fn main() -> poremamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("poremamba-train-eval"));
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(120);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);

    let mut cfg = RunConfig::default().with_seed(3);
    cfg.synth.n = 16;
    cfg.synth.sigma = 2.5;
    cfg.synth.radius = 9;
    cfg.model.vim.patch = 4;
    cfg.train.max_epochs = epochs;
    cfg.train.batch_size = 8;

    cmd_generate(&cfg, count, &out)?;
    let manifest = out.join(MANIFEST);
    let (_, summary) = cmd_simulate(&cfg, &manifest)?;
    println!("simulated {} samples, {} flagged", summary.solved, summary.flagged.len());

    let outcome = cmd_train(&cfg, &manifest, &out)?;
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "best epoch {} of {}, valid mse {:.3e}",
        outcome.best_epoch, last.epoch, outcome.best_valid_mse
    );

    let report = cmd_eval(&manifest, &out.join(CHECKPOINT), Split::Test, &out)?;
    println!("test r2 {:.3}, rmse {:.3e} mD", report.r2, report.rmse_md);
    let svg = cmd_plotdata(&out.join("metrics_scatter.csv"), None)?;
    println!("wrote {}", svg.display());
    Ok(())
}
