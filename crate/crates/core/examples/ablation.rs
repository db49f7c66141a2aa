//! One ablation grid on a small generated dataset.
//!
//! ```text
//! cargo run --release --example ablation -- <grid> <epochs>
//! ```

use poremamba::cli::{cmd_ablate, cmd_generate, cmd_simulate, MANIFEST};
use poremamba::config::RunConfig;
use poremamba::train::Grid;

fn main() -> poremamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let grid: Grid = args.next().as_deref().unwrap_or("blocks").parse()?;
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let out = std::env::temp_dir().join("poremamba-ablation");

    let mut cfg = RunConfig::default().with_seed(11);
    cfg.synth.n = 16;
    cfg.synth.sigma = 2.5;
    cfg.synth.radius = 9;
    cfg.model.vim.patch = 4;
    cfg.train.max_epochs = epochs;
    cfg.train.batch_size = 8;
    cmd_generate(&cfg, 30, &out)?;
    let manifest = out.join(MANIFEST);
    cmd_simulate(&cfg, &manifest)?;

    let rows = cmd_ablate(&cfg, &manifest, &[grid], &out)?;
    println!("{:>12} {:>9} {:>8} {}", grid.name(), "params", "r2", "status");
    for r in rows {
        let r2 = r.r2.map_or("-".into(), |v| format!("{v:.3}"));
        let params = r.parameters.map_or("-".into(), |v| v.to_string());
        println!("{:>12} {params:>9} {r2:>8} {}", r.value, r.status);
    }
    println!("tables in {}", out.display());
    Ok(())
}
