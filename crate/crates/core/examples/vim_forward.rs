//! Parameter counts of the Vision Mamba regressor across patch sizes, and
//! one untrained forward pass on a synthetic sample.
//!
//! ```text
//! cargo run --release --example vim_forward -- <n> <patch>
//! ```

use poremamba::bench::count_activations;
use poremamba::model::{predict, ModelConfig, VimConfig};
use poremamba::synth::SynthConfig;
use poremamba::voxel::VoxelGrid;

fn main() -> poremamba::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(32);
    let patch = args.next().flatten().unwrap_or(8);

    println!("{:>5} {:>10}", "patch", "params");
    for p in [4, 8, 16, 32] {
        let cfg = ModelConfig::Vim(VimConfig { patch: p, ..VimConfig::default() });
        println!("{p:>5} {:>10}", cfg.count_parameters());
    }

    let cfg = ModelConfig::Vim(VimConfig { n, patch, ..VimConfig::default() });
    let mut net = cfg.build(0)?;
    let synth = SynthConfig { n, ..SynthConfig::default() };
    let grids = [synth.sample(1)?, synth.sample(2)?];
    let input = VoxelGrid::batch_tensor(&grids.iter().collect::<Vec<_>>())?;
    let start = std::time::Instant::now();
    // the regression head starts at zero, so an untrained model predicts 0
    let y = predict(net.as_mut(), &input)?;
    let fp = count_activations(&cfg, 1)?;
    println!(
        "n={n} patch={patch}: {} tokens, outputs {:?} in {:.2}s, {} retained activations per sample",
        fp.tokens,
        y,
        start.elapsed().as_secs_f64(),
        fp.elements
    );
    Ok(())
}
