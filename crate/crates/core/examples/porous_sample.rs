//! Generates truncated-Gaussian samples and computes porosity and x
//! permeability for each.
//!
//! ```text
//! cargo run --release --example porous_sample -- <n> <count> <seed>
//! ```

use poremamba::flow::{self, FluidSpec};
use poremamba::rng::derive_seed;
use poremamba::synth::SynthConfig;

fn main() -> poremamba::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<u64>().ok());
    let n = args.next().flatten().unwrap_or(32) as usize;
    let count = args.next().flatten().unwrap_or(4);
    let seed = args.next().flatten().unwrap_or(0);
    let config = SynthConfig { n, seed, ..SynthConfig::default() };
    let fluid = FluidSpec::default();
    println!("{:>6} {:>9} {:>12} {:>7} {:>8}", "sample", "porosity", "k_mD", "steps", "seconds");
    for i in 0..count {
        let grid = config.sample(derive_seed(seed, "sample", i))?;
        let start = std::time::Instant::now();
        let field = flow::lbm_solve(&grid, &fluid)?;
        let u = flow::superficial_velocity(&field, &grid)?;
        let k = flow::permeability(u, fluid.mu, grid.side_length(), fluid.dp)?;
        println!(
            "{i:>6} {:>9.4} {k:>12.4e} {:>7} {:>8.2}",
            grid.porosity(),
            field.iterations,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
