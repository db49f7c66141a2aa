//! The two reference regressors: a 3D vision transformer and a strided
//! convolutional encoder with an MLP decoder.
//!
//! ```text
//! cargo run --release --example baselines
//! ```

use poremamba::model::{predict, CnnConfig, ModelConfig, VitConfig};
use poremamba::synth::SynthConfig;
use poremamba::voxel::VoxelGrid;

fn main() -> poremamba::Result<()> {
    println!("{:>5} {:>10}", "patch", "vit");
    for p in [4, 8, 16, 32] {
        let cfg = ModelConfig::Vit(VitConfig { patch: p, ..VitConfig::default() });
        println!("{p:>5} {:>10}", cfg.count_parameters());
    }
    println!("cnn at 64^3: {}", ModelConfig::Cnn(CnnConfig::default()).count_parameters());

    let n = 32;
    let synth = SynthConfig { n, ..SynthConfig::default() };
    let grids = [synth.sample(1)?, synth.sample(2)?, synth.sample(3)?];
    let input = VoxelGrid::batch_tensor(&grids.iter().collect::<Vec<_>>())?;
    for cfg in [
        ModelConfig::Vit(VitConfig { n, patch: 8, ..VitConfig::default() }),
        ModelConfig::Cnn(CnnConfig { n, ladder: vec![16, 32, 64, 128, 256], ..CnnConfig::default() }),
    ] {
        let mut net = cfg.build(0)?;
        match predict(net.as_mut(), &input) {
            Ok(y) => println!("{}: {y:?}", cfg.name()),
            // batch-norm layers have no running statistics before training
            Err(e) => println!("{}: {e}", cfg.name()),
        }
    }
    Ok(())
}
