//! Truncated-Gaussian porous media: white noise, periodic Gaussian
//! smoothing, global min/max rescale and a single threshold.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{split_counts, DatasetManifest, SampleRecord, Split};
use crate::rng::{derive_seed, stream};
use crate::voxel::{VoxelGrid, GRAIN, PORE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n: usize,
    /// Gaussian standard deviation in voxels.
    pub sigma: f64,
    /// Kernel half-width in voxels; weights beyond it are dropped and the
    /// rest renormalized.
    pub radius: usize,
    pub threshold: f64,
    /// Voxel edge in meters.
    pub dx: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 64,
            sigma: 5.0,
            radius: 17,
            threshold: 0.45,
            dx: 0.003,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n = {} < 2", self.n)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma = {} must be positive", self.sigma)));
        }
        if self.radius < 1 {
            return Err(Error::Config("kernel radius must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if !(self.dx > 0.0) {
            return Err(Error::Config(format!("dx = {} must be positive", self.dx)));
        }
        Ok(())
    }

    /// One sample drawn from `seed` (the per-sample seed, not the master).
    pub fn sample(&self, seed: u64) -> Result<VoxelGrid> {
        self.validate()?;
        let mut field = white_noise(seed, self.n);
        gaussian_smooth(&mut field, self.n, self.sigma, self.radius)?;
        rescale_threshold(&field, self.n, self.dx, self.threshold)
    }
}

/// `n³` i.i.d. standard normal draws, x fastest.
pub fn white_noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, "noise", 0);
    (0..n * n * n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Normalized 1-D Gaussian weights at offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// In-place separable Gaussian blur of a periodic `n³` field.
pub fn gaussian_smooth(field: &mut [f64], n: usize, sigma: f64, radius: usize) -> Result<()> {
    if field.len() != n * n * n {
        return Err(Error::Config(format!(
            "field of {} values is not a {n}^3 cube",
            field.len()
        )));
    }
    if radius < 1 || !(sigma > 0.0) {
        return Err(Error::Config(format!("invalid kernel sigma {sigma}, radius {radius}")));
    }
    let k = gaussian_kernel(sigma, radius);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for stride in [1, n, n * n] {
        for start in 0..n * n * n {
            // lines start wherever the coordinate along this axis is 0
            if (start / stride) % n != 0 {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = field[start + i * stride];
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = k
                    .iter()
                    .enumerate()
                    .map(|(j, w)| {
                        let off = (i + j + radius * n - radius) % n;
                        w * line[off]
                    })
                    .sum();
            }
            for (i, v) in out.iter().enumerate() {
                field[start + i * stride] = *v;
            }
        }
    }
    Ok(())
}

/// Rescales to `[0, 1]` by the global extrema and labels pore where the
/// rescaled value is at most `threshold`.
pub fn rescale_threshold(field: &[f64], n: usize, dx: f64, threshold: f64) -> Result<VoxelGrid> {
    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate("cannot rescale a constant field".into()));
    }
    let labels = field
        .iter()
        .map(|&v| if (v - lo) / (hi - lo) <= threshold { PORE } else { GRAIN })
        .collect();
    VoxelGrid::new(n, dx, labels)
}

pub fn porosity(grid: &VoxelGrid) -> f64 {
    grid.porosity()
}

pub fn sample_id(index: usize) -> String {
    format!("sample_{index:04}")
}

/// Writes `count` samples and `manifest.json` into `out_dir`. Sample `i`
/// uses seed `derive_seed(config.seed, "sample", i)`; split membership is a
/// seeded shuffle.
pub fn generate_dataset(
    config: &SynthConfig,
    count: usize,
    fractions: [f64; 3],
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    let [train, valid, _] = split_counts(count, fractions)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut stream(config.seed, "split", 0));
    let mut splits = vec![Split::Test; count];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
    }

    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, "sample", i as u64);
            let grid = config.sample(seed)?;
            let id = sample_id(i);
            let file = format!("{id}.pvox");
            grid.write(&out_dir.join(&file))?;
            log::debug!("{id}: porosity {:.4}", grid.porosity());
            Ok(SampleRecord {
                id,
                file,
                seed,
                porosity: grid.porosity(),
                permeability_md: None,
                split: splits[i],
                flag: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest { records };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
