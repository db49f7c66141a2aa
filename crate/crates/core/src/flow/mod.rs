//! Stokes flow through voxel geometries and Darcy permeability.
//!
//! The solver works in lattice units (`dx = dt = 1`) with a uniform body
//! force standing in for the pressure gradient `G = −Δp / l`. Because the
//! discrete problem is linear, lattice results map to physical units by a
//! single factor: `u = u_lat · (ν_lat / F_lat) · dx² · G / μ`, which makes the
//! permeability `k = U_lat · ν_lat · dx² / F_lat` independent of `μ` and `Δp`.

pub mod lattice;
pub mod lbm;
pub mod percolation;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{load_grid, DatasetManifest};
use crate::voxel::VoxelGrid;
pub use lattice::Lateral;

/// Square meters per millidarcy.
pub const M2_PER_MD: f64 = 9.869233e-16;

/// Peak lattice velocity aimed for in an open channel spanning the domain.
pub const TARGET_PEAK_VELOCITY: f64 = 0.04;

pub const CHECK_INTERVAL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSpec {
    /// Dynamic viscosity, Pa·s.
    pub mu: f64,
    /// Pressure change across the sample, outlet minus inlet, Pa.
    pub dp: f64,
    /// BGK relaxation time in lattice units.
    pub tau: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Boundary treatment of the y and z faces.
    pub lateral: [Lateral; 2],
}

impl Default for FluidSpec {
    fn default() -> Self {
        FluidSpec {
            mu: 1e-3,
            dp: -1.0,
            tau: 1.0,
            tolerance: 1e-6,
            max_iterations: 200_000,
            lateral: [Lateral::Wall, Lateral::Wall],
        }
    }
}

impl FluidSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Config(format!("viscosity {} must be positive", self.mu)));
        }
        if !(self.tau > 0.5) {
            return Err(Error::Config(format!("relaxation time {} must exceed 0.5", self.tau)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.dp == 0.0 || !self.dp.is_finite() {
            return Err(Error::Config(format!("pressure drop {} must be nonzero", self.dp)));
        }
        Ok(())
    }
}

/// Physical velocity (m/s) and pressure (Pa) on every voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub n: usize,
    pub dx: f64,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub uz: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Largest lattice-unit speed reached.
    pub peak_lattice_speed: f64,
}

#[derive(Serialize, Deserialize)]
struct FieldSidecar {
    n: usize,
    dx: f64,
    arrays: Vec<String>,
    dtype: String,
    iterations: usize,
    residual: f64,
}

impl FlowField {
    pub fn zeros(n: usize, dx: f64) -> Self {
        let z = vec![0.0; n * n * n];
        FlowField {
            n,
            dx,
            ux: z.clone(),
            uy: z.clone(),
            uz: z.clone(),
            p: z,
            iterations: 0,
            residual: 0.0,
            peak_lattice_speed: 0.0,
        }
    }

    /// Writes `<stem>.raw` (ux, uy, uz, p as consecutive little-endian f64
    /// arrays, x fastest) and `<stem>.json` describing it.
    pub fn write_raw(&self, dir: &Path, stem: &str) -> Result<()> {
        let raw = dir.join(format!("{stem}.raw"));
        let mut bytes = Vec::with_capacity(4 * 8 * self.ux.len());
        for arr in [&self.ux, &self.uy, &self.uz, &self.p] {
            for v in arr.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
        let side = FieldSidecar {
            n: self.n,
            dx: self.dx,
            arrays: ["ux", "uy", "uz", "p"].map(String::from).to_vec(),
            dtype: "f64le".into(),
            iterations: self.iterations,
            residual: self.residual,
        };
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&json, e))
    }

    pub fn read_raw(dir: &Path, stem: &str) -> Result<Self> {
        let json = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let side: FieldSidecar = serde_json::from_str(&text)?;
        let raw = dir.join(format!("{stem}.raw"));
        let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
        let cells = side.n.pow(3);
        if bytes.len() != 4 * 8 * cells {
            return Err(Error::Format {
                path: raw,
                detail: format!("expected {} bytes, found {}", 32 * cells, bytes.len()),
            });
        }
        let arr = |k: usize| -> Vec<f64> {
            bytes[k * 8 * cells..(k + 1) * 8 * cells]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect()
        };
        Ok(FlowField {
            n: side.n,
            dx: side.dx,
            ux: arr(0),
            uy: arr(1),
            uz: arr(2),
            p: arr(3),
            iterations: side.iterations,
            residual: side.residual,
            peak_lattice_speed: 0.0,
        })
    }
}

/// Solves for the steady x-driven flow through the pore space of `grid`.
pub fn lbm_solve(grid: &VoxelGrid, fluid: &FluidSpec) -> Result<FlowField> {
    fluid.validate()?;
    let n = grid.n();
    let dx = grid.dx();
    let nu = (fluid.tau - 0.5) / 3.0;
    let force = TARGET_PEAK_VELOCITY * 8.0 * nu / (n * n) as f64;
    let params = lbm::LatticeParams {
        tau: fluid.tau,
        force,
        tolerance: fluid.tolerance,
        max_iterations: fluid.max_iterations,
        check_interval: CHECK_INTERVAL,
        lateral: fluid.lateral,
    };
    let sol = lbm::solve(grid, &params)?;

    let l = grid.side_length();
    let gradient = -fluid.dp / l;
    let u_scale = nu / force * dx * dx * gradient / fluid.mu;
    // cs² δρ in lattice pressure units, rescaled like the body force
    let p_scale = gradient * dx / force / 3.0;

    let mut field = FlowField::zeros(n, dx);
    field.iterations = sol.iterations;
    field.residual = sol.residual;
    for (v, p) in field.p.iter_mut().enumerate() {
        if grid.labels()[v] == crate::voxel::PORE {
            *p = fluid.dp * ((v % n) as f64 + 0.5) / n as f64;
        }
    }
    let mut peak: f64 = 0.0;
    for ((&v, u), drho) in sol.nodes.iter().zip(&sol.velocity).zip(&sol.density) {
        field.ux[v] = u[0] * u_scale;
        field.uy[v] = u[1] * u_scale;
        field.uz[v] = u[2] * u_scale;
        field.p[v] += drho * p_scale;
        peak = peak.max((u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt());
    }
    field.peak_lattice_speed = peak;
    if peak >= 0.05 {
        log::warn!("peak lattice speed {peak:.3} leaves the low-Reynolds range");
    }
    Ok(field)
}

/// Mean x-velocity over all voxels, solids counting as zero.
pub fn superficial_velocity(flow: &FlowField, grid: &VoxelGrid) -> Result<f64> {
    if flow.ux.len() != grid.labels().len() {
        return Err(Error::Config(format!(
            "flow field of {} voxels does not match a {}^3 grid",
            flow.ux.len(),
            grid.n()
        )));
    }
    Ok(flow.ux.iter().sum::<f64>() / flow.ux.len() as f64)
}

/// Darcy permeability in millidarcy from superficial velocity `u` (m/s),
/// viscosity `mu` (Pa·s), length `l` (m) and pressure change `dp` (Pa).
pub fn permeability(u: f64, mu: f64, l: f64, dp: f64) -> Result<f64> {
    if dp == 0.0 {
        return Err(Error::Domain("permeability undefined for zero pressure drop".into()));
    }
    Ok(-mu * u * l / dp / M2_PER_MD)
}

/// Permeability (mD) of a plane channel of gap `h` meters, `h² / 12`.
pub fn channel_oracle(h: f64) -> f64 {
    h * h / 12.0 / M2_PER_MD
}

/// Solves the flow on `grid` and returns its x permeability in mD.
pub fn grid_permeability(grid: &VoxelGrid, fluid: &FluidSpec) -> Result<f64> {
    let flow = lbm_solve(grid, fluid)?;
    let u = superficial_velocity(&flow, grid)?;
    permeability(u, fluid.mu, grid.side_length(), fluid.dp)
}

/// Outcome of simulating every sample of a manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationSummary {
    pub solved: usize,
    /// `(id, reason)` for samples left without a permeability.
    pub flagged: Vec<(String, String)>,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
}

/// Fills in the permeability of every record, solving samples in parallel.
/// A sample that fails keeps `permeability_mD = null` and records the
/// reason in its `flag`; the rest of the run continues.
pub fn simulate_manifest(manifest: &mut DatasetManifest, base: &Path, fluid: &FluidSpec) -> Result<SimulationSummary> {
    fluid.validate()?;
    let results: Vec<Result<f64>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let grid = load_grid(base, r)?;
            let k = grid_permeability(&grid, fluid)?;
            log::debug!("{}: k = {k:.6e} mD", r.id);
            Ok(k)
        })
        .collect();
    let mut summary = SimulationSummary::default();
    for (r, res) in manifest.records.iter_mut().zip(results) {
        match res {
            Ok(k) => {
                r.permeability_md = Some(k);
                r.flag = None;
                summary.solved += 1;
                summary.k_min = Some(summary.k_min.map_or(k, |m| m.min(k)));
                summary.k_max = Some(summary.k_max.map_or(k, |m| m.max(k)));
            }
            Err(e @ (Error::Io { .. } | Error::Format { .. })) => return Err(e),
            Err(e) => {
                log::warn!("{}: {e}", r.id);
                r.permeability_md = None;
                r.flag = Some(e.to_string());
                summary.flagged.push((r.id.clone(), e.to_string()));
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darcy_arithmetic() {
        assert_eq!(permeability(0.0, 1e-3, 0.192, -1.0).unwrap(), 0.0);
        let k = permeability(1e-8, 1e-3, 0.192, -1.0).unwrap();
        assert!((k * M2_PER_MD - 1.92e-12).abs() < 1e-24);
        assert!((k - 1945.4).abs() < 0.2, "{k}");
        assert!(matches!(permeability(1.0, 1.0, 1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn channel_law() {
        assert!((channel_oracle(0.096) * M2_PER_MD - 7.68e-4).abs() < 1e-16);
        let r = channel_oracle(0.2) / channel_oracle(0.1);
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn superficial_velocity_averages_over_solids() {
        let g = VoxelGrid::from_fn(4, 1.0, |x, _, _| x < 2).unwrap();
        let mut f = FlowField::zeros(4, 1.0);
        assert_eq!(superficial_velocity(&f, &g).unwrap(), 0.0);
        for (v, u) in f.ux.iter_mut().enumerate() {
            if g.labels()[v] == crate::voxel::PORE {
                *u = 3.0;
            }
        }
        assert_eq!(superficial_velocity(&f, &g).unwrap(), 1.5);
        let open = VoxelGrid::filled(4, 1.0, crate::voxel::PORE).unwrap();
        f.ux.fill(3.0);
        assert_eq!(superficial_velocity(&f, &open).unwrap(), 3.0);
    }

    #[test]
    fn all_grain_is_still() {
        let g = VoxelGrid::filled(6, 1e-3, crate::voxel::GRAIN).unwrap();
        let flow = lbm_solve(&g, &FluidSpec::default()).unwrap();
        assert!(flow.ux.iter().all(|&u| u == 0.0));
        assert_eq!(grid_permeability(&g, &FluidSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn raw_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = FlowField::zeros(3, 0.5);
        f.ux[4] = 1.25;
        f.p[7] = -2.0;
        f.iterations = 300;
        f.write_raw(dir.path(), "flow").unwrap();
        let back = FlowField::read_raw(dir.path(), "flow").unwrap();
        assert_eq!(back.ux, f.ux);
        assert_eq!(back.p, f.p);
        assert_eq!(back.iterations, 300);
    }
}
