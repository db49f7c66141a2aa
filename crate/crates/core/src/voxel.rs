//! Binary pore/grain cubes and the `PVOX1` file format.
//!
//! Layout: 5-byte magic `PVOX1`, three little-endian `u32` extents
//! `(nx, ny, nz)`, one little-endian `f64` voxel edge in meters, then
//! `nx * ny * nz` label bytes with x fastest (0 = pore, 1 = grain).

use std::fs;
use std::path::Path;

use poremamba_tensor::Tensor;

use crate::error::{Error, Result};

pub const PORE: u8 = 0;
pub const GRAIN: u8 = 1;
const MAGIC: &[u8; 5] = b"PVOX1";

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    n: usize,
    dx: f64,
    labels: Vec<u8>,
}

impl VoxelGrid {
    pub fn new(n: usize, dx: f64, labels: Vec<u8>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("cube side {n} < 2")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Config(format!("voxel size {dx} must be positive")));
        }
        if labels.len() != n * n * n {
            return Err(Error::Config(format!(
                "{} labels for a {n}^3 cube",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > GRAIN) {
            return Err(Error::Config(format!("label {bad} is neither pore nor grain")));
        }
        Ok(VoxelGrid { n, dx, labels })
    }

    pub fn filled(n: usize, dx: f64, label: u8) -> Result<Self> {
        VoxelGrid::new(n, dx, vec![label; n * n * n])
    }

    /// Builds a grid from a predicate `is_pore(x, y, z)`.
    pub fn from_fn(n: usize, dx: f64, mut is_pore: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        let mut labels = Vec::with_capacity(n * n * n);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    labels.push(if is_pore(x, y, z) { PORE } else { GRAIN });
                }
            }
        }
        VoxelGrid::new(n, dx, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Physical side length `n * dx` in meters.
    pub fn side_length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.n * (y + self.n * z)
    }

    #[inline]
    pub fn is_pore(&self, x: usize, y: usize, z: usize) -> bool {
        self.labels[self.index(x, y, z)] == PORE
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        assert!(label <= GRAIN);
        let i = self.index(x, y, z);
        self.labels[i] = label;
    }

    pub fn pore_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == PORE).count()
    }

    /// Pore-volume fraction.
    pub fn porosity(&self) -> f64 {
        self.pore_count() as f64 / self.labels.len() as f64
    }

    /// Network input values (pore 1.0, grain 0.0) in `[D, H, W] = [z, y, x]`
    /// order.
    pub fn input_values(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l == PORE { 1.0 } else { 0.0 })
            .collect()
    }

    /// `[B, 1, n, n, n]` input tensor for a batch of equally sized grids.
    pub fn batch_tensor(grids: &[&VoxelGrid]) -> Result<Tensor> {
        let first = grids
            .first()
            .ok_or_else(|| Error::Usage("empty batch".into()))?;
        let n = first.n;
        if grids.iter().any(|g| g.n != n) {
            return Err(Error::Config("batch mixes cube sizes".into()));
        }
        let mut data = Vec::with_capacity(grids.len() * n * n * n);
        for g in grids {
            data.extend(g.input_values());
        }
        Ok(Tensor::new(vec![grids.len(), 1, n, n, n], data)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 12 + 8 + self.labels.len());
        out.extend_from_slice(MAGIC);
        for _ in 0..3 {
            out.extend_from_slice(&(self.n as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.dx.to_le_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            path: path.to_path_buf(),
            detail,
        };
        if bytes.len() < 25 || &bytes[..5] != MAGIC {
            return Err(bad("missing PVOX1 header".into()));
        }
        let ext = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
        let (nx, ny, nz) = (ext(0), ext(1), ext(2));
        if nx != ny || ny != nz {
            return Err(bad(format!("non-cubic extents {nx}x{ny}x{nz}")));
        }
        let dx = f64::from_le_bytes(bytes[17..25].try_into().unwrap());
        let labels = bytes[25..].to_vec();
        if labels.len() != nx * ny * nz {
            return Err(bad(format!(
                "expected {} label bytes, found {}",
                nx * ny * nz,
                labels.len()
            )));
        }
        VoxelGrid::new(nx, dx, labels).map_err(|e| bad(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        VoxelGrid::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn porosity_extremes() {
        assert_eq!(VoxelGrid::filled(4, 1.0, PORE).unwrap().porosity(), 1.0);
        assert_eq!(VoxelGrid::filled(4, 1.0, GRAIN).unwrap().porosity(), 0.0);
        let half = VoxelGrid::from_fn(4, 1.0, |x, _, _| x < 2).unwrap();
        assert_eq!(half.porosity(), 0.5);
    }

    #[test]
    fn header_layout() {
        let g = VoxelGrid::from_fn(2, 0.003, |x, y, z| x + y + z == 0).unwrap();
        let b = g.to_bytes();
        assert_eq!(&b[..5], b"PVOX1");
        assert_eq!(u32::from_le_bytes(b[5..9].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[17..25].try_into().unwrap()), 0.003);
        assert_eq!(&b[25..], &[0, 1, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(VoxelGrid::new(1, 1.0, vec![0]).is_err());
        assert!(VoxelGrid::new(2, 0.0, vec![0; 8]).is_err());
        assert!(VoxelGrid::new(2, 1.0, vec![2; 8]).is_err());
        let p = Path::new("x.pvox");
        assert!(VoxelGrid::from_bytes(b"PVOX2aaaaaaaaaaaaaaaaaaaaaaa", p).is_err());
        let mut b = VoxelGrid::filled(2, 1.0, PORE).unwrap().to_bytes();
        b.pop();
        assert!(VoxelGrid::from_bytes(&b, p).is_err());
    }

    proptest! {
        #[test]
        fn pvox_round_trip(n in 2usize..6, dx in 1e-6f64..1.0, seed in any::<u64>()) {
            let mut s = seed;
            let g = VoxelGrid::from_fn(n, dx, |_, _, _| { s = crate::rng::splitmix64(s); s & 1 == 0 }).unwrap();
            let back = VoxelGrid::from_bytes(&g.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(g.pore_count() + g.labels().iter().filter(|&&l| l == GRAIN).count(), n * n * n);
        }
    }
}
