//! Pore clusters that carry flow in x on the x-periodic domain.
//!
//! Two pore voxels are connected when they are lattice neighbours (face or
//! edge contact). A cluster carries flow iff it contains a cycle that wraps
//! around x, detected by breadth-first search with unwrapped x windings.

use std::collections::VecDeque;

use super::lattice::{neighbour, Lateral, C, Q};
use crate::voxel::VoxelGrid;

/// `true` for each voxel belonging to an x-spanning pore cluster.
pub fn flowing_mask(grid: &VoxelGrid, lateral: [Lateral; 2]) -> Vec<bool> {
    let n = grid.n();
    let total = n * n * n;
    let labels = grid.labels();
    let mut winding: Vec<Option<i32>> = vec![None; total];
    let mut mask = vec![false; total];
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..total {
        if labels[start] != crate::voxel::PORE || winding[start].is_some() {
            continue;
        }
        winding[start] = Some(0);
        queue.push_back(start);
        members.clear();
        let mut spans = false;
        while let Some(v) = queue.pop_front() {
            members.push(v);
            let (x, y, z) = (v % n, (v / n) % n, v / (n * n));
            let w = winding[v].unwrap();
            for c in &C[1..Q] {
                let Some((u, dw)) = neighbour(n, lateral, x, y, z, *c) else {
                    continue;
                };
                if labels[u] != crate::voxel::PORE {
                    continue;
                }
                match winding[u] {
                    None => {
                        winding[u] = Some(w + dw);
                        queue.push_back(u);
                    }
                    Some(wu) if wu != w + dw => spans = true,
                    Some(_) => {}
                }
            }
        }
        if spans {
            for &v in &members {
                mask[v] = true;
            }
        }
    }
    mask
}

pub fn percolates(grid: &VoxelGrid, lateral: [Lateral; 2]) -> bool {
    flowing_mask(grid, lateral).iter().any(|&b| b)
}
