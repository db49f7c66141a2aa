use poremamba::flow::{self, percolation, FluidSpec, Lateral};
use poremamba::synth::SynthConfig;
use poremamba::voxel::{VoxelGrid, GRAIN, PORE};

fn channel_fluid() -> FluidSpec {
    FluidSpec {
        lateral: [Lateral::Wall, Lateral::Periodic],
        ..FluidSpec::default()
    }
}

#[test]
fn plane_channel_matches_poiseuille() {
    let n = 32;
    let dx = 0.003;
    let grid = VoxelGrid::filled(n, dx, PORE).unwrap();
    let fluid = channel_fluid();
    let field = flow::lbm_solve(&grid, &fluid).unwrap();

    let h = grid.side_length();
    let k = flow::permeability(flow::superficial_velocity(&field, &grid).unwrap(), fluid.mu, h, fluid.dp).unwrap();
    let exact = flow::channel_oracle(h);
    assert!((k - exact).abs() / exact < 0.05, "k {k} vs {exact}");

    let g = -fluid.dp / h;
    for y in 4..n - 4 {
        let yc = (y as f64 + 0.5) * dx;
        let u_exact = g / (2.0 * fluid.mu) * yc * (h - yc);
        let u = field.ux[grid.index(5, y, 7)];
        assert!((u - u_exact).abs() / u_exact < 0.02, "y {y}: {u} vs {u_exact}");
    }
    assert!(field.uy.iter().chain(&field.uz).all(|v| v.abs() < 1e-9 * field.ux[grid.index(0, n / 2, 0)]));
}

#[test]
fn square_duct_is_symmetric() {
    let n = 12;
    let grid = VoxelGrid::from_fn(n, 1e-3, |_, y, z| (3..9).contains(&y) && (2..8).contains(&z)).unwrap();
    let field = flow::lbm_solve(&grid, &FluidSpec::default()).unwrap();
    let u = |y: usize, z: usize| field.ux[grid.index(4, y, z)];
    let peak = u(5, 4);
    assert!(peak > 0.0);
    for y in 3..9 {
        for z in 2..8 {
            let mirrored_y = 3 + 8 - y;
            let mirrored_z = 2 + 7 - z;
            assert!((u(y, z) - u(mirrored_y, z)).abs() < 1e-9 * peak);
            assert!((u(y, z) - u(y, mirrored_z)).abs() < 1e-9 * peak);
            // the duct cross-section is square, so it is also symmetric
            // under swapping its two axes
            assert!((u(y, z) - u(z + 1, y - 1)).abs() < 1e-9 * peak);
        }
    }
    assert!(grid.labels().iter().zip(&field.ux).all(|(&l, &u)| l == PORE || u == 0.0));
}

fn porous(n: usize, seed: u64) -> VoxelGrid {
    SynthConfig { n, sigma: 2.0, radius: 6, threshold: 0.55, ..SynthConfig::default() }
        .sample(seed)
        .unwrap()
}

#[test]
fn slab_fluxes_agree() {
    let grid = (0..20).map(|s| porous(16, s)).find(|g| percolation::percolates(g, [Lateral::Wall; 2])).unwrap();
    let field = flow::lbm_solve(&grid, &FluidSpec::default()).unwrap();
    let n = grid.n();
    let flux: Vec<f64> = (0..n)
        .map(|x| (0..n * n).map(|yz| field.ux[x + n * yz]).sum())
        .collect();
    let mean = flux.iter().sum::<f64>() / n as f64;
    assert!(mean > 0.0);
    for f in &flux {
        assert!((f - mean).abs() / mean < 0.01, "{flux:?}");
    }
    assert!(grid.labels().iter().zip(&field.ux).all(|(&l, &u)| l == PORE || u == 0.0));
    assert!(field.ux.iter().chain(&field.p).all(|v| v.is_finite()));
}

#[test]
fn permeability_is_intrinsic() {
    let grid = (0..20).map(|s| porous(16, s)).find(|g| percolation::percolates(g, [Lateral::Wall; 2])).unwrap();
    let base = FluidSpec::default();
    let k0 = flow::grid_permeability(&grid, &base).unwrap();
    let k_mu = flow::grid_permeability(&grid, &FluidSpec { mu: 2.0 * base.mu, ..base.clone() }).unwrap();
    let k_dp = flow::grid_permeability(&grid, &FluidSpec { dp: 3.0 * base.dp, ..base.clone() }).unwrap();
    assert!(k0 > 0.0);
    assert!((k_mu - k0).abs() / k0 < 0.01);
    assert!((k_dp - k0).abs() / k0 < 0.01);
}

/// Union-find over lattice links with x-winding offsets: a cluster spans x
/// iff some link closes a cycle with nonzero net winding.
fn spans_oracle(grid: &VoxelGrid) -> bool {
    let n = grid.n() as i64;
    let total = (n * n * n) as usize;
    let mut parent: Vec<usize> = (0..total).collect();
    // winding of a node relative to its parent
    let mut offset = vec![0i64; total];
    fn find(parent: &mut [usize], offset: &mut [i64], v: usize) -> (usize, i64) {
        if parent[v] == v {
            return (v, 0);
        }
        let (root, off) = find(parent, offset, parent[v]);
        offset[v] += off;
        parent[v] = root;
        (root, offset[v])
    }
    let mut spans = false;
    let idx = |x: i64, y: i64, z: i64| (x + n * (y + n * z)) as usize;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                if !grid.is_pore(x as usize, y as usize, z as usize) {
                    continue;
                }
                for (cx, cy, cz) in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1)] {
                    let (yn, zn) = (y + cy, z + cz);
                    if !(0..n).contains(&yn) || !(0..n).contains(&zn) {
                        continue;
                    }
                    let xr = x + cx;
                    let wind = if xr >= n { 1 } else { 0 };
                    let xn = xr.rem_euclid(n);
                    if !grid.is_pore(xn as usize, yn as usize, zn as usize) {
                        continue;
                    }
                    let (a, b) = (idx(x, y, z), idx(xn, yn, zn));
                    let (ra, oa) = find(&mut parent, &mut offset, a);
                    let (rb, ob) = find(&mut parent, &mut offset, b);
                    // winding(b) should equal winding(a) + wind
                    if ra == rb {
                        if ob != oa + wind {
                            spans = true;
                        }
                    } else {
                        parent[rb] = ra;
                        offset[rb] = oa + wind - ob;
                    }
                }
            }
        }
    }
    spans
}

#[test]
fn zero_permeability_iff_no_spanning_path() {
    let fluid = FluidSpec { tolerance: 1e-5, ..FluidSpec::default() };
    let mut seen = [0usize; 2];
    for seed in 0..24 {
        let grid = SynthConfig { n: 8, sigma: 1.2, radius: 3, threshold: 0.45 + 0.01 * (seed % 5) as f64, ..SynthConfig::default() }
            .sample(seed)
            .unwrap();
        let expected = spans_oracle(&grid);
        assert_eq!(percolation::percolates(&grid, [Lateral::Wall; 2]), expected, "seed {seed}");
        let k = flow::grid_permeability(&grid, &fluid).unwrap();
        assert!(k >= 0.0);
        assert_eq!(k > 0.0, expected, "seed {seed}: k = {k}");
        seen[expected as usize] += 1;
    }
    assert!(seen[0] > 0 && seen[1] > 0, "fixture covers both outcomes: {seen:?}");
}

#[test]
fn opening_pores_never_lowers_permeability() {
    let grid = (0..20).map(|s| porous(12, s + 100)).find(|g| percolation::percolates(g, [Lateral::Wall; 2])).unwrap();
    let fluid = FluidSpec::default();
    let k0 = flow::grid_permeability(&grid, &fluid).unwrap();
    let mut wider = grid.clone();
    let n = grid.n();
    for v in 0..n * n * n {
        let (x, y, z) = (v % n, (v / n) % n, v / (n * n));
        // open every grain voxel touching the pore space in x
        if grid.labels()[v] == GRAIN && (grid.is_pore((x + 1) % n, y, z) || grid.is_pore((x + n - 1) % n, y, z)) {
            wider.set(x, y, z, PORE);
        }
    }
    let k1 = flow::grid_permeability(&wider, &fluid).unwrap();
    assert!(k1 >= k0, "{k1} < {k0}");
}
