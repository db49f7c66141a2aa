//! Plane-channel flow between two no-slip walls compared with the analytic
//! Poiseuille solution.
//!
//! ```text
//! cargo run --release --example channel_flow -- 32
//! ```

use poremamba::flow::{self, FluidSpec, Lateral};
use poremamba::voxel::{VoxelGrid, PORE};

fn main() -> poremamba::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let dx = 0.003;
    let grid = VoxelGrid::filled(n, dx, PORE)?;
    let fluid = FluidSpec {
        lateral: [Lateral::Wall, Lateral::Periodic],
        ..FluidSpec::default()
    };
    let start = std::time::Instant::now();
    let field = flow::lbm_solve(&grid, &fluid)?;
    let elapsed = start.elapsed().as_secs_f64();
    let u = flow::superficial_velocity(&field, &grid)?;
    let k = flow::permeability(u, fluid.mu, grid.side_length(), fluid.dp)?;
    let exact = flow::channel_oracle(grid.side_length());
    println!("n = {n}: {} steps in {elapsed:.2} s", field.iterations);
    println!("k = {k:.6e} mD, h^2/12 = {exact:.6e} mD, rel err {:.3e}", (k - exact).abs() / exact);

    let h = grid.side_length();
    let g = -fluid.dp / h;
    println!("{:>4} {:>14} {:>14}", "y", "u_lbm", "u_exact");
    for y in 0..n {
        let yc = (y as f64 + 0.5) * dx;
        let exact = g / (2.0 * fluid.mu) * yc * (h - yc);
        println!("{y:>4} {:>14.6e} {:>14.6e}", field.ux[grid.index(0, y, 0)], exact);
    }
    Ok(())
}
