//! Hamilton-Jacobi front erosion over an obstacle. The running cost
//! pulls the level function down at a constant rate until it lands on
//! the paraboloid obstacle; the Lagrange multiplier switches on over
//! the contact set through the complementarity condition
//! min(y - psi, lambda) = 0.
//!
//! ```bash
//! cargo run -p splitfem --example obstacle
//! ```

use nalgebra::Vector2;
use splitfem::mesh::build_unit_square_mesh;
use splitfem::problems::{hj_obstacle, HjObstacleParams};
use splitfem::scheme::{run, SchemeParams};

fn main() -> splitfem::Result<()> {
    let height = 0.25;
    let prob = hj_obstacle(HjObstacleParams {
        obstacle_height: height,
        ..Default::default()
    });
    let mesh = build_unit_square_mesh(16)?;
    let mut params = SchemeParams::for_problem(&prob);
    params.final_time = 1.0;

    let traj = run(&prob, &mesh, &params).map_err(|f| f.error)?;
    let state = traj.final_state();

    let psi = |x: Vector2<f64>| {
        let r2 = (x - Vector2::new(0.5, 0.5)).norm_squared();
        height * (1.0 - 8.0 * r2)
    };
    // Gap and complementarity over the multiplier nodes.
    let p1 = &state.p[0].space;
    let mut min_gap = f64::INFINITY;
    let mut active = 0;
    let mut worst_comp: f64 = 0.0;
    for (v, x) in p1.dof_points.iter().enumerate() {
        let gap = state.y.coeffs[v] - psi(*x);
        let lambda = state.p[0].coeffs[v];
        min_gap = min_gap.min(gap);
        if gap < 1e-6 {
            active += 1;
        }
        worst_comp = worst_comp.max(gap.min(lambda).abs());
    }
    println!(
        "{} steps to t = {:.2}; newton iterations per step max {}",
        traj.records.len() - 1,
        state.t,
        traj.records.iter().map(|r| r.newton_iters).max().unwrap()
    );
    println!(
        "field range [{:.4}, {:.4}]; min gap to obstacle {:.2e} (contact at {} of {} nodes)",
        state.y.coeffs.min(),
        state.y.coeffs.max(),
        min_gap,
        active,
        p1.dof_count
    );
    println!(
        "multiplier range [{:.4}, {:.4}]; nodal complementarity residual {:.2e}",
        state.p[0].coeffs.min(),
        state.p[0].coeffs.max(),
        worst_comp
    );

    let out = std::path::Path::new("target/example-output");
    std::fs::create_dir_all(out)?;
    state.y.write_vtk(out.join("obstacle_state.vtk"), "y")?;
    state.p[0].write_vtk(out.join("obstacle_multiplier.vtk"), "lambda")?;
    println!(
        "wrote {}/obstacle_state.vtk and obstacle_multiplier.vtk",
        out.display()
    );
    Ok(())
}
