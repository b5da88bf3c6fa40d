//! Build a unit-square triangulation, refine it uniformly, and export
//! both levels as legacy-VTK files.
//!
//! ```bash
//! cargo run -p splitfem --example mesh_refinement
//! ```

use splitfem::mesh::build_unit_square_mesh;
use splitfem::vtk::write_mesh_vtk;

fn main() -> splitfem::Result<()> {
    let out = std::path::Path::new("target/example-output");
    std::fs::create_dir_all(out)?;

    let coarse = build_unit_square_mesh(4)?;
    println!(
        "coarse: {} vertices, {} triangles, {} edges ({} interior), h = {:.5}, quality rho_min = {:.4}",
        coarse.num_vertices(),
        coarse.num_triangles(),
        coarse.num_edges(),
        coarse.interior_edges().len(),
        coarse.h,
        coarse.rho_min,
    );

    let fine = coarse.refine_uniform();
    println!(
        "refined: {} vertices, {} triangles, h = {:.5} (exactly half), total area {:.12}",
        fine.num_vertices(),
        fine.num_triangles(),
        fine.h,
        fine.total_area(),
    );
    fine.validate()?;

    write_mesh_vtk(out.join("mesh_coarse.vtk"), &coarse, "coarse", None)?;
    write_mesh_vtk(out.join("mesh_fine.vtk"), &fine, "fine", None)?;
    println!("wrote {}/mesh_coarse.vtk and mesh_fine.vtk", out.display());
    Ok(())
}
