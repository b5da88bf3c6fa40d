//! Legacy-VTK ASCII writer for meshes and nodal scalar fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::mesh::Mesh;

/// Serialize a mesh, optionally with one scalar value per vertex, into
/// legacy-VTK ASCII (unstructured grid, cell type 5 = triangle).
pub fn mesh_to_vtk(mesh: &Mesh, title: &str, point_data: Option<(&str, &[f64])>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} 0", v.x, v.y);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for tri in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    if let Some((name, values)) = point_data {
        assert_eq!(values.len(), mesh.num_vertices());
        let _ = writeln!(s, "POINT_DATA {}", values.len());
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(s, "{v}");
        }
    }
    s
}

pub fn write_mesh_vtk(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    title: &str,
    point_data: Option<(&str, &[f64])>,
) -> Result<()> {
    std::fs::write(path, mesh_to_vtk(mesh, title, point_data))?;
    Ok(())
}
