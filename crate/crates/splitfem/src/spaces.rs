//! Lagrange finite element spaces on a triangulation.
//!
//! Two conforming spaces are supported: piecewise linears (order 1, one
//! DOF per vertex) and piecewise quadratics (order 2, vertex DOFs plus
//! one DOF per edge midpoint). Shared edge DOFs coincide between
//! adjacent triangles, so both spaces are H1-conforming.

use std::sync::Arc;

use nalgebra::{DVector, Vector2};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::vtk;

pub const MAX_CELL_DOFS: usize = 6;

/// DOF layout and basis evaluation for a P1 or P2 space.
#[derive(Debug)]
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub order: usize,
    pub dof_count: usize,
    dofs_per_cell: usize,
    cell_dofs: Vec<usize>,
    pub dof_is_boundary: Vec<bool>,
    pub boundary_dofs: Vec<usize>,
    /// Physical location of each DOF (vertices, then edge midpoints).
    pub dof_points: Vec<Vector2<f64>>,
}

impl FeSpace {
    pub fn new(mesh: &Arc<Mesh>, order: usize) -> Result<Arc<FeSpace>> {
        if order != 1 && order != 2 {
            return Err(Error::invalid(format!(
                "element order must be 1 or 2, got {order}"
            )));
        }
        let nv = mesh.num_vertices();
        let ne = mesh.num_edges();
        let (dof_count, dofs_per_cell) = match order {
            1 => (nv, 3),
            _ => (nv + ne, 6),
        };

        let mut cell_dofs = Vec::with_capacity(dofs_per_cell * mesh.num_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            cell_dofs.extend_from_slice(tri);
            if order == 2 {
                // Local basis 3+k lives on the edge opposite vertex k.
                for k in 0..3 {
                    cell_dofs.push(nv + mesh.triangle_edges[t][k]);
                }
            }
        }

        let mut dof_is_boundary = vec![false; dof_count];
        for (v, &on) in mesh.vertex_on_boundary.iter().enumerate() {
            dof_is_boundary[v] = on;
        }
        if order == 2 {
            for (e, &on) in mesh.edge_on_boundary.iter().enumerate() {
                dof_is_boundary[nv + e] = on;
            }
        }
        let boundary_dofs = dof_is_boundary
            .iter()
            .enumerate()
            .filter_map(|(d, &b)| b.then_some(d))
            .collect();

        let mut dof_points: Vec<Vector2<f64>> = mesh.vertices.clone();
        if order == 2 {
            for e in &mesh.edges {
                dof_points.push((mesh.vertices[e.v[0]] + mesh.vertices[e.v[1]]) * 0.5);
            }
        }

        Ok(Arc::new(FeSpace {
            mesh: Arc::clone(mesh),
            order,
            dof_count,
            dofs_per_cell,
            cell_dofs,
            dof_is_boundary,
            boundary_dofs,
            dof_points,
        }))
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.dofs_per_cell
    }

    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        &self.cell_dofs[t * self.dofs_per_cell..(t + 1) * self.dofs_per_cell]
    }

    /// Barycentric coordinates of the local nodes of a cell.
    pub fn local_node_bary(&self) -> Vec<[f64; 3]> {
        let mut nodes = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        if self.order == 2 {
            nodes.push([0.0, 0.5, 0.5]);
            nodes.push([0.5, 0.0, 0.5]);
            nodes.push([0.5, 0.5, 0.0]);
        }
        nodes
    }

    /// Basis values at a barycentric point; only the first
    /// `dofs_per_cell` entries are meaningful.
    #[inline]
    pub fn shape_values(&self, bary: [f64; 3]) -> [f64; MAX_CELL_DOFS] {
        let [l0, l1, l2] = bary;
        let mut n = [0.0; MAX_CELL_DOFS];
        if self.order == 1 {
            n[0] = l0;
            n[1] = l1;
            n[2] = l2;
        } else {
            n[0] = l0 * (2.0 * l0 - 1.0);
            n[1] = l1 * (2.0 * l1 - 1.0);
            n[2] = l2 * (2.0 * l2 - 1.0);
            n[3] = 4.0 * l1 * l2;
            n[4] = 4.0 * l2 * l0;
            n[5] = 4.0 * l0 * l1;
        }
        n
    }

    /// Physical basis gradients at a barycentric point of triangle `t`.
    #[inline]
    pub fn shape_gradients(&self, t: usize, bary: [f64; 3]) -> [Vector2<f64>; MAX_CELL_DOFS] {
        let g = self.mesh.barycentric_gradients(t);
        let [l0, l1, l2] = bary;
        let mut out = [Vector2::zeros(); MAX_CELL_DOFS];
        if self.order == 1 {
            out[0] = g[0];
            out[1] = g[1];
            out[2] = g[2];
        } else {
            out[0] = g[0] * (4.0 * l0 - 1.0);
            out[1] = g[1] * (4.0 * l1 - 1.0);
            out[2] = g[2] * (4.0 * l2 - 1.0);
            out[3] = (g[1] * l2 + g[2] * l1) * 4.0;
            out[4] = (g[2] * l0 + g[0] * l2) * 4.0;
            out[5] = (g[0] * l1 + g[1] * l0) * 4.0;
        }
        out
    }
}

/// A coefficient vector bound to its space; coefficients are nodal
/// values (Lagrange basis).
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: DVector<f64>,
}

impl FeFunction {
    pub fn zeros(space: &Arc<FeSpace>) -> FeFunction {
        FeFunction {
            space: Arc::clone(space),
            coeffs: DVector::zeros(space.dof_count),
        }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: DVector<f64>) -> Result<FeFunction> {
        if coeffs.len() != space.dof_count {
            return Err(Error::invalid(format!(
                "coefficient length {} does not match dof count {}",
                coeffs.len(),
                space.dof_count
            )));
        }
        Ok(FeFunction {
            space: Arc::clone(space),
            coeffs,
        })
    }

    /// Value and gradient at a barycentric point of triangle `t`.
    pub fn eval(&self, t: usize, bary: [f64; 3]) -> Result<(f64, Vector2<f64>)> {
        if t >= self.space.mesh.num_triangles() {
            return Err(Error::invalid(format!(
                "triangle index {t} out of range ({} triangles)",
                self.space.mesh.num_triangles()
            )));
        }
        Ok(self.eval_unchecked(t, bary))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, t: usize, bary: [f64; 3]) -> (f64, Vector2<f64>) {
        let n = self.space.shape_values(bary);
        let g = self.space.shape_gradients(t, bary);
        let mut value = 0.0;
        let mut grad = Vector2::zeros();
        for (k, &dof) in self.space.cell_dofs(t).iter().enumerate() {
            let c = self.coeffs[dof];
            value += c * n[k];
            grad += g[k] * c;
        }
        (value, grad)
    }

    /// Maximum absolute nodal value.
    pub fn sup_norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m: f64, c| m.max(c.abs()))
    }

    /// Legacy-VTK ASCII serialization. Quadratic fields are written on
    /// the once-refined mesh, whose vertex set coincides with the DOF
    /// nodes (vertices then edge midpoints).
    pub fn to_vtk(&self, name: &str) -> String {
        let values: Vec<f64> = self.coeffs.iter().copied().collect();
        if self.space.order == 2 {
            let refined = self.space.mesh.refine_uniform();
            vtk::mesh_to_vtk(&refined, name, Some((name, &values)))
        } else {
            vtk::mesh_to_vtk(&self.space.mesh, name, Some((name, &values)))
        }
    }

    pub fn write_vtk(&self, path: impl AsRef<std::path::Path>, name: &str) -> Result<()> {
        std::fs::write(path, self.to_vtk(name))?;
        Ok(())
    }
}

/// Lagrange interpolation: coefficients are the nodal values of `g`.
pub fn interpolate<F: Fn(Vector2<f64>) -> f64>(
    space: &Arc<FeSpace>,
    g: F,
) -> Result<FeFunction> {
    let mut coeffs = DVector::zeros(space.dof_count);
    for (d, &x) in space.dof_points.iter().enumerate() {
        let v = g(x);
        if !v.is_finite() {
            return Err(Error::non_finite(
                format!("interpolation at node {d} ({}, {})", x.x, x.y),
                None,
            ));
        }
        coeffs[d] = v;
    }
    FeFunction::from_coeffs(space, coeffs)
}
