//! Triangulations of the unit square with full edge adjacency.
//!
//! Meshes are immutable after construction and safe to share across
//! threads. Triangles are stored counterclockwise; every edge knows its
//! one (boundary) or two (interior) adjacent triangles. The mesh size
//! `h` is the maximum edge length.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// An undirected mesh edge with its adjacent triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Vertex indices with `v[0] < v[1]`.
    pub v: [usize; 2],
    /// First adjacent triangle (always present).
    pub left: usize,
    /// Second adjacent triangle; `None` on the boundary.
    pub right: Option<usize>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// An interior edge together with its adjacency and a unit normal
/// oriented from the left triangle into the right triangle.
#[derive(Debug, Clone, Copy)]
pub struct InteriorEdge {
    pub edge: usize,
    pub left: usize,
    pub right: usize,
    pub normal: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vector2<f64>>,
    /// Vertex index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `triangle_edges[t][k]` is the edge opposite local vertex `k`,
    /// i.e. the edge joining local vertices `k+1` and `k+2` (mod 3).
    pub triangle_edges: Vec<[usize; 3]>,
    pub vertex_on_boundary: Vec<bool>,
    pub edge_on_boundary: Vec<bool>,
    /// Triangles incident to each vertex, in ascending order.
    pub vertex_triangles: Vec<Vec<usize>>,
    pub areas: Vec<f64>,
    /// Mesh size: maximum edge length.
    pub h: f64,
    /// Recorded quality constant: min edge length / h.
    pub rho_min: f64,
}

impl Mesh {
    /// Build the full adjacency for a given vertex/triangle list.
    pub fn from_cells(vertices: Vec<Vector2<f64>>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let a = signed_area(&vertices, tri);
            if a <= 0.0 {
                return Err(Error::invalid(format!(
                    "triangle {t} has non-positive area {a:.3e}"
                )));
            }
            areas.push(a);
        }

        // Edges are created in first-encounter order over the fixed
        // triangle loop, so numbering is deterministic.
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                match edge_of.get(&key) {
                    Some(&e) => {
                        if edges[e].right.is_some() {
                            return Err(Error::invalid(format!(
                                "edge {:?} adjacent to more than two triangles",
                                key
                            )));
                        }
                        edges[e].right = Some(t);
                        triangle_edges[t][k] = e;
                    }
                    None => {
                        let e = edges.len();
                        edges.push(Edge {
                            v: [key.0, key.1],
                            left: t,
                            right: None,
                        });
                        edge_of.insert(key, e);
                        triangle_edges[t][k] = e;
                    }
                }
            }
        }

        let edge_on_boundary: Vec<bool> = edges.iter().map(|e| e.is_boundary()).collect();
        let mut vertex_on_boundary = vec![false; vertices.len()];
        for e in &edges {
            if e.is_boundary() {
                vertex_on_boundary[e.v[0]] = true;
                vertex_on_boundary[e.v[1]] = true;
            }
        }

        let mut vertex_triangles = vec![Vec::new(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }

        let mut h: f64 = 0.0;
        let mut min_edge = f64::INFINITY;
        for e in &edges {
            let len = (vertices[e.v[1]] - vertices[e.v[0]]).norm();
            h = h.max(len);
            min_edge = min_edge.min(len);
        }

        Ok(Mesh {
            rho_min: min_edge / h,
            vertices,
            triangles,
            edges,
            triangle_edges,
            vertex_on_boundary,
            edge_on_boundary,
            vertex_triangles,
            areas,
            h,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Gradients of the three barycentric coordinates on triangle `t`
    /// (constant over the triangle).
    pub fn barycentric_gradients(&self, t: usize) -> [Vector2<f64>; 3] {
        let [i, j, k] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        let inv2a = 1.0 / (2.0 * self.areas[t]);
        [
            Vector2::new(p1.y - p2.y, p2.x - p1.x) * inv2a,
            Vector2::new(p2.y - p0.y, p0.x - p2.x) * inv2a,
            Vector2::new(p0.y - p1.y, p1.x - p0.x) * inv2a,
        ]
    }

    /// Map barycentric coordinates on triangle `t` to physical coordinates.
    pub fn point(&self, t: usize, bary: [f64; 3]) -> Vector2<f64> {
        let [i, j, k] = self.triangles[t];
        self.vertices[i] * bary[0] + self.vertices[j] * bary[1] + self.vertices[k] * bary[2]
    }

    /// Locate the triangle containing `x` (linear scan; intended for
    /// probing and tests, not inner loops). Returns barycentric coords.
    pub fn locate(&self, x: Vector2<f64>) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        for t in 0..self.num_triangles() {
            let [i, j, k] = self.triangles[t];
            let (p0, p1, p2) = (self.vertices[i], self.vertices[j], self.vertices[k]);
            let inv2a = 1.0 / (2.0 * self.areas[t]);
            let l0 = cross(p1 - x, p2 - x) * inv2a;
            let l1 = cross(p2 - x, p0 - x) * inv2a;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -TOL && l1 >= -TOL && l2 >= -TOL {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }

    /// Graph distance (in edge hops) from each vertex to the boundary;
    /// boundary vertices are at distance zero.
    pub fn vertex_boundary_layers(&self) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_vertices()];
        let mut queue = std::collections::VecDeque::new();
        for (v, &on) in self.vertex_on_boundary.iter().enumerate() {
            if on {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        let mut adjacency = vec![Vec::new(); self.num_vertices()];
        for e in &self.edges {
            adjacency[e.v[0]].push(e.v[1]);
            adjacency[e.v[1]].push(e.v[0]);
        }
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Every interior edge exactly once, with the unit normal oriented
    /// from the left triangle into the right one.
    pub fn interior_edges(&self) -> Vec<InteriorEdge> {
        let mut out = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            let Some(right) = edge.right else { continue };
            let a = self.vertices[edge.v[0]];
            let b = self.vertices[edge.v[1]];
            let tangent = b - a;
            let mut normal = Vector2::new(tangent.y, -tangent.x).normalize();
            let to_right = centroid(self, right) - centroid(self, edge.left);
            if normal.dot(&to_right) < 0.0 {
                normal = -normal;
            }
            out.push(InteriorEdge {
                edge: e,
                left: edge.left,
                right,
                normal,
            });
        }
        out
    }

    /// Split every triangle into four congruent children via edge
    /// midpoints. Parent vertices keep their indices; the midpoint of
    /// edge `e` becomes vertex `V + e`.
    pub fn refine_uniform(&self) -> Mesh {
        let v = self.num_vertices();
        let mut vertices = self.vertices.clone();
        for e in &self.edges {
            vertices.push((self.vertices[e.v[0]] + self.vertices[e.v[1]]) * 0.5);
        }
        let mut triangles = Vec::with_capacity(4 * self.num_triangles());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [v0, v1, v2] = *tri;
            // Midpoint opposite local vertex k.
            let m0 = v + self.triangle_edges[t][0];
            let m1 = v + self.triangle_edges[t][1];
            let m2 = v + self.triangle_edges[t][2];
            triangles.push([v0, m2, m1]);
            triangles.push([m2, v1, m0]);
            triangles.push([m1, m0, v2]);
            triangles.push([m0, m1, m2]);
        }
        let mut fine =
            Mesh::from_cells(vertices, triangles).expect("refinement of a valid mesh is valid");
        // Bisection halves every edge exactly; record that rather than
        // the recomputed lengths, which can drift by an ulp on grids
        // with non-representable coordinates.
        fine.h = 0.5 * self.h;
        fine.rho_min = self.rho_min;
        fine
    }

    /// Structural validation used by tests: adjacency symmetry, edge
    /// counts and the Euler relation for a simply connected mesh.
    pub fn validate(&self) -> Result<()> {
        for (t, edges) in self.triangle_edges.iter().enumerate() {
            for &e in edges {
                let edge = self.edges[e];
                if edge.left != t && edge.right != Some(t) {
                    return Err(Error::invalid(format!(
                        "triangle {t} lists edge {e}, which does not list it back"
                    )));
                }
            }
        }
        let v = self.num_vertices() as i64;
        let e = self.num_edges() as i64;
        let f = self.num_triangles() as i64 + 1; // outer face
        if v - e + f != 2 {
            return Err(Error::invalid(format!(
                "Euler relation violated: V={v} E={e} F={f}"
            )));
        }
        Ok(())
    }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn signed_area(vertices: &[Vector2<f64>], tri: &[usize; 3]) -> f64 {
    let (p0, p1, p2) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    0.5 * cross(p1 - p0, p2 - p0)
}

fn centroid(mesh: &Mesh, t: usize) -> Vector2<f64> {
    let [i, j, k] = mesh.triangles[t];
    (mesh.vertices[i] + mesh.vertices[j] + mesh.vertices[k]) / 3.0
}

/// Uniform triangulation of the unit square with `n` subdivisions per
/// side. Each grid cell is split along the lower-left to upper-right
/// diagonal, giving `(n+1)^2` vertices and `2 n^2` triangles.
pub fn build_unit_square_mesh(n: usize) -> Result<Arc<Mesh>> {
    if n == 0 {
        return Err(Error::invalid("subdivision count must be at least 1"));
    }
    let step = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vector2::new(i as f64 * step, j as f64 * step));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b) = (idx(i, j), idx(i + 1, j));
            let (c, d) = (idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(Arc::new(Mesh::from_cells(vertices, triangles)?))
}
