//! Assembly of bilinear forms, load vectors, projections and Hessian
//! recovery.
//!
//! All volume terms use the degree-4 six-point rule (exact for products
//! of quadratic basis functions); jump terms use two-point Gauss on
//! each edge. Loops run in fixed triangle/edge order, so single-worker
//! assembly is bitwise reproducible.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linsolve;
use crate::mesh::Mesh;
use crate::quadrature::{EdgeQuadrature, QuadratureRule};
use crate::sparse::{SparseMatrix, TripletBuilder};
use crate::spaces::{FeFunction, FeSpace};

/// Evaluated fields at a quadrature point, handed to load integrands.
#[derive(Debug, Clone)]
pub struct PointEval<'a> {
    pub x: Vector2<f64>,
    pub value: f64,
    pub gradient: Vector2<f64>,
    pub hessian: Matrix2<f64>,
    pub multipliers: &'a [f64],
}

/// Discrete fields evaluated alongside the quadrature loop.
#[derive(Default)]
pub struct PointFields<'a> {
    pub state: Option<&'a FeFunction>,
    pub hessian: Option<&'a HessianField>,
    pub multipliers: &'a [FeFunction],
}

impl<'a> PointFields<'a> {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Recovered second derivatives of a quadratic field: the exact
/// elementwise Hessian per triangle plus area-weighted vertex averages
/// (evaluation interpolates the vertex field linearly).
#[derive(Debug, Clone)]
pub struct HessianField {
    pub mesh: Arc<Mesh>,
    pub per_triangle: Vec<Matrix2<f64>>,
    pub per_vertex: Vec<Matrix2<f64>>,
}

impl HessianField {
    pub fn zero(mesh: &Arc<Mesh>) -> HessianField {
        HessianField {
            mesh: Arc::clone(mesh),
            per_triangle: vec![Matrix2::zeros(); mesh.num_triangles()],
            per_vertex: vec![Matrix2::zeros(); mesh.num_vertices()],
        }
    }

    /// Smoothed value at a barycentric point of triangle `t`.
    #[inline]
    pub fn eval(&self, t: usize, bary: [f64; 3]) -> Matrix2<f64> {
        let [i, j, k] = self.mesh.triangles[t];
        self.per_vertex[i] * bary[0] + self.per_vertex[j] * bary[1] + self.per_vertex[k] * bary[2]
    }

    /// Raw elementwise value on triangle `t`.
    pub fn raw(&self, t: usize) -> Matrix2<f64> {
        self.per_triangle[t]
    }

    /// Linearly taper the vertex field to zero over the given number of
    /// element layers next to the boundary. One-sided recovery at the
    /// wall otherwise feeds wall-normal strip modes back into the
    /// explicit step at full strength.
    pub fn tapered_near_boundary(mut self, layers: usize) -> HessianField {
        if layers == 0 {
            return self;
        }
        let dist = self.mesh.vertex_boundary_layers();
        for (v, d) in dist.iter().enumerate() {
            let w = (*d as f64 / layers as f64).min(1.0);
            self.per_vertex[v] *= w;
        }
        self
    }

    /// Extra patch-averaging passes over the vertex field, widening the
    /// effective smoothing radius by roughly one element layer per
    /// pass. Fields that are already patch-wise constant (recovered
    /// quadratics) are fixed points. The raw elementwise data is kept.
    pub fn smoothed(mut self, passes: usize) -> HessianField {
        let mesh = Arc::clone(&self.mesh);
        for _ in 0..passes {
            let cell_avg: Vec<Matrix2<f64>> = mesh
                .triangles
                .iter()
                .map(|tri| {
                    (self.per_vertex[tri[0]] + self.per_vertex[tri[1]] + self.per_vertex[tri[2]])
                        / 3.0
                })
                .collect();
            for (v, patch) in mesh.vertex_triangles.iter().enumerate() {
                let total: f64 = patch.iter().map(|&t| mesh.areas[t]).sum();
                let mut avg = Matrix2::zeros();
                for &t in patch {
                    avg += cell_avg[t] * mesh.areas[t];
                }
                self.per_vertex[v] = avg / total;
            }
        }
        self
    }
}

fn quadrature_points_physical<'a>(
    mesh: &'a Mesh,
    t: usize,
    rule: &QuadratureRule,
) -> impl Iterator<Item = ([f64; 3], Vector2<f64>, f64)> + 'a {
    let scale = 2.0 * mesh.areas[t];
    let points = rule.points.clone();
    let weights = rule.weights.clone();
    points
        .into_iter()
        .zip(weights)
        .map(move |(bary, w)| (bary, mesh.point(t, bary), w * scale))
}

/// Local mass matrix of triangle `t`.
pub fn element_mass(space: &FeSpace, t: usize) -> DMatrix<f64> {
    let nd = space.dofs_per_cell();
    let rule = QuadratureRule::volume_default();
    let mut m = DMatrix::zeros(nd, nd);
    for (bary, _x, w) in quadrature_points_physical(&space.mesh, t, &rule) {
        let n = space.shape_values(bary);
        for a in 0..nd {
            for b in 0..nd {
                m[(a, b)] += w * n[a] * n[b];
            }
        }
    }
    m
}

/// Local stiffness matrix of triangle `t`.
pub fn element_stiffness(space: &FeSpace, t: usize) -> DMatrix<f64> {
    let nd = space.dofs_per_cell();
    let rule = QuadratureRule::volume_default();
    let mut k = DMatrix::zeros(nd, nd);
    for (bary, _x, w) in quadrature_points_physical(&space.mesh, t, &rule) {
        let g = space.shape_gradients(t, bary);
        for a in 0..nd {
            for b in 0..nd {
                k[(a, b)] += w * g[a].dot(&g[b]);
            }
        }
    }
    k
}

fn assemble_from_elements<F>(space: &FeSpace, element: F) -> SparseMatrix
where
    F: Fn(&FeSpace, usize) -> DMatrix<f64>,
{
    let nd = space.dofs_per_cell();
    let mut builder = TripletBuilder::with_capacity(
        space.dof_count,
        space.dof_count,
        nd * nd * space.mesh.num_triangles(),
    );
    for t in 0..space.mesh.num_triangles() {
        let local = element(space, t);
        let dofs = space.cell_dofs(t);
        for a in 0..nd {
            for b in 0..nd {
                builder.push(dofs[a], dofs[b], local[(a, b)]);
            }
        }
    }
    builder.build()
}

/// Global mass matrix (symmetric positive definite).
pub fn assemble_mass(space: &FeSpace) -> SparseMatrix {
    assemble_from_elements(space, element_mass)
}

/// Global stiffness matrix (symmetric positive semidefinite, kernel =
/// constants). Assembled without any scaling factor.
pub fn assemble_stiffness(space: &FeSpace) -> SparseMatrix {
    assemble_from_elements(space, element_stiffness)
}

/// Gradient-jump penalty: `sum_e h^2 int_e [grad u]·[grad v] ds` over
/// interior edges, with the global mesh size `h`.
pub fn assemble_edge_jump(space: &FeSpace) -> SparseMatrix {
    let mesh = &space.mesh;
    let nd = space.dofs_per_cell();
    let rule = EdgeQuadrature::gauss2();
    let h2 = mesh.h * mesh.h;
    let mut builder = TripletBuilder::new(space.dof_count, space.dof_count);

    for ie in mesh.interior_edges() {
        let edge = mesh.edges[ie.edge];
        let a = mesh.vertices[edge.v[0]];
        let b = mesh.vertices[edge.v[1]];
        let length = (b - a).norm();

        // Union of the DOFs of both triangles; per-DOF local index on
        // each side when present.
        let mut union: Vec<(usize, Option<usize>, Option<usize>)> = Vec::with_capacity(2 * nd);
        for (k, &d) in space.cell_dofs(ie.left).iter().enumerate() {
            union.push((d, Some(k), None));
        }
        for (k, &d) in space.cell_dofs(ie.right).iter().enumerate() {
            match union.iter_mut().find(|(u, _, _)| *u == d) {
                Some(entry) => entry.2 = Some(k),
                None => union.push((d, None, Some(k))),
            }
        }

        let bary_on = |t: usize, s: f64| -> [f64; 3] {
            let tri = mesh.triangles[t];
            let la = tri.iter().position(|&v| v == edge.v[0]).unwrap();
            let lb = tri.iter().position(|&v| v == edge.v[1]).unwrap();
            let mut bary = [0.0; 3];
            bary[la] = 1.0 - s;
            bary[lb] = s;
            bary
        };

        let mut jumps = vec![Vector2::zeros(); union.len()];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let gl = space.shape_gradients(ie.left, bary_on(ie.left, s));
            let gr = space.shape_gradients(ie.right, bary_on(ie.right, s));
            for (u, &(_, ll, lr)) in union.iter().enumerate() {
                let from_left = ll.map_or(Vector2::zeros(), |k| gl[k]);
                let from_right = lr.map_or(Vector2::zeros(), |k| gr[k]);
                jumps[u] = from_left - from_right;
            }
            let scale = h2 * w * length;
            for (u, &(du, _, _)) in union.iter().enumerate() {
                for (v, &(dv, _, _)) in union.iter().enumerate() {
                    builder.push(du, dv, scale * jumps[u].dot(&jumps[v]));
                }
            }
        }
    }
    builder.build()
}

fn eval_point<'a>(
    fields: &PointFields<'a>,
    t: usize,
    bary: [f64; 3],
    x: Vector2<f64>,
    multiplier_buf: &'a mut Vec<f64>,
) -> PointEval<'a> {
    let (value, gradient) = match fields.state {
        Some(f) => f.eval_unchecked(t, bary),
        None => (0.0, Vector2::zeros()),
    };
    let hessian = fields
        .hessian
        .map_or(Matrix2::zeros(), |h| h.eval(t, bary));
    multiplier_buf.clear();
    for p in fields.multipliers {
        multiplier_buf.push(p.eval_unchecked(t, bary).0);
    }
    PointEval {
        x,
        value,
        gradient,
        hessian,
        multipliers: multiplier_buf,
    }
}

/// Load vector: entry `i` is the quadrature sum of
/// `integrand(point) * phi_i(point)`.
pub fn assemble_load<F>(
    space: &FeSpace,
    fields: &PointFields,
    integrand: F,
) -> Result<DVector<f64>>
where
    F: Fn(&PointEval) -> f64,
{
    let rule = QuadratureRule::volume_default();
    let nd = space.dofs_per_cell();
    let mut out = DVector::zeros(space.dof_count);
    let mut buf = Vec::new();
    for t in 0..space.mesh.num_triangles() {
        let dofs = space.cell_dofs(t);
        for (bary, x, w) in quadrature_points_physical(&space.mesh, t, &rule) {
            let pe = eval_point(fields, t, bary, x, &mut buf);
            let f = integrand(&pe);
            if !f.is_finite() {
                return Err(Error::non_finite("load integrand", Some(t)));
            }
            let n = space.shape_values(bary);
            for a in 0..nd {
                out[dofs[a]] += w * f * n[a];
            }
        }
    }
    Ok(out)
}

/// Weighted bilinear form coupling a trial space to a test space on the
/// same mesh: entry `(i, j)` accumulates
/// `w(x)·phi_j(x)·psi_i(x) + d(x)·grad(phi_j)(x)·psi_i(x)`
/// where `(w, d) = coeff(point)`.
pub fn assemble_weighted_bilinear<F>(
    test: &FeSpace,
    trial: &FeSpace,
    fields: &PointFields,
    coeff: F,
) -> Result<SparseMatrix>
where
    F: Fn(&PointEval) -> (f64, Vector2<f64>),
{
    assert!(
        Arc::ptr_eq(&test.mesh, &trial.mesh),
        "test and trial spaces must share a mesh"
    );
    let rule = QuadratureRule::volume_default();
    let mut builder = TripletBuilder::new(test.dof_count, trial.dof_count);
    let mut buf = Vec::new();
    for t in 0..test.mesh.num_triangles() {
        let test_dofs = test.cell_dofs(t);
        let trial_dofs = trial.cell_dofs(t);
        for (bary, x, w) in quadrature_points_physical(&test.mesh, t, &rule) {
            let pe = eval_point(fields, t, bary, x, &mut buf);
            let (cv, cg) = coeff(&pe);
            if !cv.is_finite() || !cg.x.is_finite() || !cg.y.is_finite() {
                return Err(Error::non_finite("bilinear coefficient", Some(t)));
            }
            let nt = test.shape_values(bary);
            let nu = trial.shape_values(bary);
            let gu = trial.shape_gradients(t, bary);
            for (a, &da) in test_dofs.iter().enumerate() {
                for (b, &db) in trial_dofs.iter().enumerate() {
                    builder.push(da, db, w * nt[a] * (cv * nu[b] + cg.dot(&gu[b])));
                }
            }
        }
    }
    Ok(builder.build())
}

/// L2 projection of a pointwise function onto the space.
pub fn l2_project<F>(space: &Arc<FeSpace>, f: F) -> Result<FeFunction>
where
    F: Fn(Vector2<f64>) -> f64,
{
    let load = assemble_load(space, &PointFields::none(), |pe| f(pe.x))?;
    mass_solve(space, load)
}

/// L2 projection of a finite element function (possibly from another
/// space on the same mesh) onto the space.
pub fn l2_project_fe(space: &Arc<FeSpace>, g: &FeFunction) -> Result<FeFunction> {
    assert!(Arc::ptr_eq(&space.mesh, &g.space.mesh));
    let fields = PointFields {
        state: Some(g),
        ..Default::default()
    };
    let load = assemble_load(space, &fields, |pe| pe.value)?;
    mass_solve(space, load)
}

fn mass_solve(space: &Arc<FeSpace>, load: DVector<f64>) -> Result<FeFunction> {
    let mass = assemble_mass(space);
    let coeffs = linsolve::solve_spd(&mass, &load, 1e-12)?;
    FeFunction::from_coeffs(space, coeffs)
}

/// Hessian recovery from a quadratic field: exact elementwise second
/// derivatives, smoothed by area-weighted averaging over vertex patches.
pub fn recover_hessian(y: &FeFunction) -> Result<HessianField> {
    let space = &y.space;
    if space.order != 2 {
        return Err(Error::invalid(
            "hessian recovery requires a quadratic space",
        ));
    }
    let mesh = &space.mesh;
    let mut per_triangle = Vec::with_capacity(mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let g = mesh.barycentric_gradients(t);
        let dofs = space.cell_dofs(t);
        // Basis Hessians are constant: 4 g_k g_k^T on vertices and
        // 4 (g_i g_j^T + g_j g_i^T) on the opposite edges.
        let mut h = Matrix2::zeros();
        for k in 0..3 {
            h += (g[k] * g[k].transpose()) * (4.0 * y.coeffs[dofs[k]]);
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let sym = g[i] * g[j].transpose() + g[j] * g[i].transpose();
            h += sym * (4.0 * y.coeffs[dofs[3 + k]]);
        }
        per_triangle.push(h);
    }

    let mut per_vertex = vec![Matrix2::zeros(); mesh.num_vertices()];
    for (v, patch) in mesh.vertex_triangles.iter().enumerate() {
        let total: f64 = patch.iter().map(|&t| mesh.areas[t]).sum();
        let mut avg = Matrix2::zeros();
        for &t in patch {
            avg += per_triangle[t] * mesh.areas[t];
        }
        per_vertex[v] = avg / total;
    }

    Ok(HessianField {
        mesh: Arc::clone(mesh),
        per_triangle,
        per_vertex,
    })
}

/// Componentwise L2 projection of an analytic Hessian onto the linear
/// space (used when a smooth test function supplies its derivatives).
pub fn project_hessian<F>(p1: &Arc<FeSpace>, f: F) -> Result<HessianField>
where
    F: Fn(Vector2<f64>) -> Matrix2<f64>,
{
    if p1.order != 1 {
        return Err(Error::invalid("hessian projection targets the linear space"));
    }
    let xx = l2_project(p1, |x| f(x)[(0, 0)])?;
    let xy = l2_project(p1, |x| f(x)[(0, 1)])?;
    let yy = l2_project(p1, |x| f(x)[(1, 1)])?;
    let mesh = &p1.mesh;
    let per_vertex: Vec<Matrix2<f64>> = (0..mesh.num_vertices())
        .map(|v| {
            Matrix2::new(
                xx.coeffs[v],
                xy.coeffs[v],
                xy.coeffs[v],
                yy.coeffs[v],
            )
        })
        .collect();
    let centroid = [1.0 / 3.0; 3];
    let field = HessianField {
        mesh: Arc::clone(mesh),
        per_triangle: vec![Matrix2::zeros(); mesh.num_triangles()],
        per_vertex,
    };
    let per_triangle = (0..mesh.num_triangles())
        .map(|t| field.eval(t, centroid))
        .collect();
    Ok(HessianField {
        per_triangle,
        ..field
    })
}

/// Strong Dirichlet rows with symmetric column elimination. The
/// eliminated matrix can be factorized once; per-solve boundary values
/// enter through [`DirichletElimination::apply_rhs`].
pub struct DirichletElimination {
    pub eliminated: SparseMatrix,
    boundary_cols: SparseMatrix,
    pub dofs: Vec<usize>,
    is_boundary: Vec<bool>,
}

pub fn eliminate_dirichlet(a: &SparseMatrix, dofs: &[usize]) -> DirichletElimination {
    let n = a.nrows();
    let mut is_boundary = vec![false; n];
    for &d in dofs {
        is_boundary[d] = true;
    }
    let mut kept = TripletBuilder::new(n, n);
    let mut cols = TripletBuilder::new(n, n);
    for (i, j, v) in a.iter_entries() {
        match (is_boundary[i], is_boundary[j]) {
            (true, _) => {}
            (false, true) => cols.push(i, j, v),
            (false, false) => kept.push(i, j, v),
        }
    }
    for &d in dofs {
        kept.push(d, d, 1.0);
    }
    DirichletElimination {
        eliminated: kept.build(),
        boundary_cols: cols.build(),
        dofs: dofs.to_vec(),
        is_boundary,
    }
}

impl DirichletElimination {
    /// Fold boundary values into the right-hand side: subtract the
    /// saved boundary columns and pin constrained entries to `g`.
    pub fn apply_rhs(&self, b: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let mut out = b - self.boundary_cols.mul_vec(g);
        for (i, &bd) in self.is_boundary.iter().enumerate() {
            if bd {
                out[i] = g[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;
    use crate::spaces::interpolate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn p1(n: usize) -> Arc<FeSpace> {
        FeSpace::new(&build_unit_square_mesh(n).unwrap(), 1).unwrap()
    }

    fn p2(n: usize) -> Arc<FeSpace> {
        FeSpace::new(&build_unit_square_mesh(n).unwrap(), 2).unwrap()
    }

    #[test]
    fn p1_element_mass_matches_symbolic_formula() {
        // int lambda_i lambda_j = A (1 + delta_ij) / 12.
        let space = p1(1);
        for t in 0..2 {
            let a = space.mesh.areas[t];
            let m = element_mass(&space, t);
            for i in 0..3 {
                for j in 0..3 {
                    let exact = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                    assert!((m[(i, j)] - exact).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn mass_total_equals_domain_area() {
        for order in [1, 2] {
            let mesh = build_unit_square_mesh(3).unwrap();
            let space = FeSpace::new(&mesh, order).unwrap();
            let m = assemble_mass(&space);
            let total: f64 = m.iter_entries().map(|(_, _, v)| v).sum();
            assert!((total - 1.0).abs() < 1e-12, "order {order}: {total}");
        }
    }

    #[test]
    fn mass_is_positive_definite() {
        let space = p2(2);
        let m = assemble_mass(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = DVector::from_fn(space.dof_count, |_, _| rng.gen_range(-1.0..1.0));
            if x.norm() == 0.0 {
                continue;
            }
            assert!(x.dot(&m.mul_vec(&x)) > 0.0);
        }
    }

    #[test]
    fn p1_mass_row_sums_are_patch_area_thirds() {
        let space = p1(2);
        let m = assemble_mass(&space);
        for v in 0..space.dof_count {
            let row_sum: f64 = m.row(v).map(|(_, val)| val).sum();
            let patch: f64 = space.mesh.vertex_triangles[v]
                .iter()
                .map(|&t| space.mesh.areas[t])
                .sum();
            assert!((row_sum - patch / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        for order in [1, 2] {
            let mesh = build_unit_square_mesh(3).unwrap();
            let space = FeSpace::new(&mesh, order).unwrap();
            let k = assemble_stiffness(&space);
            let ones = DVector::from_element(space.dof_count, 1.0);
            assert!(k.mul_vec(&ones).amax() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_energy_of_linear_function() {
        let space = p1(3);
        let k = assemble_stiffness(&space);
        let u = interpolate(&space, |x| x.x).unwrap();
        let e = u.coeffs.dot(&k.mul_vec(&u.coeffs));
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_energy_of_sine_product() {
        let space = p2(32);
        let k = assemble_stiffness(&space);
        let u = interpolate(&space, |x| (PI * x.x).sin() * (PI * x.y).sin()).unwrap();
        let e = u.coeffs.dot(&k.mul_vec(&u.coeffs));
        let exact = PI * PI / 2.0;
        assert!((e - exact).abs() < 0.02 * exact, "energy {e} vs {exact}");
    }

    #[test]
    fn jump_vanishes_on_gradient_continuous_fields() {
        let space = p2(2);
        let j = assemble_edge_jump(&space);
        // Globally affine.
        let u = interpolate(&space, |x| 1.5 + 2.0 * x.x - 0.5 * x.y).unwrap();
        assert!(u.coeffs.dot(&j.mul_vec(&u.coeffs)).abs() < 1e-13);
        // Exactly representable quadratic: gradient is globally continuous.
        let q = interpolate(&space, |x| x.x * x.x).unwrap();
        assert!(q.coeffs.dot(&j.mul_vec(&q.coeffs)).abs() < 1e-13);

        let space1 = p1(2);
        let j1 = assemble_edge_jump(&space1);
        let a1 = interpolate(&space1, |x| 1.0 - x.x + 3.0 * x.y).unwrap();
        assert!(a1.coeffs.dot(&j1.mul_vec(&a1.coeffs)).abs() < 1e-13);
    }

    /// Independent oracle: P1 gradients are constant per triangle, so
    /// each interior edge contributes h^2 |e| |jump|^2 exactly.
    #[test]
    fn p1_jump_energy_matches_per_edge_line_integrals() {
        let space = p1(2);
        let mesh = &space.mesh;
        let u = interpolate(&space, |x| x.x * x.x).unwrap();
        let j = assemble_edge_jump(&space);
        let energy = u.coeffs.dot(&j.mul_vec(&u.coeffs));
        assert!(energy > 0.0);

        // Hand quadrature: constant-gradient jump per edge.
        let grad_on = |t: usize| -> Vector2<f64> {
            let g = mesh.barycentric_gradients(t);
            let tri = mesh.triangles[t];
            g[0] * u.coeffs[tri[0]] + g[1] * u.coeffs[tri[1]] + g[2] * u.coeffs[tri[2]]
        };
        let mut expected = 0.0;
        for ie in mesh.interior_edges() {
            let e = mesh.edges[ie.edge];
            let len = (mesh.vertices[e.v[1]] - mesh.vertices[e.v[0]]).norm();
            let jump = grad_on(ie.left) - grad_on(ie.right);
            expected += mesh.h * mesh.h * len * jump.norm_squared();
        }
        assert!((energy - expected).abs() < 1e-13);
    }

    #[test]
    fn load_of_one_sums_to_area() {
        for order in [1, 2] {
            let mesh = build_unit_square_mesh(2).unwrap();
            let space = FeSpace::new(&mesh, order).unwrap();
            let b = assemble_load(&space, &PointFields::none(), |_| 1.0).unwrap();
            assert!((b.sum() - 1.0).abs() < 1e-12);
            let z = assemble_load(&space, &PointFields::none(), |_| 0.0).unwrap();
            assert_eq!(z.amax(), 0.0);
        }
    }

    #[test]
    fn linear_load_matches_symbolic_per_triangle_integrals() {
        // int_T x1 lambda_i = A/12 (x_i + sum_v x_v), assembled by hand.
        let space = p1(2);
        let mesh = &space.mesh;
        let b = assemble_load(&space, &PointFields::none(), |pe| pe.x.x).unwrap();
        let mut expected = DVector::zeros(space.dof_count);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let a = mesh.areas[t];
            let xs: f64 = tri.iter().map(|&v| mesh.vertices[v].x).sum();
            for &v in tri {
                expected[v] += a / 12.0 * (mesh.vertices[v].x + xs);
            }
        }
        assert!((b - expected).amax() < 1e-14);
    }

    #[test]
    fn load_reports_non_finite_integrand_with_triangle() {
        let space = p1(2);
        let res = assemble_load(&space, &PointFields::none(), |pe| {
            if pe.x.x > 0.7 {
                f64::NAN
            } else {
                1.0
            }
        });
        match res {
            Err(Error::NonFinite { triangle, .. }) => assert!(triangle.is_some()),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn assembled_matrices_are_symmetric() {
        let space = p2(3);
        for m in [
            assemble_mass(&space),
            assemble_stiffness(&space),
            assemble_edge_jump(&space),
        ] {
            assert!(m.max_asymmetry() <= 1e-12 * m.max_abs());
        }
    }

    #[test]
    fn projection_of_affine_equals_interpolant() {
        let space = p1(3);
        let proj = l2_project(&space, |x| x.x).unwrap();
        let interp = interpolate(&space, |x| x.x).unwrap();
        assert!((proj.coeffs - interp.coeffs).amax() < 1e-11);
    }

    #[test]
    fn projection_of_quadratic_onto_p2_is_exact() {
        let space = p2(2);
        let proj = l2_project(&space, |x| x.x * x.x).unwrap();
        let interp = interpolate(&space, |x| x.x * x.x).unwrap();
        assert!((proj.coeffs - interp.coeffs).amax() < 1e-11);
    }

    #[test]
    fn discontinuous_projection_matches_dense_solve() {
        let space = p1(4);
        let sign = |x: Vector2<f64>| -> f64 {
            if x.x < 0.5 {
                -1.0
            } else if x.x > 0.5 {
                1.0
            } else {
                0.0
            }
        };
        let proj = l2_project(&space, sign).unwrap();
        let mass = assemble_mass(&space);
        let load = assemble_load(&space, &PointFields::none(), |pe| sign(pe.x)).unwrap();
        let dense = mass.to_dense().lu().solve(&load).unwrap();
        assert!((proj.coeffs - dense).amax() < 1e-10);
    }

    #[test]
    fn projection_is_idempotent() {
        let space = p1(3);
        let once = l2_project(&space, |x| (2.0 * PI * x.x).cos() * x.y).unwrap();
        let twice = l2_project_fe(&space, &once).unwrap();
        assert!((once.coeffs - twice.coeffs).amax() < 1e-11);
    }

    #[test]
    fn projection_residual_is_orthogonal_to_the_space() {
        let space = p1(3);
        let g = |x: Vector2<f64>| (PI * x.x).sin() * (2.0 * PI * x.y).cos();
        let proj = l2_project(&space, g).unwrap();
        let load = assemble_load(&space, &PointFields::none(), |pe| g(pe.x)).unwrap();
        let mass = assemble_mass(&space);
        // <g - proj, q> = load·q - (M proj)·q for q in the space.
        let defect = &load - mass.mul_vec(&proj.coeffs);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = DVector::from_fn(space.dof_count, |_, _| rng.gen_range(-1.0..1.0));
            assert!(defect.dot(&q).abs() < 1e-10);
        }
    }

    #[test]
    fn recovered_hessian_of_quadratics_is_exact() {
        let space = p2(2);
        let f = interpolate(&space, |x| x.x * x.x).unwrap();
        let h = recover_hessian(&f).unwrap();
        for t in 0..space.mesh.num_triangles() {
            let m = h.raw(t);
            assert!((m - Matrix2::new(2.0, 0.0, 0.0, 0.0)).abs().max() < 1e-12);
        }
        for v in 0..space.mesh.num_vertices() {
            assert!((h.per_vertex[v] - Matrix2::new(2.0, 0.0, 0.0, 0.0)).abs().max() < 1e-12);
        }

        let g = interpolate(&space, |x| x.x * x.y).unwrap();
        let hg = recover_hessian(&g).unwrap();
        for t in 0..space.mesh.num_triangles() {
            assert!((hg.raw(t) - Matrix2::new(0.0, 1.0, 1.0, 0.0)).abs().max() < 1e-12);
        }

        let aff = interpolate(&space, |x| 1.0 + 2.0 * x.x - x.y).unwrap();
        let ha = recover_hessian(&aff).unwrap();
        for t in 0..space.mesh.num_triangles() {
            assert!(ha.raw(t).abs().max() < 1e-12);
        }
    }

    #[test]
    fn hessian_recovery_is_linear() {
        let space = p2(2);
        let f = interpolate(&space, |x| x.x * x.x + 0.5 * x.y).unwrap();
        let g = interpolate(&space, |x| x.x * x.y - x.y * x.y).unwrap();
        let combo = FeFunction::from_coeffs(&space, &f.coeffs * 2.0 + &g.coeffs * -3.0).unwrap();
        let hf = recover_hessian(&f).unwrap();
        let hg = recover_hessian(&g).unwrap();
        let hc = recover_hessian(&combo).unwrap();
        for t in 0..space.mesh.num_triangles() {
            let lin = hf.raw(t) * 2.0 - hg.raw(t) * 3.0;
            assert!((hc.raw(t) - lin).abs().max() < 1e-12);
        }
    }

    #[test]
    fn boundary_taper_zeroes_the_wall_and_keeps_the_interior() {
        let space = p2(8);
        let f = interpolate(&space, |x| x.x * x.x).unwrap();
        let h = recover_hessian(&f).unwrap().tapered_near_boundary(2);
        let layers = space.mesh.vertex_boundary_layers();
        for (v, d) in layers.iter().enumerate() {
            let value = h.per_vertex[v][(0, 0)];
            if *d == 0 {
                assert_eq!(value, 0.0);
            } else if *d >= 2 {
                assert!((value - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_recovery_rejects_linear_space() {
        let space = p1(2);
        let f = FeFunction::zeros(&space);
        assert!(recover_hessian(&f).is_err());
    }

    #[test]
    fn recovered_hessian_is_symmetric() {
        let space = p2(3);
        let f = interpolate(&space, |x| (x.x + 0.3 * x.y).powi(2) - x.y).unwrap();
        let h = recover_hessian(&f).unwrap();
        for t in 0..space.mesh.num_triangles() {
            let m = h.raw(t);
            assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-13);
        }
    }

    #[test]
    fn dirichlet_elimination_preserves_interior_solution() {
        let space = p1(3);
        let k = assemble_stiffness(&space);
        let m = assemble_mass(&space);
        let a = SparseMatrix::linear_combination(&[(1.0, &k), (1.0, &m)]);
        let elim = eliminate_dirichlet(&a, &space.boundary_dofs);
        assert!(elim.eliminated.max_asymmetry() <= 1e-12 * elim.eliminated.max_abs());

        // Exact solution u = x1: boundary data x1, rhs = A u restricted.
        let u = interpolate(&space, |x| x.x).unwrap();
        let b = a.mul_vec(&u.coeffs);
        let g = u.coeffs.clone();
        let rhs = elim.apply_rhs(&b, &g);
        let solved = crate::linsolve::solve_spd(&elim.eliminated, &rhs, 1e-12).unwrap();
        assert!((solved - u.coeffs).amax() < 1e-10);
    }
}
