//! Linear and nonlinear solvers.
//!
//! Systems below [`DIRECT_LIMIT`] unknowns are factorized directly:
//! entries are reordered by reverse Cuthill-McKee and eliminated with a
//! partial-pivoting banded LU. Larger symmetric positive definite
//! systems fall back to Jacobi-preconditioned conjugate gradients;
//! larger saddle systems use a Schur-complement iteration whose inner
//! solves are themselves run to tolerance. A damped Newton driver
//! handles the nonlinear constraint systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Largest unknown count solved by direct factorization.
pub const DIRECT_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Auto,
    Direct,
    Iterative,
}

// ---------------------------------------------------------------------
// Reverse Cuthill-McKee
// ---------------------------------------------------------------------

fn symmetric_adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.iter_entries() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS returning (a min-degree node of the last level, eccentricity).
fn bfs_farthest(adj: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut last = start;
    let mut ecc = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                if dist[v] > ecc || (dist[v] == ecc && adj[v].len() < adj[last].len()) {
                    ecc = dist[v];
                    last = v;
                }
                queue.push_back(v);
            }
        }
    }
    (last, ecc)
}

/// Bandwidth-reducing ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let adj = symmetric_adjacency(a);
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start improves the band substantially.
        let mut start = seed;
        let mut ecc = 0;
        loop {
            let (far, far_ecc) = bfs_farthest(&adj, start);
            if far_ecc > ecc {
                ecc = far_ecc;
                start = far;
            } else {
                break;
            }
        }
        visited[start] = true;
        order.push(start);
        let mut head = order.len() - 1;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (adj[v].len(), v));
            for v in next {
                visited[v] = true;
                order.push(v);
            }
        }
    }
    order.reverse();
    order
}

// ---------------------------------------------------------------------
// Banded LU with partial pivoting
// ---------------------------------------------------------------------

/// LU factorization in LAPACK band storage after RCM reordering.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        // Entry (r, c) lives at offset kl + ku + r - c within column c.
        c * self.ldab + self.kl + self.ku + r - c
    }

    pub fn factor(a: &SparseMatrix) -> Result<BandedLu> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::invalid("banded LU requires a square matrix"));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut pos = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.iter_entries() {
            let (r, c) = (pos[i], pos[j]);
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
            perm,
        };
        for (i, j, v) in a.iter_entries() {
            let (r, c) = (pos[i], pos[j]);
            let at = lu.idx(r, c);
            lu.ab[at] = v;
        }

        let mut ju = 0usize;
        for j in 0..n {
            let km = lu.kl.min(n - 1 - j);
            let mut jp = 0;
            let mut amax = lu.ab[lu.idx(j, j)].abs();
            for p in 1..=km {
                let v = lu.ab[lu.idx(j + p, j)].abs();
                if v > amax {
                    amax = v;
                    jp = p;
                }
            }
            lu.ipiv[j] = j + jp;
            if amax == 0.0 {
                return Err(Error::LinearSolver(format!(
                    "singular system: zero pivot at column {j}"
                )));
            }
            ju = ju.max((j + lu.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (lu.idx(j + jp, c), lu.idx(j, c));
                    lu.ab.swap(a, b);
                }
            }
            let pivot = lu.ab[lu.idx(j, j)];
            for p in 1..=km {
                let at = lu.idx(j + p, j);
                lu.ab[at] /= pivot;
            }
            for c in j + 1..=ju {
                let f = lu.ab[lu.idx(j, c)];
                if f != 0.0 {
                    for p in 1..=km {
                        let at = lu.idx(j + p, c);
                        lu.ab[at] -= lu.ab[lu.idx(j + p, j)] * f;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut y = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            y[new] = b[old];
        }
        // Forward substitution with the pivoted unit-lower factor.
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                y.swap_rows(p, j);
            }
            let km = self.kl.min(n - 1 - j);
            let yj = y[j];
            if yj != 0.0 {
                for k in 1..=km {
                    y[j + k] -= self.ab[self.idx(j + k, j)] * yj;
                }
            }
        }
        // Back substitution with the banded upper factor.
        let ub = self.kl + self.ku;
        for j in (0..n).rev() {
            let hi = (j + ub).min(n - 1);
            let mut s = y[j];
            for c in j + 1..=hi {
                s -= self.ab[self.idx(j, c)] * y[c];
            }
            y[j] = s / self.ab[self.idx(j, j)];
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

// ---------------------------------------------------------------------
// Iterative kernels
// ---------------------------------------------------------------------

fn cg_jacobi(
    a: &SparseMatrix,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = b.len();
    let bnorm = b.norm();
    let dinv: DVector<f64> = a.diagonal().map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 });
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = dinv.component_mul(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        if r.norm() <= tol * bnorm {
            // The recursive residual drifts; accept only against the
            // true one, restarting from it otherwise.
            let exact = b - a.mul_vec(&x);
            if exact.norm() <= tol * bnorm {
                return Ok(x);
            }
            r = exact;
            z = dinv.component_mul(&r);
            p = z.clone();
            rz = r.dot(&z);
        }
        let ap = a.mul_vec(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = dinv.component_mul(&r);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    let residual = (b - a.mul_vec(&x)).norm();
    if residual <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
        })
    }
}

fn gmres<F>(mut op: F, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = b.len();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let m = max_iter.min(n);
    let mut basis: Vec<DVector<f64>> = vec![b / bnorm];
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = DVector::<f64>::zeros(m + 1);
    g[0] = bnorm;

    let solution = |k: usize, basis: &[DVector<f64>], h: &DMatrix<f64>, g: &DVector<f64>| {
        // Solve the k x k upper triangular system.
        let mut y = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        let mut x = DVector::zeros(n);
        for (j, yj) in y.iter().enumerate() {
            x.axpy(*yj, &basis[j], 1.0);
        }
        x
    };

    for k in 0..m {
        let mut w = op(&basis[k])?;
        for i in 0..=k {
            h[(i, k)] = w.dot(&basis[i]);
            w.axpy(-h[(i, k)], &basis[i], 1.0);
        }
        h[(k + 1, k)] = w.norm();
        for i in 0..k {
            let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
            h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
            h[(i, k)] = t;
        }
        let denom = (h[(k, k)].powi(2) + h[(k + 1, k)].powi(2)).sqrt();
        if denom == 0.0 {
            return Err(Error::LinearSolver("gmres breakdown: zero pivot".into()));
        }
        cs[k] = h[(k, k)] / denom;
        sn[k] = h[(k + 1, k)] / denom;
        h[(k, k)] = denom;
        h[(k + 1, k)] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];

        let residual = g[k + 1].abs();
        if residual <= tol * bnorm {
            return Ok(solution(k + 1, &basis, &h, &g));
        }
        let hk1 = {
            // Recompute the unrotated subdiagonal norm for the new basis vector.
            w.norm()
        };
        if hk1 == 0.0 {
            return Ok(solution(k + 1, &basis, &h, &g));
        }
        basis.push(w / hk1);
    }
    Err(Error::NoConvergence {
        iterations: m,
        residual: g[m].abs(),
    })
}

// ---------------------------------------------------------------------
// Public solves
// ---------------------------------------------------------------------

/// Solve a symmetric positive definite system to a relative residual.
pub fn solve_spd(a: &SparseMatrix, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    solve_spd_with(a, b, tol, Strategy::Auto)
}

pub fn solve_spd_with(
    a: &SparseMatrix,
    b: &DVector<f64>,
    tol: f64,
    strategy: Strategy,
) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::invalid("solve_spd: dimension mismatch"));
    }
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(b.len()));
    }
    let direct = match strategy {
        Strategy::Auto => a.nrows() < DIRECT_LIMIT,
        Strategy::Direct => true,
        Strategy::Iterative => false,
    };
    if direct {
        let lu = BandedLu::factor(a)?;
        let mut x = lu.solve(b);
        let mut r = b - a.mul_vec(&x);
        if r.norm() > tol * bnorm {
            x += lu.solve(&r);
            r = b - a.mul_vec(&x);
        }
        if r.norm() > tol * bnorm {
            return Err(Error::LinearSolver(format!(
                "direct solve residual {:.3e} above tolerance",
                r.norm() / bnorm
            )));
        }
        Ok(x)
    } else {
        cg_jacobi(a, b, tol, 200 + 50 * a.nrows())
    }
}

/// Solve with a precomputed factorization, with one step of iterative
/// refinement and a residual check against the original matrix.
pub fn solve_with_factor(
    lu: &BandedLu,
    a: &SparseMatrix,
    b: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(b.len()));
    }
    let mut x = lu.solve(b);
    let mut r = b - a.mul_vec(&x);
    if r.norm() > tol * bnorm {
        x += lu.solve(&r);
        r = b - a.mul_vec(&x);
    }
    if r.norm() > tol * bnorm {
        return Err(Error::LinearSolver(format!(
            "factored solve residual {:.3e} above tolerance",
            r.norm() / bnorm
        )));
    }
    Ok(x)
}

/// Direct solve of a general square system (no symmetry assumption).
pub fn solve_direct(a: &SparseMatrix, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let lu = BandedLu::factor(a)?;
    solve_with_factor(&lu, a, b, tol)
}

/// Coupled state/multiplier system in block form. Signs are the
/// caller's responsibility; the blocks are used as given:
///
/// ```text
/// [ A  B ] [x]   [rhs_state]
/// [ C  D ] [p] = [rhs_mult ]
/// ```
pub struct BlockSystem {
    pub a: SparseMatrix,
    pub coupling: SparseMatrix,
    pub constraint: SparseMatrix,
    pub d: Option<SparseMatrix>,
    pub rhs_state: DVector<f64>,
    pub rhs_mult: DVector<f64>,
}

impl BlockSystem {
    fn validate(&self) -> Result<(usize, usize)> {
        let ny = self.a.nrows();
        let np = self.constraint.nrows();
        let ok = self.a.ncols() == ny
            && self.coupling.nrows() == ny
            && self.coupling.ncols() == np
            && self.constraint.ncols() == ny
            && self.d.as_ref().is_none_or(|d| d.nrows() == np && d.ncols() == np)
            && self.rhs_state.len() == ny
            && self.rhs_mult.len() == np;
        if !ok {
            return Err(Error::invalid("block system dimensions are inconsistent"));
        }
        Ok((ny, np))
    }

    pub fn monolithic(&self) -> (SparseMatrix, DVector<f64>) {
        let (ny, np) = (self.a.nrows(), self.constraint.nrows());
        let n = ny + np;
        let nnz = self.a.nnz()
            + self.coupling.nnz()
            + self.constraint.nnz()
            + self.d.as_ref().map_or(0, |d| d.nnz());
        let mut b = TripletBuilder::with_capacity(n, n, nnz);
        for (i, j, v) in self.a.iter_entries() {
            b.push(i, j, v);
        }
        for (i, j, v) in self.coupling.iter_entries() {
            b.push(i, ny + j, v);
        }
        for (i, j, v) in self.constraint.iter_entries() {
            b.push(ny + i, j, v);
        }
        if let Some(d) = &self.d {
            for (i, j, v) in d.iter_entries() {
                b.push(ny + i, ny + j, v);
            }
        }
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, ny).copy_from(&self.rhs_state);
        rhs.rows_mut(ny, np).copy_from(&self.rhs_mult);
        (b.build(), rhs)
    }
}

/// Solve a saddle-point block system to a combined relative residual.
pub fn solve_saddle(sys: &BlockSystem, tol: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    solve_saddle_with(sys, tol, Strategy::Auto)
}

pub fn solve_saddle_with(
    sys: &BlockSystem,
    tol: f64,
    strategy: Strategy,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (ny, np) = sys.validate()?;
    let rhs_norm = (sys.rhs_state.norm_squared() + sys.rhs_mult.norm_squared()).sqrt();
    if rhs_norm == 0.0 {
        return Ok((DVector::zeros(ny), DVector::zeros(np)));
    }
    let direct = match strategy {
        Strategy::Auto => ny + np < DIRECT_LIMIT,
        Strategy::Direct => true,
        Strategy::Iterative => false,
    };
    let (x, p) = if direct {
        let (mono, rhs) = sys.monolithic();
        let lu = BandedLu::factor(&mono)?;
        let mut z = lu.solve(&rhs);
        let r = &rhs - mono.mul_vec(&z);
        if r.norm() > tol * rhs_norm {
            z += lu.solve(&r);
        }
        (z.rows(0, ny).into_owned(), z.rows(ny, np).into_owned())
    } else {
        // Schur complement on the multiplier block; every operator
        // application solves the A block to tolerance.
        let inner_tol = (tol * 1e-2).max(1e-14);
        let a_solve = |v: &DVector<f64>| solve_spd(&sys.a, v, inner_tol);
        let z = a_solve(&sys.rhs_state)?;
        let rhs_s = &sys.rhs_mult - sys.constraint.mul_vec(&z);
        let p = gmres(
            |v: &DVector<f64>| {
                let av = a_solve(&sys.coupling.mul_vec(v))?;
                let mut out = -sys.constraint.mul_vec(&av);
                if let Some(d) = &sys.d {
                    out += d.mul_vec(v);
                }
                Ok(out)
            },
            &rhs_s,
            tol,
            400,
        )?;
        let x = a_solve(&(&sys.rhs_state - sys.coupling.mul_vec(&p)))?;
        (x, p)
    };

    let r1 = &sys.rhs_state - sys.a.mul_vec(&x) - sys.coupling.mul_vec(&p);
    let mut r2 = &sys.rhs_mult - sys.constraint.mul_vec(&x);
    if let Some(d) = &sys.d {
        r2 -= d.mul_vec(&p);
    }
    let res = (r1.norm_squared() + r2.norm_squared()).sqrt();
    if res > tol * rhs_norm {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: res / rhs_norm,
        });
    }
    Ok((x, p))
}

// ---------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Absolute tolerance on the residual norm.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: bool,
    /// Smallest damped step before declaring stagnation.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            damping: true,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub step_sizes: Vec<f64>,
    pub residual_history: Vec<f64>,
}

/// Damped Newton iteration. `solve_linearized(x, r)` returns the step
/// `delta` with `J(x) delta = r`; the update is `x - s*delta` with the
/// step halved until the residual norm decreases.
pub fn newton_solve<R, S>(
    residual: R,
    mut solve_linearized: S,
    x0: DVector<f64>,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, NewtonReport)>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    S: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let eval = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let r = residual(x)?;
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("newton residual", None));
        }
        Ok(r)
    };

    let mut x = x0;
    let mut r = eval(&x)?;
    let mut rnorm = r.norm();
    let mut report = NewtonReport {
        iterations: 0,
        residual_norm: rnorm,
        converged: false,
        step_sizes: Vec::new(),
        residual_history: vec![rnorm],
    };

    for it in 0..opts.max_iter {
        if rnorm <= opts.tol {
            report.converged = true;
            report.residual_norm = rnorm;
            return Ok((x, report));
        }
        let delta = solve_linearized(&x, &r)?;
        let mut s = 1.0;
        loop {
            let cand = &x - &delta * s;
            let rc = eval(&cand)?;
            let rcn = rc.norm();
            if rcn < rnorm || rcn <= opts.tol || !opts.damping {
                x = cand;
                r = rc;
                rnorm = rcn;
                report.step_sizes.push(s);
                report.residual_history.push(rnorm);
                break;
            }
            s *= 0.5;
            if s < opts.min_step {
                return Err(Error::Stagnation {
                    step: s,
                    residual: rnorm,
                });
            }
        }
        report.iterations = it + 1;
    }
    if rnorm <= opts.tol {
        report.converged = true;
        report.residual_norm = rnorm;
        Ok((x, report))
    } else {
        Err(Error::NewtonFailed {
            reason: "iteration limit reached".into(),
            iterations: report.iterations,
            residual: rnorm,
        })
    }
}

/// Forward-difference Jacobian with a relative step, for gradient
/// checks and small dense systems.
pub fn fd_jacobian<R>(residual: &R, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let r0 = residual(x)?;
    let (m, n) = (r0.len(), x.len());
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let step = rel_step * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += step;
        let rp = residual(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - r0[i]) / step;
        }
    }
    Ok(jac)
}

/// Dense LU step solver, convenient with [`fd_jacobian`] or small
/// analytic Jacobians.
pub fn dense_step(jac: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    jac.clone()
        .lu()
        .solve(r)
        .ok_or_else(|| Error::LinearSolver("singular dense jacobian".into()))
}
