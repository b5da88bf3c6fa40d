//! Problem definitions: the abstract quadruple (f, B, g, y0) with
//! boundary data, plus the builtin instances.
//!
//! A problem supplies the PDE right side `f(x, t, y, grad, hessian)`,
//! the multiplier coupling `B(x, t, y, grad)` in R^m, the constraint
//! `g(x, t, y, grad, p)` in R^m, initial and boundary data, and
//! (optionally) analytic partial derivatives for the Newton solver and
//! an exact solution for error studies. All callbacks must be pure and
//! thread-safe.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_MULTIPLIERS: usize = 8;

pub type SpatialFn = Arc<dyn Fn(Vector2<f64>) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(Vector2<f64>, f64) -> f64 + Send + Sync>;
pub type SpaceTimeGradFn = Arc<dyn Fn(Vector2<f64>, f64) -> Vector2<f64> + Send + Sync>;
pub type PdeFn =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &Matrix2<f64>) -> f64 + Send + Sync>;
pub type PdeScalarPartial =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &Matrix2<f64>) -> f64 + Send + Sync>;
pub type PdeGradPartial =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &Matrix2<f64>) -> Vector2<f64> + Send + Sync>;
pub type PdeMatrixPartial =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &Matrix2<f64>) -> Matrix2<f64> + Send + Sync>;
pub type CouplingFn = Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &mut [f64]) + Send + Sync>;
pub type CouplingGradFn =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &mut [Vector2<f64>]) + Send + Sync>;
pub type ConstraintFn =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &[f64], &mut [f64]) + Send + Sync>;
pub type ConstraintGradFn =
    Arc<dyn Fn(Vector2<f64>, f64, f64, Vector2<f64>, &[f64], &mut [Vector2<f64>]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// State pinned to the problem's boundary data on the lateral boundary.
    Dirichlet,
    /// No boundary rows replaced (natural boundary).
    Natural,
}

/// Analytic partial derivatives with respect to the state `y`, the
/// gradient `q`, the Hessian `M` and the multipliers `p`.
#[derive(Clone)]
pub struct Partials {
    pub df_dy: PdeScalarPartial,
    pub df_dq: PdeGradPartial,
    pub df_dm: PdeMatrixPartial,
    pub db_dy: CouplingFn,
    pub db_dq: CouplingGradFn,
    pub dg_dy: ConstraintFn,
    pub dg_dq: ConstraintGradFn,
    /// Row-major m-by-m Jacobian of g with respect to p.
    pub dg_dp: ConstraintFn,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub multiplier_dim: usize,
    pub boundary: BoundaryKind,
    /// First-order problems run with the Hessian argument zeroed.
    pub first_order: bool,
    /// Declared hypotheses for order preservation (f, B, g and -B·g
    /// non-decreasing in y).
    pub monotone: bool,
    /// Declared sup-bound on the PDE right side along trajectories.
    pub sup_bound_f: f64,
    /// Declared sup-bound on the constraint-step adjustment rate.
    pub sup_bound_g: f64,
    f: PdeFn,
    b: CouplingFn,
    g: ConstraintFn,
    y0: SpatialFn,
    dirichlet: SpaceTimeFn,
    partials: Option<Partials>,
    exact: Option<SpaceTimeFn>,
    exact_grad: Option<SpaceTimeGradFn>,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        multiplier_dim: usize,
        boundary: BoundaryKind,
        f: PdeFn,
        b: CouplingFn,
        g: ConstraintFn,
        y0: SpatialFn,
        dirichlet: SpaceTimeFn,
    ) -> ProblemSpec {
        assert!(
            (1..=MAX_MULTIPLIERS).contains(&multiplier_dim),
            "multiplier dimension out of range"
        );
        ProblemSpec {
            name: name.into(),
            multiplier_dim,
            boundary,
            first_order: false,
            monotone: false,
            sup_bound_f: 0.0,
            sup_bound_g: 0.0,
            f,
            b,
            g,
            y0,
            dirichlet,
            partials: None,
            exact: None,
            exact_grad: None,
        }
    }

    pub fn with_partials(mut self, partials: Partials) -> Self {
        self.partials = Some(partials);
        self
    }

    pub fn with_exact(mut self, exact: SpaceTimeFn, grad: SpaceTimeGradFn) -> Self {
        self.exact = Some(exact);
        self.exact_grad = Some(grad);
        self
    }

    pub fn with_sup_bounds(mut self, c_f: f64, c_g: f64) -> Self {
        self.sup_bound_f = c_f;
        self.sup_bound_g = c_g;
        self
    }

    pub fn with_monotone(mut self, monotone: bool) -> Self {
        self.monotone = monotone;
        self
    }

    pub fn with_first_order(mut self, first_order: bool) -> Self {
        self.first_order = first_order;
        self
    }

    /// Replace the initial condition (the boundary data is untouched).
    pub fn with_initial_condition(mut self, y0: SpatialFn) -> Self {
        self.y0 = y0;
        self
    }

    pub fn f(&self, x: Vector2<f64>, t: f64, y: f64, q: Vector2<f64>, m: &Matrix2<f64>) -> f64 {
        (self.f)(x, t, y, q, m)
    }

    pub fn b_into(&self, x: Vector2<f64>, t: f64, y: f64, q: Vector2<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.multiplier_dim);
        (self.b)(x, t, y, q, out)
    }

    pub fn g_into(
        &self,
        x: Vector2<f64>,
        t: f64,
        y: f64,
        q: Vector2<f64>,
        p: &[f64],
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.multiplier_dim);
        (self.g)(x, t, y, q, p, out)
    }

    pub fn b(&self, x: Vector2<f64>, t: f64, y: f64, q: Vector2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.multiplier_dim];
        self.b_into(x, t, y, q, &mut out);
        out
    }

    pub fn g(&self, x: Vector2<f64>, t: f64, y: f64, q: Vector2<f64>, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.multiplier_dim];
        self.g_into(x, t, y, q, p, &mut out);
        out
    }

    pub fn y0(&self, x: Vector2<f64>) -> f64 {
        (self.y0)(x)
    }

    pub fn dirichlet(&self, x: Vector2<f64>, t: f64) -> f64 {
        (self.dirichlet)(x, t)
    }

    pub fn partials(&self) -> Option<&Partials> {
        self.partials.as_ref()
    }

    pub fn exact(&self) -> Option<&SpaceTimeFn> {
        self.exact.as_ref()
    }

    pub fn exact_grad(&self) -> Option<&SpaceTimeGradFn> {
        self.exact_grad.as_ref()
    }

    /// The PDE right side with a recovered Hessian substituted for the
    /// second-derivative argument.
    pub fn eval_f_h(
        &self,
        x: Vector2<f64>,
        t: f64,
        y: f64,
        q: Vector2<f64>,
        m_recovered: &Matrix2<f64>,
    ) -> Result<f64> {
        let v = self.f(x, t, y, q, m_recovered);
        if !v.is_finite() {
            return Err(Error::non_finite("pde right side", None));
        }
        Ok(v)
    }

    /// Componentwise constraint value at a state.
    pub fn constraint_residual(
        &self,
        x: Vector2<f64>,
        t: f64,
        y: f64,
        q: Vector2<f64>,
        p: &[f64],
    ) -> Result<Vec<f64>> {
        let out = self.g(x, t, y, q, p);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("constraint residual", None));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------
// Builtin: controlled reaction-diffusion
// ---------------------------------------------------------------------

/// Parameters of the controlled logistic reaction-diffusion problem:
/// diffusion `nu`, control gain `c`; the control is slaved to the state
/// through `p = c u` and feeds back as `-u p`.
#[derive(Debug, Clone, Copy)]
pub struct ReactionDiffusionParams {
    pub nu: f64,
    pub c: f64,
}

impl Default for ReactionDiffusionParams {
    fn default() -> Self {
        ReactionDiffusionParams { nu: 0.01, c: 1.0 }
    }
}

pub fn reaction_diffusion(params: ReactionDiffusionParams) -> ProblemSpec {
    let ReactionDiffusionParams { nu, c } = params;
    let f: PdeFn = Arc::new(move |_x, _t, y, _q, m: &Matrix2<f64>| {
        nu * m.trace() + y * (1.0 - y)
    });
    let b: CouplingFn = Arc::new(move |_x, _t, y, _q, out| out[0] = -y);
    let g: ConstraintFn = Arc::new(move |_x, _t, y, _q, p, out| out[0] = p[0] - c * y);
    let y0: SpatialFn = Arc::new(|x| {
        0.25 + 0.2 * (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin()
    });
    let dirichlet: SpaceTimeFn = Arc::new(|_x, _t| 0.0);

    let partials = Partials {
        df_dy: Arc::new(|_x, _t, y, _q, _m| 1.0 - 2.0 * y),
        df_dq: Arc::new(|_x, _t, _y, _q, _m| Vector2::zeros()),
        df_dm: Arc::new(move |_x, _t, _y, _q, _m| Matrix2::identity() * nu),
        db_dy: Arc::new(|_x, _t, _y, _q, out| out[0] = -1.0),
        db_dq: Arc::new(|_x, _t, _y, _q, out| out[0] = Vector2::zeros()),
        dg_dy: Arc::new(move |_x, _t, _y, _q, _p, out| out[0] = -c),
        dg_dq: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = Vector2::zeros()),
        dg_dp: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = 1.0),
    };

    ProblemSpec::new(
        "reaction-diffusion",
        1,
        BoundaryKind::Natural,
        f,
        b,
        g,
        y0,
        dirichlet,
    )
    .with_partials(partials)
    .with_sup_bounds(0.25, 0.25 * c)
}

// ---------------------------------------------------------------------
// Builtin: Hamilton-Jacobi with an obstacle
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleMode {
    /// Enforce min(y - psi, lambda) = 0 (default).
    Complementarity,
    /// Enforce y - psi = 0 literally.
    Equality,
}

#[derive(Clone)]
pub struct HjObstacleParams {
    /// Finite control sample set; `None` takes `control_count` unit
    /// directions.
    pub controls: Option<Vec<Vector2<f64>>>,
    pub control_count: usize,
    /// Isotropic front speed multiplying the control direction.
    pub speed: f64,
    /// Running cost (control-independent).
    pub cost: f64,
    /// Peak height of the default paraboloid obstacle.
    pub obstacle_height: f64,
    /// Obstacle override.
    pub psi: Option<SpaceTimeFn>,
    pub mode: ObstacleMode,
    /// Constant initial level (must dominate the obstacle).
    pub y0_level: f64,
}

impl Default for HjObstacleParams {
    fn default() -> Self {
        HjObstacleParams {
            controls: None,
            control_count: 16,
            speed: 1.0,
            cost: 0.5,
            obstacle_height: 0.25,
            psi: None,
            mode: ObstacleMode::Complementarity,
            y0_level: 0.5,
        }
    }
}

pub fn hj_obstacle(params: HjObstacleParams) -> ProblemSpec {
    let controls: Arc<Vec<Vector2<f64>>> = Arc::new(params.controls.clone().unwrap_or_else(|| {
        (0..params.control_count.max(1))
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / params.control_count.max(1) as f64;
                Vector2::new(theta.cos(), theta.sin())
            })
            .collect()
    }));
    let speed = params.speed;
    let cost = params.cost;
    let height = params.obstacle_height;
    let psi: SpaceTimeFn = params.psi.clone().unwrap_or_else(|| {
        Arc::new(move |x: Vector2<f64>, _t| {
            let r2 = (x - Vector2::new(0.5, 0.5)).norm_squared();
            height * (1.0 - 8.0 * r2)
        })
    });
    let mode = params.mode;
    let level = params.y0_level;

    let best = {
        let controls = Arc::clone(&controls);
        move |q: Vector2<f64>| -> (f64, Vector2<f64>) {
            let mut best_val = f64::NEG_INFINITY;
            let mut best_dir = Vector2::zeros();
            for a in controls.iter() {
                let v = a.dot(&q);
                if v > best_val {
                    best_val = v;
                    best_dir = *a;
                }
            }
            (best_val, best_dir)
        }
    };

    let f: PdeFn = {
        let best = best.clone();
        Arc::new(move |_x, _t, _y, q, _m: &Matrix2<f64>| -(speed * best(q).0 + cost))
    };
    let b: CouplingFn = Arc::new(|_x, _t, _y, _q, out| out[0] = 1.0);
    let g: ConstraintFn = {
        let psi = Arc::clone(&psi);
        Arc::new(move |x, t, y, _q, p, out| {
            let gap = y - psi(x, t);
            out[0] = match mode {
                ObstacleMode::Complementarity => gap.min(p[0]),
                ObstacleMode::Equality => gap,
            };
        })
    };
    let y0: SpatialFn = Arc::new(move |_x| level);
    let dirichlet: SpaceTimeFn = Arc::new(move |_x, _t| level);

    let partials = Partials {
        df_dy: Arc::new(|_x, _t, _y, _q, _m| 0.0),
        df_dq: {
            let best = best.clone();
            Arc::new(move |_x, _t, _y, q, _m| -best(q).1 * speed)
        },
        df_dm: Arc::new(|_x, _t, _y, _q, _m| Matrix2::zeros()),
        db_dy: Arc::new(|_x, _t, _y, _q, out| out[0] = 0.0),
        db_dq: Arc::new(|_x, _t, _y, _q, out| out[0] = Vector2::zeros()),
        dg_dy: {
            let psi = Arc::clone(&psi);
            Arc::new(move |x, t, y, _q, p, out| {
                out[0] = match mode {
                    ObstacleMode::Complementarity => {
                        if y - psi(x, t) < p[0] {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ObstacleMode::Equality => 1.0,
                };
            })
        },
        dg_dq: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = Vector2::zeros()),
        dg_dp: {
            let psi = Arc::clone(&psi);
            Arc::new(move |x, t, y, _q, p, out| {
                out[0] = match mode {
                    ObstacleMode::Complementarity => {
                        if y - psi(x, t) < p[0] {
                            0.0
                        } else {
                            1.0
                        }
                    }
                    ObstacleMode::Equality => 0.0,
                };
            })
        },
    };

    ProblemSpec::new(
        "hj-obstacle",
        1,
        BoundaryKind::Dirichlet,
        f,
        b,
        g,
        y0,
        dirichlet,
    )
    .with_partials(partials)
    .with_first_order(true)
    .with_sup_bounds(3.0, 1.0)
}

// ---------------------------------------------------------------------
// Builtin: manufactured heat flow
// ---------------------------------------------------------------------

/// Heat flow with the exact solution `e^{-t} sin(pi x1) sin(pi x2)`,
/// a source chosen so the exact field solves the PDE, and a multiplier
/// slaved to the state through `g = y - p`. The coupling B is zero, so
/// f, B, g and -B·g are all non-decreasing in the state and the order
/// preservation hypotheses hold.
pub fn manufactured_heat() -> ProblemSpec {
    use std::f64::consts::PI;
    let exact = |x: Vector2<f64>, t: f64| (-t).exp() * (PI * x.x).sin() * (PI * x.y).sin();
    let source = move |x: Vector2<f64>, t: f64| (2.0 * PI * PI - 1.0) * exact(x, t);

    let f: PdeFn = Arc::new(move |x, t, _y, _q, m: &Matrix2<f64>| m.trace() + source(x, t));
    let b: CouplingFn = Arc::new(|_x, _t, _y, _q, out| out[0] = 0.0);
    let g: ConstraintFn = Arc::new(|_x, _t, y, _q, p, out| out[0] = y - p[0]);
    let y0: SpatialFn = Arc::new(move |x| exact(x, 0.0));
    let dirichlet: SpaceTimeFn = Arc::new(|_x, _t| 0.0);

    let partials = Partials {
        df_dy: Arc::new(|_x, _t, _y, _q, _m| 0.0),
        df_dq: Arc::new(|_x, _t, _y, _q, _m| Vector2::zeros()),
        df_dm: Arc::new(|_x, _t, _y, _q, _m| Matrix2::identity()),
        db_dy: Arc::new(|_x, _t, _y, _q, out| out[0] = 0.0),
        db_dq: Arc::new(|_x, _t, _y, _q, out| out[0] = Vector2::zeros()),
        dg_dy: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = 1.0),
        dg_dq: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = Vector2::zeros()),
        dg_dp: Arc::new(|_x, _t, _y, _q, _p, out| out[0] = -1.0),
    };

    let exact_fn: SpaceTimeFn = Arc::new(exact);
    let exact_grad: SpaceTimeGradFn = Arc::new(move |x, t| {
        Vector2::new(
            PI * (-t).exp() * (PI * x.x).cos() * (PI * x.y).sin(),
            PI * (-t).exp() * (PI * x.x).sin() * (PI * x.y).cos(),
        )
    });

    ProblemSpec::new(
        "manufactured-heat",
        1,
        BoundaryKind::Dirichlet,
        f,
        b,
        g,
        y0,
        dirichlet,
    )
    .with_partials(partials)
    .with_exact(exact_fn, exact_grad)
    .with_monotone(true)
    .with_sup_bounds(2.0 * PI * PI - 1.0, 0.0)
}

// ---------------------------------------------------------------------
// Selection and checks
// ---------------------------------------------------------------------

#[derive(Clone)]
pub struct BuiltinOptions {
    pub nu: f64,
    pub c: f64,
    pub obstacle_height: f64,
    pub control_count: usize,
    pub obstacle_mode: ObstacleMode,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        BuiltinOptions {
            nu: 0.01,
            c: 1.0,
            obstacle_height: 0.25,
            control_count: 16,
            obstacle_mode: ObstacleMode::Complementarity,
        }
    }
}

pub fn by_name(name: &str, opt: &BuiltinOptions) -> Result<ProblemSpec> {
    match name {
        "reaction-diffusion" => Ok(reaction_diffusion(ReactionDiffusionParams {
            nu: opt.nu,
            c: opt.c,
        })),
        "hj-obstacle" => Ok(hj_obstacle(HjObstacleParams {
            obstacle_height: opt.obstacle_height,
            control_count: opt.control_count,
            mode: opt.obstacle_mode,
            ..Default::default()
        })),
        "manufactured-heat" => Ok(manufactured_heat()),
        other => Err(Error::invalid(format!(
            "unknown problem '{other}' (available: reaction-diffusion, hj-obstacle, manufactured-heat)"
        ))),
    }
}

pub fn builtin_names() -> [&'static str; 3] {
    ["reaction-diffusion", "hj-obstacle", "manufactured-heat"]
}

fn sample_state(rng: &mut ChaCha8Rng, m: usize) -> (Vector2<f64>, f64, f64, Vector2<f64>, Matrix2<f64>, Vec<f64>) {
    let x = Vector2::new(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
    let t = rng.gen_range(0.0..1.0);
    let y = rng.gen_range(-1.0..1.0);
    let q = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (a, c, d) = (
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let mat = Matrix2::new(a, c, c, d);
    let p: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (x, t, y, q, mat, p)
}

/// Compare declared analytic partials of f, B and g against forward
/// differences at seeded random states; returns the largest relative
/// mismatch.
pub fn check_partials(prob: &ProblemSpec, samples: usize, seed: u64) -> Result<f64> {
    let partials = prob
        .partials()
        .ok_or_else(|| Error::invalid(format!("problem '{}' declares no partials", prob.name)))?;
    let m = prob.multiplier_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-7;
    let rel = |analytic: f64, fd: f64| (analytic - fd).abs() / analytic.abs().max(1.0);
    let mut worst: f64 = 0.0;

    for _ in 0..samples {
        let (x, t, y, q, mat, p) = sample_state(&mut rng, m);
        let hy = step * y.abs().max(1.0);

        // f partials.
        let f0 = prob.f(x, t, y, q, &mat);
        worst = worst.max(rel(
            (partials.df_dy)(x, t, y, q, &mat),
            (prob.f(x, t, y + hy, q, &mat) - f0) / hy,
        ));
        let dq = (partials.df_dq)(x, t, y, q, &mat);
        for k in 0..2 {
            let hq = step * q[k].abs().max(1.0);
            let mut qp = q;
            qp[k] += hq;
            worst = worst.max(rel(dq[k], (prob.f(x, t, y, qp, &mat) - f0) / hq));
        }
        let dm = (partials.df_dm)(x, t, y, q, &mat);
        for (i, j) in [(0, 0), (1, 1)] {
            let hm = step * mat[(i, j)].abs().max(1.0);
            let mut mp = mat;
            mp[(i, j)] += hm;
            worst = worst.max(rel(dm[(i, j)], (prob.f(x, t, y, q, &mp) - f0) / hm));
        }
        {
            // Off-diagonal entries move together (symmetric argument).
            let hm = step * mat[(0, 1)].abs().max(1.0);
            let mut mp = mat;
            mp[(0, 1)] += hm;
            mp[(1, 0)] += hm;
            let fd = (prob.f(x, t, y, q, &mp) - f0) / hm;
            worst = worst.max(rel(dm[(0, 1)] + dm[(1, 0)], fd));
        }

        // B partials.
        let b0 = prob.b(x, t, y, q);
        let mut buf = vec![0.0; m];
        (partials.db_dy)(x, t, y, q, &mut buf);
        let bp = prob.b(x, t, y + hy, q);
        for j in 0..m {
            worst = worst.max(rel(buf[j], (bp[j] - b0[j]) / hy));
        }
        let mut gbuf = vec![Vector2::zeros(); m];
        (partials.db_dq)(x, t, y, q, &mut gbuf);
        for k in 0..2 {
            let hq = step * q[k].abs().max(1.0);
            let mut qp = q;
            qp[k] += hq;
            let bq = prob.b(x, t, y, qp);
            for j in 0..m {
                worst = worst.max(rel(gbuf[j][k], (bq[j] - b0[j]) / hq));
            }
        }

        // g partials.
        let g0 = prob.g(x, t, y, q, &p);
        (partials.dg_dy)(x, t, y, q, &p, &mut buf);
        let gp = prob.g(x, t, y + hy, q, &p);
        for j in 0..m {
            worst = worst.max(rel(buf[j], (gp[j] - g0[j]) / hy));
        }
        (partials.dg_dq)(x, t, y, q, &p, &mut gbuf);
        for k in 0..2 {
            let hq = step * q[k].abs().max(1.0);
            let mut qp = q;
            qp[k] += hq;
            let gq = prob.g(x, t, y, qp, &p);
            for j in 0..m {
                worst = worst.max(rel(gbuf[j][k], (gq[j] - g0[j]) / hq));
            }
        }
        let mut jac = vec![0.0; m * m];
        (partials.dg_dp)(x, t, y, q, &p, &mut jac);
        for k in 0..m {
            let hp = step * p[k].abs().max(1.0);
            let mut pp = p.clone();
            pp[k] += hp;
            let gk = prob.g(x, t, y, q, &pp);
            for j in 0..m {
                worst = worst.max(rel(jac[j * m + k], (gk[j] - g0[j]) / hp));
            }
        }
    }
    Ok(worst)
}

/// Randomized check of the order-preservation hypotheses: f, B, g and
/// -B·g must be non-decreasing in the state. Returns the largest
/// observed decrease (0 when the hypotheses hold).
pub fn check_monotone_hypotheses(prob: &ProblemSpec, samples: usize, seed: u64) -> f64 {
    let m = prob.multiplier_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (x, t, y, q, mat, p) = sample_state(&mut rng, m);
        let dy = rng.gen_range(1e-4..0.5f64);
        let (y1, y2) = (y, y + dy);
        worst = worst.max(prob.f(x, t, y1, q, &mat) - prob.f(x, t, y2, q, &mat));
        let (b1, b2) = (prob.b(x, t, y1, q), prob.b(x, t, y2, q));
        let (g1, g2) = (prob.g(x, t, y1, q, &p), prob.g(x, t, y2, q, &p));
        for j in 0..m {
            worst = worst.max(b1[j] - b2[j]);
            worst = worst.max(g1[j] - g2[j]);
        }
        let dot1: f64 = b1.iter().zip(&g1).map(|(a, b)| a * b).sum();
        let dot2: f64 = b2.iter().zip(&g2).map(|(a, b)| a * b).sum();
        worst = worst.max(-dot1 - (-dot2));
    }
    worst
}
