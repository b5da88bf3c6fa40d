//! Convergence studies, rate estimation and the structural test
//! suites (consistency, stability, monotonicity) with CSV reports.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{build_unit_square_mesh, Mesh};
use crate::problems::{ProblemSpec, SpaceTimeFn, SpatialFn};
use crate::quadrature::QuadratureRule;
use crate::scheme::{self, apply_discrete_operator, SchemeParams, SmoothField};
use crate::spaces::FeFunction;

/// Default seed for randomized suites, reported in every output.
pub const DEFAULT_SEED: u64 = 1729;

/// Acceptance threshold on observed convergence rates (first order
/// with slack 0.1).
pub const RATE_GATE: f64 = 0.9;

/// Residual ratio gate for first-order decay between mesh halvings
/// (2.0 with 20% slack).
pub const CONSISTENCY_RATIO_GATE: f64 = 1.6;

/// Errors below this are considered saturated at solver tolerance;
/// rates are not reported for them.
pub const SATURATION_FLOOR: f64 = 1e-10;

/// Nodal ordering violations are gated against this multiple of the
/// dominating trajectory's sup-norm.
pub const MONOTONICITY_REL_GATE: f64 = 1e-8;

// ---------------------------------------------------------------------
// Error norms
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms {
    /// Max nodal error over the DOF nodes.
    pub linf: f64,
    pub l2: f64,
    /// H1 seminorm of the error (NaN when no exact gradient is known).
    pub h1_semi: f64,
}

pub fn error_norms(
    y: &FeFunction,
    exact: &dyn Fn(Vector2<f64>, f64) -> f64,
    exact_grad: Option<&dyn Fn(Vector2<f64>, f64) -> Vector2<f64>>,
    t: f64,
) -> ErrorNorms {
    let space = &y.space;
    let mut linf: f64 = 0.0;
    for (d, x) in space.dof_points.iter().enumerate() {
        linf = linf.max((y.coeffs[d] - exact(*x, t)).abs());
    }
    let rule = QuadratureRule::volume_default();
    let mesh = &space.mesh;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for tri in 0..mesh.num_triangles() {
        let scale = 2.0 * mesh.areas[tri];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = mesh.point(tri, *bary);
            let (v, g) = y.eval_unchecked(tri, *bary);
            let dv = v - exact(x, t);
            l2 += scale * w * dv * dv;
            if let Some(grad) = exact_grad {
                let dg = g - grad(x, t);
                h1 += scale * w * dg.norm_squared();
            }
        }
    }
    ErrorNorms {
        linf,
        l2: l2.sqrt(),
        h1_semi: if exact_grad.is_some() {
            h1.sqrt()
        } else {
            f64::NAN
        },
    }
}

// ---------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub error_linf: f64,
    pub error_l2: f64,
    pub error_h1: f64,
    /// Observed sup-norm rate against the previous level; `None` on
    /// the first row or when both errors sit at the saturation floor.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Observed order from two (h, error) pairs.
pub fn observed_rate(h_coarse: f64, e_coarse: f64, h_fine: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

impl ConvergenceTable {
    pub fn from_errors(levels: &[usize], hs: &[f64], dts: &[f64], norms: &[ErrorNorms]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
        for i in 0..levels.len() {
            let rate = if i == 0 {
                None
            } else {
                let (ep, ef) = (norms[i - 1].linf, norms[i].linf);
                if ep < SATURATION_FLOOR && ef < SATURATION_FLOOR {
                    None
                } else {
                    Some(observed_rate(hs[i - 1], ep, hs[i], ef))
                }
            };
            rows.push(ConvergenceRow {
                level: levels[i],
                h: hs[i],
                dt: dts[i],
                error_linf: norms[i].linf,
                error_l2: norms[i].l2,
                error_h1: norms[i].h1_semi,
                rate,
            });
        }
        ConvergenceTable { rows }
    }

    /// Rate between the two finest levels.
    pub fn final_rate(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate)
    }

    /// True when every error sits at the saturation floor.
    pub fn saturated(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.error_linf < SATURATION_FLOOR)
    }

    pub fn passes_rate_gate(&self) -> bool {
        self.saturated() || self.final_rate().is_some_and(|r| r >= RATE_GATE)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h,dt,error_linf,error_l2,error_h1,rate\n");
        for r in &self.rows {
            let rate = r.rate.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.level, r.h, r.dt, r.error_linf, r.error_l2, r.error_h1, rate
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<ConvergenceTable> {
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(Error::Config(format!(
                    "convergence csv line {k}: expected 7 columns"
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad number '{s}' on line {k}")))
            };
            rows.push(ConvergenceRow {
                level: cells[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad level on line {k}")))?,
                h: num(cells[1])?,
                dt: num(cells[2])?,
                error_linf: num(cells[3])?,
                error_l2: num(cells[4])?,
                error_h1: num(cells[5])?,
                rate: if cells[6].is_empty() {
                    None
                } else {
                    Some(num(cells[6])?)
                },
            });
        }
        Ok(ConvergenceTable { rows })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>12} {:>13} {:>13} {:>13} {:>9}",
            "level", "h", "dt", "error_linf", "error_l2", "error_h1", "rate"
        );
        for r in &self.rows {
            let rate = match r.rate {
                Some(v) => format!("{v:.3}"),
                None if r.error_linf < SATURATION_FLOOR => "saturated".into(),
                None => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:>6} {:>12.5e} {:>12.5e} {:>13.5e} {:>13.5e} {:>13.5e} {:>9}",
                r.level, r.h, r.dt, r.error_linf, r.error_l2, r.error_h1, rate
            );
        }
        s
    }
}

/// Refine through the given levels and measure final-time errors
/// against the problem's exact solution.
pub fn convergence_study(
    prob: &ProblemSpec,
    levels: &[usize],
    params: &SchemeParams,
) -> Result<ConvergenceTable> {
    let exact = prob
        .exact()
        .ok_or_else(|| Error::invalid(format!("problem '{}' has no exact solution", prob.name)))?
        .clone();
    let grad = prob.exact_grad().cloned();
    let mut hs = Vec::new();
    let mut dts = Vec::new();
    let mut norms = Vec::new();
    for &n in levels {
        let mesh = build_unit_square_mesh(n).map_err(|e| at_level(n, e))?;
        let traj = scheme::run(prob, &mesh, params).map_err(|f| at_level(n, f.error))?;
        let state = traj.final_state();
        let grad_fn = grad.as_ref().map(|g| {
            let g = Arc::clone(g);
            move |x: Vector2<f64>, t: f64| g(x, t)
        });
        let norm = error_norms(
            &state.y,
            &|x, t| exact(x, t),
            grad_fn
                .as_ref()
                .map(|g| g as &dyn Fn(Vector2<f64>, f64) -> Vector2<f64>),
            state.t,
        );
        hs.push(mesh.h);
        dts.push(traj.dt);
        norms.push(norm);
    }
    Ok(ConvergenceTable::from_errors(levels, &hs, &dts, &norms))
}

fn at_level(level: usize, source: Error) -> Error {
    Error::Level {
        level,
        source: Box::new(source),
    }
}

// ---------------------------------------------------------------------
// Stability suite
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub problem: String,
    pub initial_sup: f64,
    pub sup: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Run the problem and compare the trajectory sup-norm against the
/// declared linear-growth bound.
pub fn stability_suite(
    prob: &ProblemSpec,
    mesh: &Arc<Mesh>,
    params: &SchemeParams,
) -> Result<StabilityReport> {
    let traj = scheme::run(prob, mesh, params).map_err(|f| f.error)?;
    let initial_sup = traj.records[0].sup_norm;
    let sup = traj.sup_norm();
    let bound = initial_sup + params.final_time * (prob.sup_bound_f + prob.sup_bound_g);
    Ok(StabilityReport {
        problem: prob.name.clone(),
        initial_sup,
        sup,
        bound,
        pass: sup <= bound + 1e-6,
    })
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        format!(
            "problem,initial_sup,sup,bound,pass\n{},{},{},{},{}\n",
            self.problem, self.initial_sup, self.sup, self.bound, self.pass
        )
    }

    pub fn from_csv(text: &str) -> Result<StabilityReport> {
        let line = text
            .lines()
            .nth(1)
            .ok_or_else(|| Error::Config("stability csv has no data row".into()))?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::Config("stability csv: expected 5 columns".into()));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number '{s}'")))
        };
        Ok(StabilityReport {
            problem: cells[0].to_string(),
            initial_sup: num(cells[1])?,
            sup: num(cells[2])?,
            bound: num(cells[3])?,
            pass: cells[4] == "true",
        })
    }
}

// ---------------------------------------------------------------------
// Monotonicity suite
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityTrial {
    pub trial: usize,
    /// Largest positive nodal excess of the lower trajectory over the
    /// upper one, over all steps.
    pub violation: f64,
    /// Sup-norm of the dominating trajectory.
    pub z_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub seed: u64,
    pub trials: Vec<MonotonicityTrial>,
}

impl MonotonicityReport {
    pub fn max_violation(&self) -> f64 {
        self.trials.iter().fold(0.0, |m, t| m.max(t.violation))
    }

    pub fn max_relative(&self) -> f64 {
        self.trials
            .iter()
            .fold(0.0, |m: f64, t| m.max(t.violation / t.z_sup.max(1e-300)))
    }

    pub fn pass(&self) -> bool {
        self.trials
            .iter()
            .all(|t| t.violation <= MONOTONICITY_REL_GATE * t.z_sup)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,seed,violation,z_sup\n");
        for t in &self.trials {
            let _ = writeln!(s, "{},{},{},{}", t.trial, self.seed, t.violation, t.z_sup);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<MonotonicityReport> {
        let mut seed = 0;
        let mut trials = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(Error::Config("monotonicity csv: expected 4 columns".into()));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad number '{s}'")))
            };
            seed = cells[1]
                .parse()
                .map_err(|_| Error::Config("bad seed".into()))?;
            trials.push(MonotonicityTrial {
                trial: cells[0]
                    .parse()
                    .map_err(|_| Error::Config("bad trial index".into()))?,
                violation: num(cells[2])?,
                z_sup: num(cells[3])?,
            });
        }
        Ok(MonotonicityReport { seed, trials })
    }
}

/// Random smooth field from low sine modes (vanishes on the boundary,
/// so Dirichlet data stays compatible between the ordered pair).
pub fn random_sine_field(rng: &mut ChaCha8Rng, amplitude: f64) -> SpatialFn {
    use std::f64::consts::PI;
    let mut modes = Vec::new();
    for j in 1..=3usize {
        for k in 1..=3usize {
            let a = amplitude * rng.gen_range(-1.0..1.0) / (j + k) as f64;
            modes.push((j as f64, k as f64, a));
        }
    }
    Arc::new(move |x: Vector2<f64>| {
        modes
            .iter()
            .map(|(j, k, a)| a * (j * PI * x.x).sin() * (k * PI * x.y).sin())
            .sum()
    })
}

/// Ordered random initial pairs: the upper field adds a squared (hence
/// non-negative) random bump. Both trajectories share every other
/// input; the report records the worst nodal ordering violation.
pub fn monotonicity_suite(
    prob: &ProblemSpec,
    mesh: &Arc<Mesh>,
    params: &SchemeParams,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if !prob.monotone {
        return Err(Error::invalid(format!(
            "problem '{}' does not declare the order-preservation hypotheses",
            prob.name
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotonicityReport {
        seed,
        trials: Vec::with_capacity(trials),
    };
    for trial in 0..trials {
        let lower = random_sine_field(&mut rng, 1.0);
        let bump_root = random_sine_field(&mut rng, 0.7);
        // Squared modes plus a uniform margin: at a degenerate contact
        // set, quadratic elements undershoot at truncation level, so
        // touching pairs would measure quadrature wiggle instead of
        // order preservation.
        let upper: SpatialFn = {
            let lower = Arc::clone(&lower);
            let bump_root = Arc::clone(&bump_root);
            Arc::new(move |x| lower(x) + 0.1 + bump_root(x) * bump_root(x))
        };
        let prob_lower = prob.clone().with_initial_condition(lower);
        let prob_upper = prob.clone().with_initial_condition(upper);
        let traj_lower = scheme::run(&prob_lower, mesh, params).map_err(|f| f.error)?;
        let traj_upper = scheme::run(&prob_upper, mesh, params).map_err(|f| f.error)?;

        let mut violation: f64 = 0.0;
        for (sl, su) in traj_lower.states.iter().zip(&traj_upper.states) {
            for (a, b) in sl.y.coeffs.iter().zip(su.y.coeffs.iter()) {
                violation = violation.max(a - b);
            }
        }
        report.trials.push(MonotonicityTrial {
            trial,
            violation: violation.max(0.0),
            z_sup: traj_upper.sup_norm(),
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------
// Consistency suite
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyReport {
    /// Residual decay ratios between consecutive levels as
    /// (r1, r2, r3) triples.
    pub fn ratios(&self) -> Vec<(f64, f64, f64)> {
        self.rows
            .windows(2)
            .map(|w| {
                (
                    w[0].r1 / w[1].r1,
                    w[0].r2 / w[1].r2,
                    w[0].r3 / w[1].r3,
                )
            })
            .collect()
    }

    /// True when every residual on the finest pair decays at first
    /// order (or already sits at the tolerance floor).
    pub fn pass(&self) -> bool {
        if self.rows.len() < 2 {
            return false;
        }
        let last = &self.rows[self.rows.len() - 1];
        let prev = &self.rows[self.rows.len() - 2];
        let ok = |coarse: f64, fine: f64| {
            (coarse <= 1e-9 && fine <= 1e-9) || coarse / fine >= CONSISTENCY_RATIO_GATE
        };
        ok(prev.r1, last.r1) && ok(prev.r2, last.r2) && ok(prev.r3, last.r3)
    }

    /// All residuals at tolerance floor on every level.
    pub fn exact(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.r1 <= 1e-9 && r.r2 <= 1e-9 && r.r3 <= 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,h,dt,r1,r2,r3\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.n, r.h, r.dt, r.r1, r.r2, r.r3);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<ConsistencyReport> {
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(Error::Config("consistency csv: expected 6 columns".into()));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad number '{s}'")))
            };
            rows.push(ConsistencyRow {
                n: cells[0]
                    .parse()
                    .map_err(|_| Error::Config("bad level".into()))?,
                h: num(cells[1])?,
                dt: num(cells[2])?,
                r1: num(cells[3])?,
                r2: num(cells[4])?,
                r3: num(cells[5])?,
            });
        }
        Ok(ConsistencyReport { rows })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>12} {:>13} {:>13} {:>13}",
            "n", "h", "dt", "r1", "r2", "r3"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>12.5e} {:>12.5e} {:>13.5e} {:>13.5e} {:>13.5e}",
                r.n, r.h, r.dt, r.r1, r.r2, r.r3
            );
        }
        for (k, (a, b, c)) in self.ratios().iter().enumerate() {
            let _ = writeln!(
                s,
                "ratio {} -> {}: r1 {a:.2}, r2 {b:.2}, r3 {c:.2}",
                self.rows[k].n, self.rows[k + 1].n
            );
        }
        if self.exact() {
            let _ = writeln!(s, "all residuals at tolerance floor (exact)");
        }
        s
    }
}

/// Truncation residual decay of the split step applied to a smooth
/// solution pair over a sequence of mesh levels.
pub fn consistency_suite(
    prob: &ProblemSpec,
    phi: &SmoothField,
    p_exact: &[SpaceTimeFn],
    levels: &[usize],
    params: &SchemeParams,
) -> Result<ConsistencyReport> {
    let mut rows = Vec::with_capacity(levels.len());
    for &n in levels {
        let mesh = build_unit_square_mesh(n).map_err(|e| at_level(n, e))?;
        let res = apply_discrete_operator(prob, phi, p_exact, &mesh, params, 0.0)
            .map_err(|e| at_level(n, e))?;
        rows.push(ConsistencyRow {
            n,
            h: res.h,
            dt: res.dt,
            r1: res.sup_r1,
            r2: res.sup_r2,
            r3: res.sup_r3,
        });
    }
    Ok(ConsistencyReport { rows })
}

/// The smooth test pair of the manufactured heat problem: the exact
/// decaying sine product and the multiplier slaved to it.
pub fn heat_test_pair() -> (SmoothField, Vec<SpaceTimeFn>) {
    use std::f64::consts::PI;
    let value = |x: Vector2<f64>, t: f64| (-t).exp() * (PI * x.x).sin() * (PI * x.y).sin();
    let phi = SmoothField {
        value: Arc::new(value),
        grad: Arc::new(move |x, t| {
            Vector2::new(
                PI * (-t).exp() * (PI * x.x).cos() * (PI * x.y).sin(),
                PI * (-t).exp() * (PI * x.x).sin() * (PI * x.y).cos(),
            )
        }),
        hessian: Arc::new(move |x, t| {
            let e = (-t).exp();
            let (sx, cx) = ((PI * x.x).sin(), (PI * x.x).cos());
            let (sy, cy) = ((PI * x.y).sin(), (PI * x.y).cos());
            Matrix2::new(
                -PI * PI * e * sx * sy,
                PI * PI * e * cx * cy,
                PI * PI * e * cx * cy,
                -PI * PI * e * sx * sy,
            )
        }),
        time_derivative: Arc::new(move |x, t| -value(x, t)),
    };
    let p: Vec<SpaceTimeFn> = vec![Arc::new(value)];
    (phi, p)
}
