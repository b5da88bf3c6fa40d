//! Command-line front end: `run` a problem, `converge` through mesh
//! levels, or `check` the structural suites. Exit code 0 means every
//! gate passed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splitfem::config::Config;
use splitfem::error::{Error, Result};
use splitfem::harness::{
    consistency_suite, convergence_study, heat_test_pair, monotonicity_suite, stability_suite,
    DEFAULT_SEED,
};
use splitfem::mesh::build_unit_square_mesh;
use splitfem::problems::{self, BuiltinOptions, ObstacleMode, ProblemSpec};
use splitfem::scheme::{run_strided, SchemeParams};

#[derive(Parser)]
#[command(
    name = "splitfem",
    about = "Operator-splitting finite element solver for constrained parabolic PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step a problem on one mesh and export the trajectory.
    Run {
        #[arg(long)]
        problem: Option<String>,
        /// Subdivisions per side of the unit square.
        #[arg(long)]
        n: Option<usize>,
        /// Final time.
        #[arg(long = "T")]
        final_time: Option<f64>,
        /// Stabilization constant.
        #[arg(long)]
        mu: Option<f64>,
        /// Time step coupling dt = dt-ratio * h.
        #[arg(long = "dt-ratio")]
        dt_ratio: Option<f64>,
        /// Path prefix for legacy-VTK field snapshots.
        #[arg(long)]
        vtk: Option<PathBuf>,
        /// Path for the per-step CSV record.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Refinement study against the problem's exact solution.
    Converge {
        #[arg(long)]
        problem: Option<String>,
        /// Comma-separated mesh levels, e.g. 8,16,32.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long = "T")]
        final_time: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Structural suites: consistency, stability, monotonicity.
    Check {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

/// Flag value, else config value, else default.
fn resolve<T: Copy + std::str::FromStr>(
    flag: Option<T>,
    cfg: &Config,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(cfg.get_parsed::<T>(key)?.unwrap_or(default))
}

fn builtin_options(cfg: &Config) -> Result<BuiltinOptions> {
    let defaults = BuiltinOptions::default();
    Ok(BuiltinOptions {
        nu: cfg.get_parsed("nu")?.unwrap_or(defaults.nu),
        c: cfg.get_parsed("c")?.unwrap_or(defaults.c),
        obstacle_height: cfg
            .get_parsed("obstacle-height")?
            .unwrap_or(defaults.obstacle_height),
        control_count: cfg
            .get_parsed("controls")?
            .unwrap_or(defaults.control_count),
        obstacle_mode: match cfg.get("obstacle-mode") {
            None => defaults.obstacle_mode,
            Some("complementarity") => ObstacleMode::Complementarity,
            Some("equality") => ObstacleMode::Equality,
            Some(other) => {
                return Err(Error::Config(format!(
                    "obstacle-mode must be 'complementarity' or 'equality', got '{other}'"
                )))
            }
        },
    })
}

fn make_problem(name: &str, cfg: &Config) -> Result<ProblemSpec> {
    problems::by_name(name, &builtin_options(cfg)?)
}

fn scheme_params(
    prob: &ProblemSpec,
    cfg: &Config,
    final_time: Option<f64>,
    mu: Option<f64>,
    dt_ratio: Option<f64>,
    default_t: f64,
) -> Result<SchemeParams> {
    let mut params = SchemeParams::for_problem(prob);
    params.final_time = resolve(final_time, cfg, "T", default_t)?;
    params.mu = resolve(mu, cfg, "mu", params.mu)?;
    params.dt_ratio = resolve(dt_ratio, cfg, "dt-ratio", params.dt_ratio)?;
    Ok(params)
}

fn cmd_run(
    problem: Option<String>,
    n: Option<usize>,
    final_time: Option<f64>,
    mu: Option<f64>,
    dt_ratio: Option<f64>,
    vtk: Option<PathBuf>,
    csv: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<bool> {
    let cfg = load_config(&config)?;
    let name = problem
        .or_else(|| cfg.get("problem").map(String::from))
        .unwrap_or_else(|| "reaction-diffusion".into());
    let prob = make_problem(&name, &cfg)?;
    let n = resolve(n, &cfg, "n", 16)?;
    let params = scheme_params(&prob, &cfg, final_time, mu, dt_ratio, 1.0)?;
    let stride: usize = cfg.get_parsed("vtk-stride")?.unwrap_or(1);

    let mesh = build_unit_square_mesh(n)?;
    let traj = run_strided(&prob, &mesh, &params, stride).map_err(|f| f.error)?;

    println!(
        "{name}: n={n} h={:.5} dt={:.5} steps={} final t={:.4}",
        traj.h,
        traj.dt,
        traj.records.len() - 1,
        traj.final_state().t
    );
    println!(
        "  sup|y| over run {:.6e}, max weak constraint residual {:.3e}",
        traj.sup_norm(),
        traj.max_constraint_residual()
    );

    if let Some(path) = csv.or_else(|| cfg.get("csv").map(PathBuf::from)) {
        std::fs::write(&path, traj.records_csv())?;
        println!("  wrote step records to {}", path.display());
    }
    if let Some(prefix) = vtk.or_else(|| cfg.get("vtk").map(PathBuf::from)) {
        for state in &traj.states {
            let path = prefix.with_file_name(format!(
                "{}_{:05}.vtk",
                prefix
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "field".into()),
                state.step
            ));
            state.y.write_vtk(&path, "state")?;
        }
        println!("  wrote {} field snapshots", traj.states.len());
    }
    Ok(true)
}

fn cmd_converge(
    problem: Option<String>,
    levels: Option<String>,
    final_time: Option<f64>,
    csv: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<bool> {
    let cfg = load_config(&config)?;
    let name = problem
        .or_else(|| cfg.get("problem").map(String::from))
        .unwrap_or_else(|| "manufactured-heat".into());
    let prob = make_problem(&name, &cfg)?;
    let levels_text = levels
        .or_else(|| cfg.get("levels").map(String::from))
        .unwrap_or_else(|| "8,16,32".into());
    let levels: Vec<usize> = levels_text
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad level '{s}'")))
        })
        .collect::<Result<_>>()?;
    let params = scheme_params(&prob, &cfg, final_time, None, None, 0.25)?;

    let table = convergence_study(&prob, &levels, &params)?;
    print!("{}", table.render());
    let pass = table.passes_rate_gate();
    match table.final_rate() {
        Some(rate) => println!(
            "finest-pair sup-norm rate {rate:.3} (gate {}): {}",
            splitfem::harness::RATE_GATE,
            verdict(pass)
        ),
        None => println!(
            "no rate available ({}): {}",
            if table.saturated() {
                "errors saturated"
            } else {
                "single level"
            },
            verdict(pass)
        ),
    }
    if let Some(path) = csv.or_else(|| cfg.get("csv").map(PathBuf::from)) {
        std::fs::write(&path, table.to_csv())?;
        println!("wrote table to {}", path.display());
    }
    Ok(pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_check(suite: Option<String>, seed: Option<u64>, config: Option<PathBuf>) -> Result<bool> {
    let cfg = load_config(&config)?;
    let suite = suite
        .or_else(|| cfg.get("suite").map(String::from))
        .unwrap_or_else(|| "all".into());
    let seed = resolve(seed, &cfg, "seed", DEFAULT_SEED)?;
    let mut all_pass = true;

    let run_consistency = suite == "consistency" || suite == "all";
    let run_stability = suite == "stability" || suite == "all";
    let run_monotonicity = suite == "monotonicity" || suite == "all";
    if !(run_consistency || run_stability || run_monotonicity) {
        return Err(Error::Config(format!(
            "unknown suite '{suite}' (expected consistency, stability, monotonicity or all)"
        )));
    }

    if run_consistency {
        let prob = problems::manufactured_heat();
        let (phi, p_exact) = heat_test_pair();
        let params = SchemeParams::for_problem(&prob);
        let report = consistency_suite(&prob, &phi, &p_exact, &[16, 32], &params)?;
        let pass = report.pass();
        all_pass &= pass;
        let (r1, r2, r3) = report.ratios()[0];
        println!(
            "consistency: residual ratios 16->32 r1={r1:.2} r2={r2:.2} r3={r3:.2} (gate {}): {}",
            splitfem::harness::CONSISTENCY_RATIO_GATE,
            verdict(pass)
        );
    }

    if run_stability {
        for name in problems::builtin_names() {
            let prob = make_problem(name, &cfg)?;
            let mut params = SchemeParams::for_problem(&prob);
            params.final_time = 1.0;
            let mesh = build_unit_square_mesh(16)?;
            let report = stability_suite(&prob, &mesh, &params)?;
            all_pass &= report.pass;
            println!(
                "stability [{name}]: sup {:.4e} <= bound {:.4e}: {}",
                report.sup,
                report.bound,
                verdict(report.pass)
            );
        }
    }

    if run_monotonicity {
        let prob = problems::manufactured_heat();
        let mut params = SchemeParams::for_problem(&prob);
        params.final_time = 0.1;
        let mesh = build_unit_square_mesh(8)?;
        let report = monotonicity_suite(&prob, &mesh, &params, 20, seed)?;
        let pass = report.pass();
        all_pass &= pass;
        println!(
            "monotonicity: 20 trials (seed {seed}), max violation {:.3e} (relative {:.3e}, gate {:.0e}): {}",
            report.max_violation(),
            report.max_relative(),
            splitfem::harness::MONOTONICITY_REL_GATE,
            verdict(pass)
        );
    }

    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            problem,
            n,
            final_time,
            mu,
            dt_ratio,
            vtk,
            csv,
            config,
        } => cmd_run(problem, n, final_time, mu, dt_ratio, vtk, csv, config),
        Command::Converge {
            problem,
            levels,
            final_time,
            csv,
            config,
        } => cmd_converge(problem, levels, final_time, csv, config),
        Command::Check {
            suite,
            seed,
            config,
        } => cmd_check(suite, seed, config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
