//! Trajectory sup-norm against the declared linear-growth bound
//! for every builtin problem.
//!
//! ```bash
//! cargo run -p splitfem --example stability_check
//! ```

use splitfem::harness::stability_suite;
use splitfem::mesh::build_unit_square_mesh;
use splitfem::problems::{builtin_names, by_name, BuiltinOptions};
use splitfem::scheme::SchemeParams;

fn main() -> splitfem::Result<()> {
    let mesh = build_unit_square_mesh(16)?;
    for name in builtin_names() {
        let prob = by_name(name, &BuiltinOptions::default())?;
        let mut params = SchemeParams::for_problem(&prob);
        params.final_time = 1.0;
        let report = stability_suite(&prob, &mesh, &params)?;
        println!(
            "{:<20} initial sup {:.4e}  trajectory sup {:.4e}  bound {:.4e}  {}",
            report.problem,
            report.initial_sup,
            report.sup,
            report.bound,
            if report.pass { "within bound" } else { "VIOLATED" }
        );
    }
    Ok(())
}
