//! Order preservation of the split step: seeded random ordered initial
//! pairs stay nodally ordered along the whole trajectory.
//!
//! ```bash
//! cargo run -p splitfem --example monotonicity_check
//! ```

use splitfem::harness::{monotonicity_suite, DEFAULT_SEED, MONOTONICITY_REL_GATE};
use splitfem::mesh::build_unit_square_mesh;
use splitfem::problems::manufactured_heat;
use splitfem::scheme::SchemeParams;

fn main() -> splitfem::Result<()> {
    let prob = manufactured_heat();
    let mesh = build_unit_square_mesh(8)?;
    let mut params = SchemeParams::for_problem(&prob);
    params.final_time = 0.1;

    let report = monotonicity_suite(&prob, &mesh, &params, 20, DEFAULT_SEED)?;
    for t in &report.trials {
        println!(
            "trial {:>2}: ordering violation {:.3e} (upper trajectory sup {:.3})",
            t.trial, t.violation, t.z_sup
        );
    }
    println!(
        "max violation {:.3e}, relative {:.3e}, gate {MONOTONICITY_REL_GATE:.0e}: {}",
        report.max_violation(),
        report.max_relative(),
        if report.pass() { "ordered" } else { "VIOLATED" }
    );
    Ok(())
}
