//! Refinement study on the manufactured heat problem: errors against
//! the exact decaying sine product, with observed sup-norm rates.
//!
//! ```bash
//! cargo run -p splitfem --example heat_convergence
//! ```

use splitfem::harness::convergence_study;
use splitfem::problems::manufactured_heat;
use splitfem::scheme::SchemeParams;

fn main() -> splitfem::Result<()> {
    let prob = manufactured_heat();
    let mut params = SchemeParams::for_problem(&prob);
    params.final_time = 0.25;

    let table = convergence_study(&prob, &[8, 16, 32], &params)?;
    print!("{}", table.render());
    println!(
        "finest-pair sup-norm rate: {:.3}",
        table.final_rate().unwrap()
    );

    let out = std::path::Path::new("target/example-output");
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("heat_convergence.csv"), table.to_csv())?;
    println!("wrote {}/heat_convergence.csv", out.display());
    Ok(())
}
