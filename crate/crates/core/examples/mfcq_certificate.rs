//! Constraint qualification certificates on small hand-built systems and
//! on a solved network.
//!
//!     cargo run --example mfcq_certificate

use std::path::PathBuf;

use flowmarket::audit::mfcq_certificate;
use flowmarket::io::parse_case;
use flowmarket::ipm::SolverOptions;
use flowmarket::model::{NlpBuilder, PrimalDualPoint, Row, VarRole, VariableLayout};
use flowmarket::pipeline::solve_case;

/// One exposed `x` tied to `y`, with `lo ≤ y ≤ hi`, evaluated at `y = 0`.
fn boxed(lo: f64, hi: f64) -> flowmarket::Result<()> {
    let mut b = NlpBuilder::new(VariableLayout::new(0, 1, 1));
    b.exposed(0, "x", 0.0).dependent(0, "y", VarRole::Other, 0.0);
    b.equality("link", Row::new().linear(0, 1.0).linear(1, -1.0));
    b.inequality("y_max", Row::new().linear(1, 1.0).constant(-hi));
    b.inequality("y_min", Row::new().linear(1, -1.0).constant(lo));
    let p = b.build()?;
    let cert = mfcq_certificate(&p, &PrimalDualPoint::with_primal(&p, vec![0.0, 0.0]), 1e-6)?;
    println!(
        "box [{lo}, {hi}]: active {:?}, t* {:?}, holds {}",
        cert.active, cert.t_star, cert.holds
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    boxed(-1.0, 1.0)?;
    boxed(0.0, 1.0)?;
    boxed(0.0, 0.0)?;

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/gas_3junction.json");
    let case = parse_case(path)?;
    let solved = solve_case(&case, None, &SolverOptions::default())?;
    let cert = mfcq_certificate(&solved.problem, &solved.outcome.point, 1e-6)?;
    println!(
        "gas_3junction: rank {}/{} (σ in [{:.3e}, {:.3e}]), active {:?}, t* {:?}, holds {}",
        cert.equality_rank,
        cert.equality_rows,
        cert.min_singular_value,
        cert.max_singular_value,
        cert.active,
        cert.t_star,
        cert.holds
    );
    Ok(())
}
