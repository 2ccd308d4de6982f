//! Solve a congested three-bus DC network and split the merchandising
//! surplus into line rents.
//!
//!     cargo run --example dc_congestion [case.json]

use std::path::PathBuf;

use flowmarket::audit::AuditOptions;
use flowmarket::io::parse_case;
use flowmarket::ipm::SolverOptions;
use flowmarket::pipeline::solve_case;
use flowmarket::star::StarOptions;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/dc_3bus.json"));
    let case = parse_case(&path)?;
    let solved = solve_case(&case, None, &SolverOptions::default())?;
    let report = solved.report(&case);
    println!("{} after {} iterations, cost {:.2}", solved.outcome.status, solved.outcome.iterations, solved.outcome.objective);
    for (node, e) in &report.nodes {
        println!("  {node:8} LMP {:8.3} $/MWh   injection {:8.2} MW", e.price_physical, e.net_inflow_physical);
    }

    let audit = solved.audit(&AuditOptions::default(), &StarOptions::default())?;
    let u = solved.problem.units();
    println!("merchandising surplus {:.2} $/h", audit.revenue.revenue * u.price * u.quantity);
    if let Some(d) = &audit.revenue.decomposition {
        for (row, rent) in &d.rows {
            let rent = rent * u.price * u.quantity;
            if rent.abs() >= 0.005 {
                println!("  {row:16} {rent:10.2}");
            }
        }
    }
    println!("verdict: {}", audit.verdict);
    Ok(())
}
