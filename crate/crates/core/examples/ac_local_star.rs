//! AC power: the scaling path is only checked near `s = 1`. Compare a case
//! with voltage headroom against one pinned at its lower voltage limit.
//!
//!     cargo run --example ac_local_star

use std::path::PathBuf;

use flowmarket::audit::AuditOptions;
use flowmarket::io::parse_case;
use flowmarket::ipm::SolverOptions;
use flowmarket::pipeline::solve_case;
use flowmarket::star::StarOptions;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases");
    for name in ["ac_2bus.json", "ac_2bus_binding.json"] {
        let case = parse_case(dir.join(name))?;
        let solved = solve_case(&case, None, &SolverOptions::default())?;
        let audit = solved.audit(&AuditOptions::default(), &StarOptions::default())?;
        let star = audit.star.as_ref().expect("AC problems carry a scaling map");
        println!("{name}");
        println!("  solver      {}", solved.outcome.status);
        println!("  epsilon*    {:?}", star.epsilon_star);
        if let Some(why) = &star.hypothesis_unmet {
            println!("  unmet       {why}");
        }
        println!("  revenue     {:.6e}", audit.revenue.revenue);
        println!("  verdict     {}", audit.verdict);
    }
    Ok(())
}
