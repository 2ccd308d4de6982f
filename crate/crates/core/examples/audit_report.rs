//! Write the JSON audit report for a case, as `flowmarket audit --report`
//! does.
//!
//!     cargo run --example audit_report [case.json] > report.json

use std::path::PathBuf;

use flowmarket::audit::AuditOptions;
use flowmarket::io::parse_case;
use flowmarket::io::report::render;
use flowmarket::ipm::SolverOptions;
use flowmarket::pipeline::solve_case;
use flowmarket::star::StarOptions;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/gas_3junction.json"));
    let case = parse_case(&path)?;
    let solved = solve_case(&case, None, &SolverOptions::default())?;
    let audit = solved.audit(&AuditOptions::default(), &StarOptions::default())?;
    print!("{}", render(&solved.audit_file(&case, &audit))?);
    eprintln!("{}", audit.verdict);
    Ok(())
}
