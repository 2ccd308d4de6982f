//! DC problems are linear, so the dense simplex gives an independent check
//! of the interior-point prices.
//!
//!     cargo run --example simplex_oracle [case.json]

use std::path::PathBuf;

use flowmarket::io::parse_case;
use flowmarket::ipm::{solve, SolverOptions};
use flowmarket::pipeline::simplex_oracle;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/dc_3bus.json"));
    let problem = parse_case(&path)?.build(None)?;
    let lp = simplex_oracle(&problem)?;
    let ipm = solve(&problem, &SolverOptions::default())?;
    println!("objective  simplex {:.10e}  interior point {:.10e}", lp.lp.objective, ipm.objective);

    let price = problem.units().price;
    let names = &problem.variable_names()[problem.layout().exposed()];
    let mut worst = 0.0f64;
    for ((name, a), b) in names.iter().zip(&lp.point.lambda).zip(&ipm.point.lambda) {
        println!("  {name:8} {:12.6} {:12.6}", a * price, b * price);
        worst = worst.max((a - b).abs() * price);
    }
    println!("largest price gap {worst:.2e} $/MWh");
    Ok(())
}
