//! Gas line with one compressor: solve, then walk the scaling path toward
//! the common squared pressure and watch the compression ratio relax.
//!
//!     cargo run --example gas_compressor [case.json]

use std::path::PathBuf;

use flowmarket::io::parse_case;
use flowmarket::ipm::SolverOptions;
use flowmarket::model::VarRole;
use flowmarket::pipeline::solve_case;
use flowmarket::star::{scale_point, verify_star, StarOptions};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases/gas_3junction.json"));
    let case = parse_case(&path)?;
    let solved = solve_case(&case, None, &SolverOptions::default())?;
    let p = &solved.problem;
    let z = &solved.outcome.point.primal;
    println!("{} in {} iterations, cost {:.6}", solved.outcome.status, solved.outcome.iterations, solved.outcome.objective);

    let names = p.variable_names();
    let ratios: Vec<usize> = (0..p.n()).filter(|&j| matches!(p.roles()[j], VarRole::Ratio { .. })).collect();
    let pc = p.formulation().and_then(|f| f.common_pressure);
    println!("common squared pressure {pc:?}");
    print!("{:>5}", "s");
    for &j in &ratios {
        print!(" {:>12}", names[j]);
    }
    println!();
    for k in 0..=10 {
        let s = k as f64 / 10.0;
        let zs = scale_point(p, z, s)?;
        print!("{s:5.2}");
        for &j in &ratios {
            print!(" {:12.6}", zs[j]);
        }
        println!();
    }

    let path = verify_star(p, z, &StarOptions::default())?;
    println!(
        "{} samples, worst violation {:.2e}, verified {}",
        path.samples.len(),
        path.max_violation,
        path.verified
    );
    Ok(())
}
