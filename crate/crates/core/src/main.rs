use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use flowmarket::audit::{AuditOptions, Verdict};
use flowmarket::io::report::render;
use flowmarket::io::{parse_case, Case, PointFile};
use flowmarket::ipm::{SolveOutcome, SolveStatus, SolverOptions};
use flowmarket::lp::LpStatus;
use flowmarket::model::{FamilyKind, Formulation};
use flowmarket::pipeline::{simplex_oracle, solve_case, Solved};
use flowmarket::star::{verify_star, StarMode, StarOptions};

#[derive(Parser)]
#[command(name = "flowmarket", version, about = "Network flow market solver and revenue adequacy auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Dc,
    Ac,
    Ogf,
}

impl From<Model> for Formulation {
    fn from(m: Model) -> Self {
        match m {
            Model::Dc => Formulation::Dc,
            Model::Ac => Formulation::Ac,
            Model::Ogf => Formulation::Ogf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gss,
    Lss,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Formulation to build; must match the case kind.
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Print the iteration log to stderr.
    #[arg(long, short)]
    verbose: bool,
}

impl SolveArgs {
    fn options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(t) = self.tol {
            o.tol_kkt = t;
        }
        if let Some(n) = self.max_iter {
            o.max_iter = n;
        }
        o
    }
}

fn print_log(outcome: &SolveOutcome) {
    eprintln!("{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "it", "stat", "feas", "compl", "mu", "step", "reg");
    for r in &outcome.kkt_residual_history {
        eprintln!(
            "{:4} {:10.3e} {:10.3e} {:10.3e} {:10.3e} {:10.3e} {:10.3e}",
            r.iteration, r.stationarity, r.feasibility, r.complementarity, r.barrier, r.step, r.regularization
        );
    }
}

fn solve_with(c: &Case, args: &SolveArgs) -> anyhow::Result<Solved> {
    let solved = solve_case(c, args.model.map(Into::into), &args.options())?;
    if args.verbose {
        print_log(&solved.outcome);
    }
    Ok(solved)
}

#[derive(Subcommand)]
enum Command {
    /// Build and solve a case.
    Solve {
        case: PathBuf,
        #[command(flatten)]
        solver: SolveArgs,
        /// Solution report (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Named primal values, readable by `star --point`.
        #[arg(long)]
        point_out: Option<PathBuf>,
    },
    /// Solve, then audit the solution for revenue adequacy.
    Audit {
        /// Case file; omit with --batch.
        case: Option<PathBuf>,
        #[command(flatten)]
        solver: SolveArgs,
        /// Audit report path, or a directory with --batch.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Audit every *.json case in a directory, in parallel.
        #[arg(long, conflicts_with = "case")]
        batch: Option<PathBuf>,
    },
    /// Check the scaling path of a solved or given point.
    Star {
        case: PathBuf,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Use this point instead of solving.
        #[arg(long)]
        point: Option<PathBuf>,
        #[command(flatten)]
        solver: SolveArgs,
    },
    /// Solve a DC case with the dense simplex method and print primal and duals.
    Oracle { case: PathBuf },
}

fn load(path: &Path) -> anyhow::Result<Case> {
    parse_case(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn solve_cmd(case: &Path, args: &SolveArgs, out: Option<&Path>, point_out: Option<&Path>) -> anyhow::Result<u8> {
    let c = load(case)?;
    let solved = solve_with(&c, args)?;
    let o = &solved.outcome;
    println!("status {} iterations {} objective {:.12e}", o.status, o.iterations, o.objective);
    let report = solved.report(&c);
    for (name, node) in &report.nodes {
        println!("{name} price {:.10e} net_inflow {:.10e}", node.price_physical, node.net_inflow_physical);
    }
    if let Some(p) = out {
        write(p, &render(&report)?)?;
    }
    if let Some(p) = point_out {
        write(p, &render(&PointFile::from_primal(&solved.problem, &o.point.primal))?)?;
    }
    Ok(if o.status == SolveStatus::Optimal { 0 } else { 2 })
}

/// Audits one case; returns the verdict line and exit code.
fn audit_one(case: &Path, args: &SolveArgs, report: Option<&Path>) -> anyhow::Result<(String, u8)> {
    let c = load(case)?;
    let solved = solve_with(&c, args)?;
    let audit = solved.audit(&AuditOptions::default(), &StarOptions::default())?;
    if let Some(p) = report {
        write(p, &render(&solved.audit_file(&c, &audit))?)?;
    }
    let r = audit.revenue.revenue * solved.problem.units().price * solved.problem.units().quantity;
    Ok(match &audit.verdict {
        Verdict::Consistent => (format!("ADEQUATE R={r:.10e}"), 0),
        v => (format!("{} R={r:.10e} [solver {}]", v, solved.outcome.status), 2),
    })
}

fn audit_cmd(case: Option<&Path>, args: &SolveArgs, report: Option<&Path>, batch: Option<&Path>) -> anyhow::Result<u8> {
    if let Some(dir) = batch {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        if let Some(out) = report {
            std::fs::create_dir_all(out)?;
        }
        let results: Vec<_> = files
            .par_iter()
            .map(|f| {
                let target = report.map(|d| d.join(f.file_name().unwrap_or_default()));
                (f, audit_one(f, args, target.as_deref()))
            })
            .collect();
        let mut code = 0;
        for (f, res) in results {
            match res {
                Ok((line, c)) => {
                    println!("{}: {line}", f.display());
                    code = code.max(c);
                }
                Err(e) => {
                    println!("{}: error: {e:#}", f.display());
                    code = code.max(1);
                }
            }
        }
        return Ok(code);
    }
    let Some(case) = case else {
        bail!("audit needs a case file or --batch <dir>");
    };
    let (line, code) = audit_one(case, args, report)?;
    println!("{line}");
    Ok(code)
}

fn star_cmd(
    case: &Path,
    samples: usize,
    mode: Option<Mode>,
    point: Option<&Path>,
    args: &SolveArgs,
) -> anyhow::Result<u8> {
    let c = load(case)?;
    let (problem, primal) = match point {
        Some(p) => {
            let problem = c.build(args.model.map(Into::into))?;
            let primal = PointFile::read(p)
                .with_context(|| format!("reading {}", p.display()))?
                .primal(&problem)?;
            (problem, primal)
        }
        None => {
            let solved = solve_with(&c, args)?;
            (solved.problem, solved.outcome.point.primal)
        }
    };
    let options = StarOptions {
        samples,
        mode: mode.map(|m| match m {
            Mode::Gss => StarMode::Gss,
            Mode::Lss => StarMode::Lss,
        }),
        ..StarOptions::default()
    };
    let path = verify_star(&problem, &primal, &options)?;
    println!("s max_violation feasible");
    for s in &path.samples {
        println!("{:.6} {:.3e} {}", s.s, s.max_violation, s.feasible);
    }
    if let Some(pc) = path.common_pressure {
        println!("common squared pressure {pc:.10e}");
    }
    if let Some(e) = path.epsilon_star {
        println!("epsilon* {e:.6}");
    }
    if let Some(why) = &path.hypothesis_unmet {
        println!("hypothesis unmet: {why}");
    }
    println!("{}", if path.verified { "VERIFIED" } else { "NOT VERIFIED" });
    Ok(if path.verified { 0 } else { 2 })
}

fn oracle_cmd(case: &Path) -> anyhow::Result<u8> {
    let c = load(case)?;
    let problem = c.build(Some(Formulation::Dc))?;
    let sol = simplex_oracle(&problem)?;
    if sol.lp.status != LpStatus::Optimal {
        println!("status {:?}", sol.lp.status);
        return Ok(2);
    }
    let u = problem.units();
    println!("status optimal objective {:.12e}", sol.lp.objective);
    for (name, v) in problem.variable_names().iter().zip(&sol.point.primal) {
        println!("{name} = {v:.12e}");
    }
    let exposed = &problem.variable_names()[problem.layout().exposed()];
    for (name, l) in exposed.iter().zip(&sol.point.lambda) {
        println!("price {name} = {:.12e}", l * u.price);
    }
    let g = problem.family(FamilyKind::SystemInequality);
    for (label, nu) in g.labels.iter().zip(&sol.point.nu_i) {
        if *nu != 0.0 {
            println!("dual {label} = {nu:.12e}");
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Solve {
            case,
            solver,
            out,
            point_out,
        } => solve_cmd(case, solver, out.as_deref(), point_out.as_deref()),
        Command::Audit {
            case,
            solver,
            report,
            batch,
        } => audit_cmd(case.as_deref(), solver, report.as_deref(), batch.as_deref()),
        Command::Star {
            case,
            samples,
            mode,
            point,
            solver,
        } => star_cmd(case, *samples, *mode, point.as_deref(), solver),
        Command::Oracle { case } => oracle_cmd(case),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOWMARKET_LOG", "off")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
