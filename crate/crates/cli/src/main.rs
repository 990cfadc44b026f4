//! Command-line front end: run motion-design problems, run the verification
//! suite, and export Brachistochrone curves.
//!
//! Exit codes: 0 success, 1 divergence or failed checks, 2 input error.

mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use modus_core::brachistochrone as brach;
use modus_core::functional::MotionContext;
use modus_core::model::{load_problem, PredictorSpec};
use modus_core::pathspace::{PathKind, PathMesh};
use modus_core::solver::{solve_problem, SolveError};

#[derive(Parser)]
#[command(name = "modus", version, about = "Motion design for geometrically nonlinear structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a motion design problem and write report and CSV outputs.
    Run(RunArgs),
    /// Run the verification suite and print a pass/fail table.
    Verify,
    /// Brachistochrone curves (verification case).
    #[command(subcommand)]
    Brach(BrachCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Output directory for report.json and the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of path elements (stage breakpoints are rescaled).
    #[arg(long)]
    path_elements: Option<usize>,
    /// Override the path shape function degree.
    #[arg(long)]
    degree: Option<usize>,
    /// Override the path shape function family.
    #[arg(long, value_enum)]
    path_kind: Option<KindArg>,
    /// Override the residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the predictor: linear, preanalysis or hierarchical:4,8,...
    #[arg(long)]
    predictor: Option<String>,
}

#[derive(Copy, Clone, ValueEnum)]
enum KindArg {
    Lagrange,
    Bspline,
}

impl From<KindArg> for PathKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lagrange => PathKind::Lagrange,
            KindArg::Bspline => PathKind::BSpline,
        }
    }
}

#[derive(Args)]
struct BrachGeometry {
    #[arg(long, default_value_t = 1.0)]
    ax: f64,
    #[arg(long, default_value_t = 5.0)]
    ay: f64,
    #[arg(long, default_value_t = 10.0)]
    bx: f64,
    #[arg(long, default_value_t = 2.0)]
    by: f64,
    #[arg(long, default_value_t = 10.0)]
    gravity: f64,
}

impl BrachGeometry {
    fn problem(&self) -> brach::BrachProblem {
        brach::BrachProblem {
            a: (self.ax, self.ay),
            b: (self.bx, self.by),
            g: self.gravity,
        }
    }
}

#[derive(Subcommand)]
enum BrachCommand {
    /// Exact cycloid solution; emits (t, x, y) samples as CSV on stdout.
    Exact {
        #[command(flatten)]
        geometry: BrachGeometry,
        /// Number of curve samples.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Finite element solution; emits (s, x, y) samples as CSV on stdout.
    Fe {
        #[command(flatten)]
        geometry: BrachGeometry,
        #[arg(long, default_value_t = 15)]
        elements: usize,
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Lagrange)]
        kind: KindArg,
    },
}

fn parse_predictor(text: &str) -> Result<PredictorSpec, String> {
    match text {
        "linear" => Ok(PredictorSpec::Linear),
        "preanalysis" => Ok(PredictorSpec::Preanalysis),
        other => {
            if let Some(counts) = other.strip_prefix("hierarchical:") {
                let coarse_elements = counts
                    .split(',')
                    .map(|c| c.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("bad element count in '{other}': {e}"))?;
                Ok(PredictorSpec::Hierarchical { coarse_elements })
            } else {
                Err(format!(
                    "unknown predictor '{other}' (linear, preanalysis, hierarchical:N,M,...)"
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Verify => verify(),
        Command::Brach(cmd) => brach_cmd(cmd),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let problem_name = args.problem.display().to_string();
    let problem = match load_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let predictor = match args.predictor.as_deref().map(parse_predictor).transpose() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let problem = match problem.with_overrides(
        args.path_elements,
        args.degree,
        args.path_kind.map(Into::into),
        args.tol,
        predictor,
    ) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let t0 = Instant::now();
    match solve_problem(&problem) {
        Ok(sol) => {
            let wall = t0.elapsed().as_secs_f64();
            let ctx = match MotionContext::new(&problem) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let files = match report::build_run_files(&problem_name, &problem, &ctx, &sol, wall) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Err(e) = report::write_run_files(&args.out, &files) {
                eprintln!("error: cannot write outputs: {e}");
                return ExitCode::from(2);
            }
            println!(
                "converged after {} iterations: J = {:.6e} (predictor {:.6e}), outputs in {}",
                files.report.iterations,
                sol.j,
                sol.j_predictor,
                args.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let history = e.history();
            if !history.is_empty() {
                if let Err(io) = report::write_failure(&args.out, &problem_name, history, &e.to_string()) {
                    eprintln!("error: cannot write failure report: {io}");
                }
            }
            let code = match e {
                SolveError::Model(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn verify() -> ExitCode {
    let reports = modus_core::verify::run_all();
    let (table, all) = modus_core::verify::format_table(&reports);
    print!("{table}");
    if all {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("verification FAILED");
        ExitCode::from(1)
    }
}

fn brach_cmd(cmd: BrachCommand) -> ExitCode {
    match cmd {
        BrachCommand::Exact { geometry, samples } => {
            match brach::solve_exact(&geometry.problem()) {
                Ok(sol) => {
                    eprintln!(
                        "C1 = {:.6}, C2 = {:.6}, t_E = {:.6}, T = {:.9}",
                        sol.c1,
                        sol.c2,
                        sol.t_end,
                        sol.travel_time()
                    );
                    print!("{}", brach::curve_csv("t", &sol.sample(samples)));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        BrachCommand::Fe {
            geometry,
            elements,
            degree,
            kind,
        } => {
            let path = PathMesh {
                kind: kind.into(),
                degree,
                n_elements: elements,
                continuity_reductions: vec![],
            };
            match brach::solve_fe(&geometry.problem(), &path) {
                Ok(fe) => {
                    eprintln!(
                        "T = {:.9} after {} iterations, equal-length residual {:.1e}",
                        fe.time,
                        fe.history.last().map_or(0, |r| r.iteration),
                        fe.length_residual
                    );
                    print!("{}", brach::curve_csv("s", &fe.curve));
                    ExitCode::SUCCESS
                }
                Err(brach::BrachError::Solve(e)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
