//! `pdsf`: assign, verify and benchmark from the command line.
//!
//! Exit codes: 0 success, 1 parse or validation failure, 2 assignment
//! failure, 3 verification failure. Diagnostics go to standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pdsf_core::bench::{sweep, to_csv, BenchConfig};
use pdsf_core::metrics::DEFAULT_RESIDUAL_TOL;
use pdsf_core::report::{format_json, format_text, parse_solution, write_solution};
use pdsf_core::{parse_problem, run_pipeline, validate_problem, verify_feedback, verify_solution, AssignOptions, Order, Problem, Report};

const EXIT_INPUT: u8 = 1;
const EXIT_ASSIGN: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "pdsf", version, about = "Robust pole assignment for descriptor systems by PD state feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    InfFirst,
    FinFirst,
}

impl From<OrderArg> for Order {
    fn from(o: OrderArg) -> Order {
        match o {
            OrderArg::InfFirst => Order::InfFirst,
            OrderArg::FinFirst => Order::FinFirst,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, assign and verify one problem file.
    Assign {
        problem: PathBuf,
        /// Relative tolerance for rank decisions and the residual check.
        #[arg(long, default_value_t = DEFAULT_RESIDUAL_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = OrderArg::InfFirst)]
        order: OrderArg,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
        /// Also write F and G in the solution file format.
        #[arg(long)]
        solution_out: Option<PathBuf>,
    },
    /// Check stored gains against a problem file.
    Verify {
        problem: PathBuf,
        solution: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESIDUAL_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Random sweep over the admissible numbers of finite poles.
    Bench {
        #[arg(long)]
        n: usize,
        #[arg(long = "rankE")]
        rank_e: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = OrderArg::InfFirst)]
        order: OrderArg,
        /// Output path; standard output when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

struct Failure(u8, String);

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    parse_problem(&read(path)?).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn emit(rep: &Report, format: ReportFormat, gains: Option<(&pdsf_core::linalg::Mat, &pdsf_core::linalg::Mat)>) {
    match format {
        ReportFormat::Text => print!("{}", format_text(rep, gains)),
        ReportFormat::Json => println!("{}", format_json(rep)),
    }
}

fn verdict(rep: &Report) -> Result<(), Failure> {
    if rep.verdict {
        Ok(())
    } else {
        Err(Failure(EXIT_VERIFY, format!("verification failed: {}", rep.failures.join("; "))))
    }
}

fn assign(problem: &Path, tol: f64, order: Order, format: ReportFormat, solution_out: Option<&Path>) -> Result<(), Failure> {
    let p = load_problem(problem)?;
    let v = validate_problem(&p, tol);
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    if !v.passed() {
        let msgs: Vec<String> = v.failures.iter().map(|f| f.to_string()).collect();
        return Err(Failure(EXIT_INPUT, format!("validation failed: {}", msgs.join("; "))));
    }
    let opts = AssignOptions { order, rank_tol: tol, ..AssignOptions::default() };
    let sol = run_pipeline(&p, &opts).map_err(|e| Failure(EXIT_ASSIGN, format!("assignment failed: {e}")))?;
    if let Some(path) = solution_out {
        write(path, &write_solution(&sol.f, &sol.g))?;
    }
    let rep = verify_solution(&p, &sol, tol);
    emit(&rep, format, Some((&sol.f, &sol.g)));
    verdict(&rep)
}

fn verify(problem: &Path, solution: &Path, tol: f64, format: ReportFormat) -> Result<(), Failure> {
    let p = load_problem(problem)?;
    let (f, g) = parse_solution(&read(solution)?).map_err(|e| Failure(EXIT_INPUT, format!("{}: {e}", solution.display())))?;
    if f.shape() != (p.m(), p.n()) {
        return Err(Failure(EXIT_INPUT, format!("solution is {}x{}, problem needs {}x{}", f.nrows(), f.ncols(), p.m(), p.n())));
    }
    let rep = verify_feedback(&p, &f, &g, tol);
    emit(&rep, format, None);
    verdict(&rep)
}

fn bench(cfg: BenchConfig, csv: Option<&Path>) -> Result<(), Failure> {
    let text = to_csv(&sweep(&cfg));
    match csv {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Assign { problem, tol, order, report, solution_out } => assign(&problem, tol, order.into(), report, solution_out.as_deref()),
        Command::Verify { problem, solution, tol, report } => verify(&problem, &solution, tol, report),
        Command::Bench { n, rank_e, m, trials, seed, order, csv } => match BenchConfig::new(n, rank_e, m, trials, seed, order.into()) {
            Ok(cfg) => bench(cfg, csv.as_deref()),
            Err(e) => Err(Failure(EXIT_INPUT, e.to_string())),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("pdsf: {msg}");
            ExitCode::from(code)
        }
    }
}
