//! `sgcheck MODEL QUERY [options]`: checks rPATL-style queries against a
//! stochastic game model.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use sgcheck::engines::{EngineError, EngineSettings};
use sgcheck::matrix::Criterion;
use sgcheck::query::EquilibriumKind;
use sgcheck::{check, parse_game_bytes, parse_props, parse_query, CheckError, CheckOptions, GameModel, PlayerNames};

use report::{human, per_state, CertificateReport, Number, ReportValue, RunReport};

const EXIT_BOUND_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EqKind {
    Ne,
    Ce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Crit {
    Sw,
    Sf,
}

#[derive(Debug, Parser)]
#[command(
    name = "sgcheck",
    version,
    about = "Model checking for turn-based and concurrent stochastic games"
)]
struct Args {
    /// Model file (.sgm).
    model: PathBuf,
    /// A query, or a .props file with one query per line.
    query: String,
    /// Convergence threshold on the largest change between sweeps.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long = "max-iters", default_value_t = 1_000_000)]
    max_iters: usize,
    /// Equilibrium kind when the query does not name one.
    #[arg(long, value_enum)]
    eq: Option<EqKind>,
    /// Equilibrium optimality criterion when the query does not name one.
    #[arg(long, value_enum)]
    criterion: Option<Crit>,
    /// Write the reports as JSON to this file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write synthesized strategies into this directory.
    #[arg(long = "export-strategy")]
    export_strategy: Option<PathBuf>,
    /// Verify synthesized strategies against best responses.
    #[arg(long)]
    certify: bool,
    /// Report values at every state, not only the initial one.
    #[arg(long = "per-state")]
    per_state: bool,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
    /// Worker threads for the engines.
    #[arg(long)]
    threads: Option<usize>,
}

/// Most severe outcome decides the exit code.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    #[default]
    Ok,
    BoundFailed,
    NotConverged,
    Input,
}

impl Status {
    fn code(self) -> ExitCode {
        ExitCode::from(match self {
            Status::Ok => 0,
            Status::BoundFailed => EXIT_BOUND_FAILED,
            Status::NotConverged => EXIT_NOT_CONVERGED,
            Status::Input => EXIT_INPUT,
        })
    }
}

fn read_model(path: &Path) -> Result<GameModel, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_game_bytes(&bytes).map_err(|errors| {
        errors
            .iter()
            .map(|e| format!("{}:{e}", path.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

/// Queries as `(text, parsed)`, from a props file if `arg` names one.
fn read_queries(arg: &str, names: &PlayerNames) -> Result<Vec<(String, sgcheck::Query)>, String> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?;
        let entries = parse_props(&text, names).map_err(|errors| {
            errors
                .iter()
                .map(|e| format!("{arg}:{e}"))
                .collect::<Vec<_>>()
                .join("\n")
        })?;
        return Ok(entries.into_iter().map(|e| (e.text, e.query)).collect());
    }
    let q = parse_query(arg, names).map_err(|errors| {
        errors
            .iter()
            .map(|e| format!("query:{e}"))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    Ok(vec![(arg.trim().to_string(), q)])
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn run_one(
    index: usize,
    text: &str,
    query: &sgcheck::Query,
    model: &GameModel,
    names: &PlayerNames,
    opts: &CheckOptions,
    args: &Args,
) -> (RunReport, Status) {
    let start = Instant::now();
    let result = check(model, query, opts, names);
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let outcome = match result {
        Ok(o) => o,
        Err(CheckError::Engine(EngineError::NotConverged { iterations, residual })) => {
            let mut r = RunReport::failed(
                text.to_string(),
                format!("value iteration did not converge after {iterations} iterations"),
                time_ms,
            );
            r.iterations = iterations;
            r.residual = Some(Number(residual));
            return (r, Status::NotConverged);
        }
        Err(e) => {
            return (
                RunReport::failed(text.to_string(), e.to_string(), time_ms),
                Status::Input,
            )
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {text}: {w}");
    }
    let mut strategy_files = Vec::new();
    if let Some(dir) = &args.export_strategy {
        if let Err(e) = fs::create_dir_all(dir) {
            return (
                RunReport::failed(text.to_string(), format!("{}: {e}", dir.display()), time_ms),
                Status::Input,
            );
        }
        for s in &outcome.strategies {
            let path = dir.join(format!("q{}_{}.strategy", index + 1, file_safe(&s.player)));
            if let Err(e) = fs::write(&path, &s.text) {
                return (
                    RunReport::failed(text.to_string(), format!("{}: {e}", path.display()), time_ms),
                    Status::Input,
                );
            }
            strategy_files.push(path.display().to_string());
        }
    }
    let status = match (outcome.converged, outcome.satisfied) {
        (false, _) => Status::NotConverged,
        (true, Some(false)) => Status::BoundFailed,
        _ => Status::Ok,
    };
    let report = RunReport {
        query: text.to_string(),
        mode: Some(outcome.mode),
        value: Some(ReportValue::from(outcome.value)),
        satisfied: outcome.satisfied,
        per_state: args.per_state.then(|| per_state(&outcome.per_state)),
        iterations: outcome.iterations,
        residual: Some(Number(outcome.residual)),
        converged: outcome.converged,
        time_ms,
        strategy_files,
        certificate: outcome.certificate.map(|c| CertificateReport {
            gaps: [Number(c.gaps[0]), Number(c.gaps[1])],
            pass: c.pass,
        }),
        error: None,
    };
    (report, status)
}

fn run(args: &Args) -> Status {
    let model = match read_model(&args.model) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return Status::Input;
        }
    };
    let names = PlayerNames::numbered(model.players);
    let queries = match read_queries(&args.query, &names) {
        Ok(q) => q,
        Err(e) => {
            eprintln!("{e}");
            return Status::Input;
        }
    };
    let settings = EngineSettings {
        epsilon: args.epsilon,
        max_iterations: args.max_iters,
        kind: match args.eq {
            Some(EqKind::Ce) => EquilibriumKind::Correlated,
            _ => EquilibriumKind::Nash,
        },
        criterion: match args.criterion {
            Some(Crit::Sf) => Criterion::SocialFairness,
            _ => Criterion::SocialWelfare,
        },
        threads: args.threads,
    };
    if let Err(e) = settings.validate() {
        eprintln!("{e}");
        return Status::Input;
    }
    let opts = CheckOptions {
        settings,
        certify: args.certify,
    };

    let mut worst = Status::Ok;
    let mut reports = Vec::with_capacity(queries.len());
    for (i, (text, q)) in queries.iter().enumerate() {
        let (report, status) = run_one(i, text, q, &model, &names, &opts, args);
        if report.error.is_some() {
            eprint!("{}", human(&report));
        } else if !args.quiet {
            print!("{}", human(&report));
        }
        worst = worst.max(status);
        reports.push(report);
    }
    if let Some(path) = &args.json {
        let written = serde_json::to_string_pretty(&reports)
            .map_err(|e| e.to_string())
            .and_then(|s| fs::write(path, s + "\n").map_err(|e| format!("{}: {e}", path.display())));
        if let Err(e) = written {
            eprintln!("{e}");
            return Status::Input;
        }
    }
    worst
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(&args).code()
}
