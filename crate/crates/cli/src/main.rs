//! `zdmix`: reproducible experiment runner.
//!
//! Every experiment reads a strict JSON config, writes `results.json` plus
//! CSV tables and SVG curves into the output directory, and exits with 0
//! when all hard verdicts pass, 1 when one fails, 2 on a config or
//! validation error and 3 on a runtime error.

mod bundle;
mod config;
mod experiments;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use bundle::{Build, ErrorRecord, Results, Status, Timing};
use config::Experiment;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("invalid system: {0}")]
    Validation(zdmix_core::Error),
    #[error(transparent)]
    Runtime(#[from] zdmix_core::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("no results.json in {} or its subdirectories", .0.display())]
    MissingBundle(PathBuf),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) | CliError::Validation(_) => 2,
            _ => 3,
        }
    }

    fn record(&self) -> ErrorRecord {
        let (kind, violations) = match self {
            CliError::Schema(v) => ("schema", v.clone()),
            CliError::Validation(_) => ("validation", Vec::new()),
            CliError::Runtime(_) => ("runtime", Vec::new()),
            CliError::Io(_) => ("io", Vec::new()),
            CliError::MissingBundle(_) => ("missing_bundle", Vec::new()),
        };
        ErrorRecord {
            kind: kind.into(),
            message: self.to_string(),
            violations,
        }
    }
}

#[derive(Parser)]
#[command(name = "zdmix", version, about = "Mixing-rate experiments on Z^2-extensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (a hint; results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the config and the table or chain it describes.
    Validate(RunArgs),
    /// Estimate the diffusion matrix Σ.
    Sigma(RunArgs),
    /// Local limit theorem table n·p(S_n = ℓ) against Φ_B.
    Llt(RunArgs),
    /// Mixing-rate report n·I_n(u, v) against Φ_B(0)∫u∫v.
    Mixing(RunArgs),
    /// Return-time survival curve.
    Tail(RunArgs),
    /// Exact renewal identities on a Markov extension.
    OracleIdentities(RunArgs),
    /// Error-scaling scan of the local correlation expansion.
    PropScan(RunArgs),
    /// Run the experiment named in the config.
    Run(RunArgs),
    /// Print the verdicts of existing bundles without recomputing.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Bundle directory, or a directory of bundles.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, experiment) = match &cli.command {
        Command::Validate(a) => (a, Some(Experiment::Validate)),
        Command::Sigma(a) => (a, Some(Experiment::Sigma)),
        Command::Llt(a) => (a, Some(Experiment::Llt)),
        Command::Mixing(a) => (a, Some(Experiment::Mixing)),
        Command::Tail(a) => (a, Some(Experiment::Tail)),
        Command::OracleIdentities(a) => (a, Some(Experiment::OracleIdentities)),
        Command::PropScan(a) => (a, Some(Experiment::PropScan)),
        Command::Run(a) => (a, None),
        Command::Report(r) => return ExitCode::from(report(&r.out)),
    };
    ExitCode::from(run(args, experiment, cli.workers, cli.quiet))
}

fn run(args: &RunArgs, experiment: Option<Experiment>, workers: Option<usize>, quiet: bool) -> u8 {
    let start = Instant::now();
    let cfg = match config::load(&args.config, experiment) {
        Ok(cfg) => cfg,
        Err(e) => {
            let name = experiment.map(|e| e.name()).unwrap_or("unknown");
            return fail(args.out.as_deref(), name, Value::Null, &e, start, workers.unwrap_or(1));
        }
    };
    let name = cfg.experiment.name();
    let echo = serde_json::to_value(&cfg).unwrap_or(Value::Null);
    let Some(out) = args.out.clone().or_else(|| cfg.output.clone()) else {
        let e = CliError::Schema(vec!["output: give --out or set output in the config".into()]);
        return fail(None, name, echo, &e, start, 1);
    };
    let workers = workers
        .or(cfg.params.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => return fail(Some(&out), name, echo, &CliError::Io(e.to_string()), start, workers),
    };
    let ctx = experiments::Ctx { cfg: &cfg, quiet };
    let outcome = match pool.install(|| experiments::run(&ctx)) {
        Ok(o) => o,
        Err(e) => return fail(Some(&out), name, echo, &e, start, workers),
    };
    let files = match bundle::write_outcome(&out, &outcome) {
        Ok(f) => f,
        Err(e) => return fail(Some(&out), name, echo, &e, start, workers),
    };
    let status = Results::status_of(&outcome.verdicts);
    let results = Results {
        experiment: name.into(),
        status,
        build: Build::current(),
        config: echo,
        verdicts: outcome.verdicts,
        results: outcome.results,
        files,
        error: None,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
            workers,
        },
    };
    if let Err(e) = bundle::write_results(&out, &results) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    if !quiet {
        print_bundle(&out, &results);
    }
    match status {
        Status::Pass => 0,
        _ => 1,
    }
}

/// Reports `e` on stderr and, when an output directory is known, records it
/// in `results.json`.
fn fail(out: Option<&Path>, experiment: &str, config: Value, e: &CliError, start: Instant, workers: usize) -> u8 {
    eprintln!("error: {e}");
    if let Some(dir) = out {
        let results = Results {
            experiment: experiment.into(),
            status: Status::Error,
            build: Build::current(),
            config,
            verdicts: Vec::new(),
            results: Value::Null,
            files: Vec::new(),
            error: Some(e.record()),
            timing: Timing {
                wall_seconds: start.elapsed().as_secs_f64(),
                workers,
            },
        };
        if let Err(w) = bundle::write_results(dir, &results) {
            eprintln!("error: could not write the error record: {w}");
        }
    }
    e.exit_code()
}

fn print_bundle(dir: &Path, r: &Results) {
    match r.status {
        Status::Pass => println!("PASS {} ({})", r.experiment, dir.display()),
        Status::Fail => println!("FAIL {} ({})", r.experiment, dir.display()),
        Status::Error => {
            let msg = r.error.as_ref().map_or("", |e| e.message.as_str());
            println!("ERROR {} ({}): {msg}", r.experiment, dir.display());
        }
    }
    for v in &r.verdicts {
        if !v.pass {
            let tag = if v.hard { "FAIL" } else { "note" };
            println!("  {tag} {}: {}", v.name, v.detail);
        }
    }
}

fn report(dir: &Path) -> u8 {
    let bundles = match bundle::find_bundles(dir) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let mut code = 0;
    for (path, r) in &bundles {
        print_bundle(path.parent().unwrap_or(dir), r);
        code = code.max(match r.status {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 3,
        });
    }
    code
}
