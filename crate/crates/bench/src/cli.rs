//! Command-line entry point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use borok::integrator::{load_tableau, stability_function_eval, MethodTableau, TableauError};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::config::ExperimentConfig;
use crate::experiment::{run_convergence, run_integrate, run_work_precision, ExperimentError, RunOptions};
use crate::output::{write_convergence, write_integrate, write_work_precision};
use crate::reference::ReferenceError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "borok-bench", version, about = "ROK/BOROK experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configuration at every step size and tolerance of the sweep.
    Integrate(RunArgs),
    /// Fixed-step convergence table against a reference solution.
    Convergence(RunArgs),
    /// Adaptive runs over the tolerance sweep.
    WorkPrecision(RunArgs),
    /// Load a tableau file (or built-in name) and report its properties.
    ValidateTableau {
        /// Path to a tableau file, or `rok2` / `rok4a`.
        tableau: String,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the problem seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Only run configurations whose label matches this glob.
    #[arg(long = "label-filter")]
    label_filter: Option<String>,
}

/// Parses `args` (including the program name) and runs the command. CSV goes
/// to `stdout` unless `--out` is given; messages go to `stderr`.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                EXIT_CONFIG
            } else {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            };
        }
    };
    match cli.command {
        Command::ValidateTableau { tableau } => validate_tableau(&tableau, stdout, stderr),
        Command::Integrate(a) => run(&a, stdout, stderr, Kind::Integrate),
        Command::Convergence(a) => run(&a, stdout, stderr, Kind::Convergence),
        Command::WorkPrecision(a) => run(&a, stdout, stderr, Kind::WorkPrecision),
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Integrate,
    Convergence,
    WorkPrecision,
}

fn run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write, kind: Kind) -> i32 {
    let mut cfg = match ExperimentConfig::from_file(&args.config) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "error: --config {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(pattern) = &args.label_filter {
        match glob::Pattern::new(pattern) {
            Ok(p) => cfg.filter_labels(&p),
            Err(e) => {
                let _ = writeln!(stderr, "error: --label-filter {pattern:?}: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    let opts = RunOptions::from_env();
    let mut buf = Vec::new();
    let result = match kind {
        Kind::Integrate => run_integrate(&cfg, &opts)
            .map(|rows| write_integrate(&mut buf, &rows).map(|_| rows.iter().all(|r| r.status == "ok"))),
        Kind::Convergence => run_convergence(&cfg, &opts)
            .map(|rows| write_convergence(&mut buf, &rows).map(|_| rows.iter().all(|r| r.status == "ok"))),
        Kind::WorkPrecision => run_work_precision(&cfg, &opts)
            .map(|rows| write_work_precision(&mut buf, &rows).map(|_| rows.iter().all(|r| r.status == "ok"))),
    };
    let ok = match result {
        Ok(Ok(ok)) => ok,
        Ok(Err(e)) => {
            let _ = writeln!(stderr, "error: cannot format output: {e}");
            return EXIT_RUN_FAILURE;
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return experiment_exit_code(&e);
        }
    };
    if let Err(e) = emit(&buf, args.out.as_deref(), stdout) {
        let _ = writeln!(stderr, "error: cannot write output: {e}");
        return EXIT_RUN_FAILURE;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_RUN_FAILURE
    }
}

fn experiment_exit_code(e: &ExperimentError) -> i32 {
    match e {
        ExperimentError::Reference(ReferenceError::Io { .. } | ReferenceError::Unavailable(_)) => EXIT_RUN_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn emit(buf: &[u8], out: Option<&Path>, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(buf)?;
            w.flush()
        }
        None => stdout.write_all(buf),
    }
}

fn validate_tableau(name: &str, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let loaded = match MethodTableau::builtin(name) {
        Err(TableauError::Unknown(_)) => std::fs::read_to_string(name)
            .map_err(|e| format!("cannot read {name}: {e}"))
            .and_then(|src| load_tableau(&src).map_err(|e| e.to_string())),
        other => other.map_err(|e| e.to_string()),
    };
    let tab = match loaded {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let embedded = tab.b_hat.as_ref().map_or("none".to_string(), |_| tab.order_hat.to_string());
    let r_inf = stability_function_eval(&tab, Complex64::new(-1e12, 0.0))
        .map(|r| format!("{:e}", r.norm()))
        .unwrap_or_else(|_| "singular".into());
    let _ = writeln!(
        stdout,
        "{}: {} stages, order {}, embedded order {embedded}, gamma {}, |R(-1e12)| = {r_inf}",
        tab.name, tab.s, tab.order, tab.gamma_diag
    );
    EXIT_OK
}
