//! Command-line experiment runner for `dptree`.
//!
//! Every subcommand writes `<command>.csv` and `<command>.json` into the
//! output directory. Exit codes: 0 success, 1 I/O or numerical failure,
//! 2 invalid configuration, 3 depth above the work cap.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Command, Settings};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dptree", version, about = "Directed polymers on disordered binary trees")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Critical inverse temperature and derived constants.
    Critical(Flags),
    /// Exact partition functions per replica.
    Enumerate(Flags),
    /// Exact draws from the critical polymer measure of one environment.
    Gibbs(Flags),
    /// Both sides of the many-to-one identity.
    Spine(Flags),
    /// Walk functional against its Brownian surrogate.
    RwFunctional(Flags),
    /// Fractional moments over an n grid, with power-law fits.
    Moments(Flags),
    /// Refit a moments CSV.
    FitReport(Flags),
}

/// Flags override the config file, which overrides the defaults. Values
/// are kept as text so that every source goes through the same parser.
#[derive(Debug, Args)]
struct Flags {
    /// `key = value` file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gaussian, two-point, uniform or rademacher.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    env_mean: Option<String>,
    #[arg(long)]
    env_std: Option<String>,
    #[arg(long)]
    p_plus: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated, strictly increasing.
    #[arg(long, visible_alias = "ngrid")]
    n_grid: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// plus, minus or none.
    #[arg(long)]
    sign: Option<String>,
    /// Comma-separated moment orders in (0, 1].
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    eps_prime: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    /// max or min.
    #[arg(long)]
    star: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    replica: Option<String>,
    #[arg(long, visible_alias = "master-seed")]
    seed: Option<String>,
    /// Threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    workers: Option<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<String>,
    /// Lift the depth caps on exhaustive traversals.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    slope_tol: Option<String>,
    /// Input CSV for fit-report.
    #[arg(long)]
    input: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("env", &self.env),
            ("env_mean", &self.env_mean),
            ("env_std", &self.env_std),
            ("p_plus", &self.p_plus),
            ("n", &self.n),
            ("n_grid", &self.n_grid),
            ("delta", &self.delta),
            ("sign", &self.sign),
            ("gamma", &self.gamma),
            ("eps", &self.eps),
            ("eps_prime", &self.eps_prime),
            ("kappa", &self.kappa),
            ("star", &self.star),
            ("replicas", &self.replicas),
            ("samples", &self.samples),
            ("replica", &self.replica),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("output", &self.output),
            ("tol", &self.tol),
            ("slope_tol", &self.slope_tol),
            ("input", &self.input),
        ]
    }
}

/// Resolve settings for `command` from an optional config file and flags.
fn resolve(command: Command, flags: &Flags) -> Result<Settings, CliError> {
    let mut s = Settings::defaults(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        s.apply_text(&text)?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            s.apply(key, v)?;
        }
    }
    if flags.force {
        s.force = true;
    }
    s.validate()?;
    Ok(s)
}

/// Run one command on resolved settings and write its artifacts.
pub fn execute(s: &Settings) -> Result<output::Written, CliError> {
    let (table, results) = match s.command {
        Command::Critical => commands::critical(s),
        Command::Enumerate => commands::enumerate(s),
        Command::Gibbs => commands::gibbs(s),
        Command::Spine => commands::spine(s),
        Command::RwFunctional => commands::rw_functional(s),
        Command::Moments => commands::moments(s),
        Command::FitReport => commands::fit_report(s),
    }?;
    output::write_artifacts(s, &table, results)
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = match &cli.command {
        Sub::Critical(f) => (Command::Critical, f),
        Sub::Enumerate(f) => (Command::Enumerate, f),
        Sub::Gibbs(f) => (Command::Gibbs, f),
        Sub::Spine(f) => (Command::Spine, f),
        Sub::RwFunctional(f) => (Command::RwFunctional, f),
        Sub::Moments(f) => (Command::Moments, f),
        Sub::FitReport(f) => (Command::FitReport, f),
    };
    match resolve(command, flags).and_then(|s| execute(&s)) {
        Ok(written) => {
            println!("{}", written.csv.display());
            println!("{}", written.json.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
