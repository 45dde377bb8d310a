//! The `levelfit` command line: one subcommand per pipeline stage, all
//! exchanging the crate's `#`-headed text formats.

pub mod config;
mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{load_config, parse_config_file, ConfigError, Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "levelfit",
    about = "Spacing statistics of spectra with missing levels",
    disable_version_flag = true
)]
pub struct Cli {
    /// Print the tool version and the provenance of the bundled table.
    #[arg(long)]
    pub version: bool,
    /// Read options from a key=value file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample beta-Hermite matrices and write their spectra.
    Generate(Flags),
    /// Unfold a spectrum to unit mean spacing.
    Unfold(Flags),
    /// Keep a random fraction f of the levels.
    Thin(Flags),
    /// Spacings of a given order.
    Spacings(Flags),
    /// Density histogram of spacings.
    Hist(Flags),
    /// Tabulate P(s; q, f).
    Model(Flags),
    /// Distance between a histogram and the model.
    Chi2(Flags),
    /// Calibrate the order-n spacing variances by Monte Carlo.
    #[command(name = "calibrate-sigma")]
    CalibrateSigma(Flags),
    /// Solve the mean condition for b1 or b2.
    #[command(name = "solve-bn")]
    SolveBn(Flags),
    /// Fit (q, f) to a histogram.
    Fit(Flags),
    /// Fit every member of a simulated ensemble.
    #[command(name = "ensemble-fit")]
    EnsembleFit(Flags),
}

impl Command {
    pub fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Generate(f) => ("generate", f),
            Command::Unfold(f) => ("unfold", f),
            Command::Thin(f) => ("thin", f),
            Command::Spacings(f) => ("spacings", f),
            Command::Hist(f) => ("hist", f),
            Command::Model(f) => ("model", f),
            Command::Chi2(f) => ("chi2", f),
            Command::CalibrateSigma(f) => ("calibrate-sigma", f),
            Command::SolveBn(f) => ("solve-bn", f),
            Command::Fit(f) => ("fit", f),
            Command::EnsembleFit(f) => ("ensemble-fit", f),
        }
    }
}

/// Failure of one invocation, mapped onto the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad options: status 2.
    Usage(String),
    /// Error raised while running: status 1.
    Runtime(levelfit::Error),
}

impl Failure {
    pub fn status(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    /// Single-line, machine-readable description.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage".to_string(), m.clone()),
            Failure::Runtime(e) => (error_kind(e).to_string(), e.to_string()),
        };
        format!(
            "error: kind={kind} message={}",
            serde_json::Value::String(msg.replace('\n', " "))
        )
    }
}

impl From<levelfit::Error> for Failure {
    fn from(e: levelfit::Error) -> Self {
        match e {
            levelfit::Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

fn error_kind(e: &levelfit::Error) -> &'static str {
    use levelfit::Error::*;
    match e {
        InvalidParameter { .. } => "invalid_parameter",
        TooShort { .. } => "too_short",
        NonFinite { .. } => "non_finite",
        Unsorted { .. } => "unsorted",
        DegenerateSpacing { .. } => "degenerate_spacing",
        EmptySample => "empty_sample",
        LengthMismatch { .. } => "length_mismatch",
        Quadrature { .. } => "quadrature",
        Bracketing { .. } => "bracketing",
        InsufficientStatistics(_) => "insufficient_statistics",
        TableRange { .. } => "table_range",
        MissingProvenance => "missing_provenance",
        NonMonotoneCdf { .. } => "non_monotone_cdf",
        NoConvergence { .. } => "no_convergence",
        DegenerateHistogram(_) => "degenerate_histogram",
        Parse { .. } => "parse",
        Io(_) => "io",
    }
}

/// The command line as recorded in output headers. The worker count is
/// left out so that outputs do not depend on it.
pub fn recorded_command_line(args: &[String]) -> String {
    let mut out: Vec<String> = Vec::with_capacity(args.len());
    if let Some(first) = args.first() {
        let name = std::path::Path::new(first)
            .file_name()
            .map_or_else(|| first.clone(), |n| n.to_string_lossy().into_owned());
        out.push(name);
    }
    let mut rest = args.iter().skip(1);
    while let Some(a) = rest.next() {
        if a == "--workers" {
            rest.next();
        } else if !a.starts_with("--workers=") {
            out.push(a.clone());
        }
    }
    out.join(" ")
}

/// Runs one invocation; returns the exit status. Results go to `stdout`
/// unless an output path is given, diagnostics to `stderr`.
pub fn run(args: Vec<String>, stdout: &mut (dyn Write + Send), stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
                let first = rendered.lines().next().unwrap_or("invalid arguments");
                let msg = first.trim_start_matches("error: ").to_string();
                let _ = writeln!(stderr, "{}", Failure::Usage(msg).line());
            }
            return code;
        }
    };
    if cli.version {
        let _ = writeln!(stdout, "{}", commands::version_text());
        return 0;
    }
    let Some(command) = cli.command.as_ref() else {
        let _ = writeln!(stderr, "{}", Failure::Usage("a subcommand is required".into()).line());
        return 2;
    };
    match execute(&cli, command, &args, stdout) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.line());
            f.status()
        }
    }
}

fn execute(cli: &Cli, command: &Command, args: &[String], stdout: &mut (dyn Write + Send)) -> Result<(), Failure> {
    let (name, flags) = command.parts();
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
            Some(parse_config_file(&text)?)
        }
        None => None,
    };
    let cfg = load_config(name, flags, file.as_ref())?;
    let ctx = commands::Context {
        cfg: &cfg,
        command_line: recorded_command_line(args),
    };
    match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Failure::Usage(format!("cannot start {w} workers: {e}")))?;
            pool.install(|| commands::dispatch(&ctx, stdout))
        }
        None => commands::dispatch(&ctx, stdout),
    }
}
