//! Run configuration: flags and `key=value` files resolve to one validated
//! [`RunConfig`]. Flags win over file values; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use clap::Args;
use levelfit::model::CoefficientSource;

/// Options shared by all subcommands. Each subcommand accepts a subset;
/// passing one it does not use is an error.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Matrix dimension N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Repulsion parameter of the beta-Hermite ensemble.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of matrices.
    #[arg(long)]
    pub count: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Observed fraction of levels.
    #[arg(long)]
    pub f: Option<f64>,
    /// Brody parameter.
    #[arg(long)]
    pub q: Option<f64>,
    /// Histogram bin width (default 0.1).
    #[arg(long = "bin-width")]
    pub bin_width: Option<f64>,
    /// Upper end of the histogram or model grid (default 5).
    #[arg(long)]
    pub smax: Option<f64>,
    /// Model grid step (default 0.01).
    #[arg(long)]
    pub step: Option<f64>,
    /// Series terms kept in the model (default 150).
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    /// Spacing order (0 = nearest neighbor); for solve-bn, 1 or 2.
    #[arg(long)]
    pub order: Option<usize>,
    /// Fraction of levels dropped at each spectrum edge (default 0.05).
    #[arg(long)]
    pub trim: Option<f64>,
    /// Fit parameter tolerance (default 1e-3).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Worker threads; never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Largest order of the calibrated variance table (default 150).
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    /// Comma-separated q values for calibration.
    #[arg(long = "q-grid")]
    pub q_grid: Option<String>,
    /// Minimum pooled spacings per calibration cell (default 100000).
    #[arg(long = "min-cell")]
    pub min_cell: Option<usize>,
    /// `mean` (solved b1, b2; default) or `printed`.
    #[arg(long)]
    pub coefficients: Option<String>,
    /// Bins per axis of the fitted-parameter histogram (default 20).
    #[arg(long = "grid-bins")]
    pub grid_bins: Option<usize>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Variance table CSV (default: the bundled table).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Histogram CSV to compare or fit.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    /// Also write a gnuplot script next to the output.
    #[arg(long)]
    pub gnuplot: bool,
    /// Accept a table without a provenance header.
    #[arg(long = "allow-unprovenanced")]
    pub allow_unprovenanced: bool,
}

const ALL_KEYS: &[&str] = &[
    "n", "beta", "count", "seed", "f", "q", "bin_width", "smax", "step", "k_max", "order",
    "trim", "tolerance", "workers", "n_max", "q_grid", "min_cell", "coefficients", "grid_bins",
    "input", "out", "table", "hist", "gnuplot", "allow_unprovenanced",
];

fn allowed(command: &str) -> &'static [&'static str] {
    match command {
        "generate" => &["n", "beta", "count", "seed", "workers", "out"],
        "unfold" => &["input", "out"],
        "thin" => &["input", "f", "seed", "out"],
        "spacings" => &["input", "order", "out"],
        "hist" => &["input", "bin_width", "smax", "out"],
        "model" => &[
            "q", "f", "smax", "step", "k_max", "coefficients", "table", "allow_unprovenanced",
            "out", "gnuplot",
        ],
        "chi2" => &["hist", "q", "f", "k_max", "coefficients", "table", "allow_unprovenanced", "out"],
        "calibrate-sigma" => &[
            "n", "count", "seed", "n_max", "q_grid", "trim", "min_cell", "workers", "out",
        ],
        "solve-bn" => &["order", "q", "out"],
        "fit" => &[
            "hist", "table", "allow_unprovenanced", "k_max", "tolerance", "coefficients", "out",
        ],
        "ensemble-fit" => &[
            "n", "beta", "f", "count", "seed", "bin_width", "smax", "trim", "k_max", "tolerance",
            "coefficients", "grid_bins", "table", "allow_unprovenanced", "workers", "out",
        ],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Fully resolved and validated settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub n_dim: usize,
    pub beta: f64,
    pub count: usize,
    pub seed: u64,
    pub f: f64,
    pub q: f64,
    pub bin_width: f64,
    pub s_max: f64,
    pub step: f64,
    pub k_max: usize,
    pub order: usize,
    pub edge_trim: f64,
    pub tolerance: f64,
    pub workers: Option<usize>,
    pub n_max: usize,
    pub q_grid: Vec<f64>,
    pub min_cell: usize,
    pub coefficients: CoefficientSource,
    pub grid_bins: usize,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub hist: Option<PathBuf>,
    pub gnuplot: bool,
    pub allow_unprovenanced: bool,
}

impl RunConfig {
    pub fn defaults(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            n_dim: 1000,
            beta: 1.0,
            count: 1,
            seed: 0,
            f: 1.0,
            q: 1.0,
            bin_width: levelfit::stats::DEFAULT_BIN_WIDTH,
            s_max: levelfit::stats::DEFAULT_S_MAX,
            step: 0.01,
            k_max: levelfit::model::DEFAULT_K_MAX,
            order: 0,
            edge_trim: levelfit::ensemble::DEFAULT_EDGE_TRIM,
            tolerance: 1e-3,
            workers: None,
            n_max: levelfit::calibration::DEFAULT_N_MAX,
            q_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            min_cell: levelfit::calibration::DEFAULT_MIN_CELL,
            coefficients: CoefficientSource::MeanCondition,
            grid_bins: 20,
            input: None,
            out: None,
            table: None,
            hist: None,
            gnuplot: false,
            allow_unprovenanced: false,
        }
    }
}

/// Parses a `key=value` file. Blank lines and `#` comments are skipped;
/// dashes in keys are read as underscores.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("config line {}: expected key=value, got {line:?}", i + 1));
        };
        let key = k.trim().replace('-', "_");
        if !ALL_KEYS.contains(&key.as_str()) {
            return err(format!("config line {}: unknown key {key:?}", i + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return err(format!("config line {}: duplicate key {key:?}", i + 1));
        }
    }
    Ok(out)
}

fn flag_map(flags: &Flags) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    put("n", flags.n.map(|v| v.to_string()));
    put("beta", flags.beta.map(|v| v.to_string()));
    put("count", flags.count.map(|v| v.to_string()));
    put("seed", flags.seed.map(|v| v.to_string()));
    put("f", flags.f.map(|v| v.to_string()));
    put("q", flags.q.map(|v| v.to_string()));
    put("bin_width", flags.bin_width.map(|v| v.to_string()));
    put("smax", flags.smax.map(|v| v.to_string()));
    put("step", flags.step.map(|v| v.to_string()));
    put("k_max", flags.k_max.map(|v| v.to_string()));
    put("order", flags.order.map(|v| v.to_string()));
    put("trim", flags.trim.map(|v| v.to_string()));
    put("tolerance", flags.tolerance.map(|v| v.to_string()));
    put("workers", flags.workers.map(|v| v.to_string()));
    put("n_max", flags.n_max.map(|v| v.to_string()));
    put("q_grid", flags.q_grid.clone());
    put("min_cell", flags.min_cell.map(|v| v.to_string()));
    put("coefficients", flags.coefficients.clone());
    put("grid_bins", flags.grid_bins.map(|v| v.to_string()));
    put("input", path(&flags.input));
    put("out", path(&flags.out));
    put("table", path(&flags.table));
    put("hist", path(&flags.hist));
    put("gnuplot", flags.gnuplot.then(|| "true".to_string()));
    put(
        "allow_unprovenanced",
        flags.allow_unprovenanced.then(|| "true".to_string()),
    );
    m
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => err(format!("{key}: expected true or false, got {v:?}")),
    }
}

/// Merges file values under flags and validates the result for `command`.
pub fn load_config(
    command: &str,
    flags: &Flags,
    file: Option<&BTreeMap<String, String>>,
) -> Result<RunConfig, ConfigError> {
    let ok = allowed(command);
    if ok.is_empty() {
        return err(format!("unknown subcommand {command:?}"));
    }
    let mut merged = file.cloned().unwrap_or_default();
    for (k, v) in flag_map(flags) {
        merged.insert(k, v);
    }
    for k in merged.keys() {
        if !ok.contains(&k.as_str()) {
            return err(format!("option {k:?} does not apply to {command}"));
        }
    }
    let mut c = RunConfig::defaults(command);
    for (k, v) in &merged {
        let v = v.as_str();
        match k.as_str() {
            "n" => c.n_dim = parse(k, v)?,
            "beta" => c.beta = parse(k, v)?,
            "count" => c.count = parse(k, v)?,
            "seed" => c.seed = parse(k, v)?,
            "f" => c.f = parse(k, v)?,
            "q" => c.q = parse(k, v)?,
            "bin_width" => c.bin_width = parse(k, v)?,
            "smax" => c.s_max = parse(k, v)?,
            "step" => c.step = parse(k, v)?,
            "k_max" => c.k_max = parse(k, v)?,
            "order" => c.order = parse(k, v)?,
            "trim" => c.edge_trim = parse(k, v)?,
            "tolerance" => c.tolerance = parse(k, v)?,
            "workers" => c.workers = Some(parse(k, v)?),
            "n_max" => c.n_max = parse(k, v)?,
            "q_grid" => {
                c.q_grid = v
                    .split(',')
                    .map(|x| parse(k, x.trim()))
                    .collect::<Result<_, _>>()?
            }
            "min_cell" => c.min_cell = parse(k, v)?,
            "coefficients" => {
                c.coefficients = match v {
                    "mean" => CoefficientSource::MeanCondition,
                    "printed" => CoefficientSource::Printed,
                    _ => return err(format!("coefficients: expected mean or printed, got {v:?}")),
                }
            }
            "grid_bins" => c.grid_bins = parse(k, v)?,
            "input" => c.input = Some(v.into()),
            "out" => c.out = Some(v.into()),
            "table" => c.table = Some(v.into()),
            "hist" => c.hist = Some(v.into()),
            "gnuplot" => c.gnuplot = parse_bool(k, v)?,
            "allow_unprovenanced" => c.allow_unprovenanced = parse_bool(k, v)?,
            _ => unreachable!("keys checked above"),
        }
    }
    validate(&c, &merged)?;
    Ok(c)
}

fn validate(c: &RunConfig, given: &BTreeMap<String, String>) -> Result<(), ConfigError> {
    let cmd = c.command.as_str();
    let uses = |k: &str| allowed(cmd).contains(&k);
    if uses("f") && !(c.f > 0.0 && c.f <= 1.0) {
        return err(format!("f must lie in (0, 1], got {}", c.f));
    }
    if uses("q") && cmd != "solve-bn" && !(0.0..=1.0).contains(&c.q) {
        return err(format!("q must lie in [0, 1], got {}", c.q));
    }
    if cmd == "solve-bn" && !(0.0..=1.0).contains(&c.q) {
        return err(format!("q must lie in [0, 1], got {}", c.q));
    }
    if uses("beta") && !(c.beta >= 0.0 && c.beta.is_finite()) {
        return err(format!("beta must be >= 0, got {}", c.beta));
    }
    if uses("n") && c.n_dim < 2 {
        return err(format!("n must be >= 2, got {}", c.n_dim));
    }
    if uses("count") && c.count == 0 {
        return err("count must be >= 1");
    }
    if cmd == "ensemble-fit" && c.count < 10 {
        return err(format!("count must be >= 10 for ensemble-fit, got {}", c.count));
    }
    if uses("bin_width") && !(c.bin_width > 0.0) {
        return err(format!("bin-width must be > 0, got {}", c.bin_width));
    }
    if uses("smax") && !(c.s_max > 0.0 && c.s_max >= c.bin_width) {
        return err(format!("smax must be > 0 and >= bin-width, got {}", c.s_max));
    }
    if uses("step") && !(c.step > 0.0 && c.step <= c.s_max) {
        return err(format!("step must lie in (0, smax], got {}", c.step));
    }
    if uses("k_max") && c.k_max < 3 {
        return err(format!("k-max must be >= 3, got {}", c.k_max));
    }
    if uses("trim") && !(0.0..0.5).contains(&c.edge_trim) {
        return err(format!("trim must lie in [0, 0.5), got {}", c.edge_trim));
    }
    if uses("tolerance") && !(c.tolerance > 0.0 && c.tolerance < 0.1) {
        return err(format!("tolerance must lie in (0, 0.1), got {}", c.tolerance));
    }
    if c.workers == Some(0) {
        return err("workers must be >= 1");
    }
    if uses("n_max") && c.n_max < 4 {
        return err(format!("n-max must be >= 4, got {}", c.n_max));
    }
    if uses("q_grid") && c.q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return err("q-grid values must lie in [0, 1]");
    }
    if uses("grid_bins") && c.grid_bins == 0 {
        return err("grid-bins must be >= 1");
    }
    if cmd == "solve-bn" && !matches!(c.order, 1 | 2) {
        return err(format!("order must be 1 or 2 for solve-bn, got {}", c.order));
    }
    let need = |key: &str, flag: &str| {
        if given.contains_key(key) {
            Ok(())
        } else {
            err(format!("{cmd} requires --{flag}"))
        }
    };
    match cmd {
        "generate" => need("out", "out")?,
        "unfold" | "thin" | "spacings" | "hist" => need("input", "input")?,
        "chi2" | "fit" => need("hist", "hist")?,
        _ => {}
    }
    if c.gnuplot && c.out.is_none() {
        return err("--gnuplot requires --out");
    }
    Ok(())
}
