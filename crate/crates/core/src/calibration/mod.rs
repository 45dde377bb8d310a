//! Monte Carlo calibration of the order-n spacing variances `Sigma(n, q)`
//! and the mean-condition constants `b1`, `b2`.
//!
//! Variances are measured on beta-Hermite ensembles with `beta = q`; the
//! `q = 0` column is the exact Poisson value `n + 1`. Lookups interpolate a
//! natural cubic spline in `q` along each row `n`.

pub mod bn;
pub mod spline;

use rayon::prelude::*;

pub use bn::{solve_bn, BnSolution};
pub use spline::NaturalCubicSpline;

use crate::ensemble::{self, EnsembleConfig, DEFAULT_EDGE_TRIM};
use crate::error::{invalid, Error, Result};
use crate::io::{CsvTable, Metadata};
use crate::seed::{derive_seed, Stream};

/// Smallest Gaussian order.
pub const FIRST_ORDER: usize = 3;
/// Default largest tabulated order.
pub const DEFAULT_N_MAX: usize = 150;
/// Pooled spacings required per (n, q) cell.
pub const DEFAULT_MIN_CELL: usize = 100_000;

const BUNDLED: &str = include_str!("../../data/sigma_table.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    q_grid: Vec<f64>,
    n_max: usize,
    /// `variances[n - 3][j]` is `Sigma(n, q_grid[j])`.
    variances: Vec<Vec<f64>>,
    provenance: Metadata,
    splines: Vec<NaturalCubicSpline>,
    extrapolate: bool,
}

impl SigmaTable {
    pub fn new(q_grid: Vec<f64>, variances: Vec<Vec<f64>>, provenance: Metadata) -> Result<Self> {
        if variances.is_empty() {
            return Err(invalid("variances", "table has no rows"));
        }
        if let Some(row) = variances.iter().find(|r| r.len() != q_grid.len()) {
            return Err(Error::LengthMismatch {
                expected: q_grid.len(),
                got: row.len(),
            });
        }
        if variances.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(invalid("variances", "all variances must be positive"));
        }
        let splines = variances
            .iter()
            .map(|row| NaturalCubicSpline::new(&q_grid, row))
            .collect::<Result<Vec<_>>>()?;
        Ok(SigmaTable {
            n_max: FIRST_ORDER + variances.len() - 1,
            q_grid,
            variances,
            provenance,
            splines,
            extrapolate: false,
        })
    }

    /// The calibrated table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, true).expect("bundled sigma table is well-formed")
    }

    /// Allows lookups with `n > n_max` by linear extrapolation in `n`.
    pub fn with_extrapolation(mut self, on: bool) -> Self {
        self.extrapolate = on;
        self
    }

    pub fn q_grid(&self) -> &[f64] {
        &self.q_grid
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn provenance(&self) -> &Metadata {
        &self.provenance
    }

    /// Stored value at grid node `j`.
    pub fn stored(&self, n: usize, j: usize) -> f64 {
        self.variances[n - FIRST_ORDER][j]
    }

    pub fn lookup(&self, n: usize, q: f64) -> Result<f64> {
        let (q_lo, q_hi) = (self.q_grid[0], self.q_grid[self.q_grid.len() - 1]);
        if n < FIRST_ORDER || !(q >= q_lo - 1e-12 && q <= q_hi + 1e-12) {
            return Err(Error::TableRange { n, q });
        }
        if n > self.n_max {
            if !self.extrapolate || self.n_max == FIRST_ORDER {
                return Err(Error::TableRange { n, q });
            }
            let top = self.splines[self.n_max - FIRST_ORDER].eval(q);
            let below = self.splines[self.n_max - FIRST_ORDER - 1].eval(q);
            return Ok(top + (n - self.n_max) as f64 * (top - below));
        }
        if let Some(j) = self.q_grid.iter().position(|&g| g == q) {
            return Ok(self.variances[n - FIRST_ORDER][j]);
        }
        Ok(self.splines[n - FIRST_ORDER].eval(q))
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["n", "q", "variance"]);
        t.meta = self.provenance.clone();
        for (i, row) in self.variances.iter().enumerate() {
            for (&q, &v) in self.q_grid.iter().zip(row) {
                t.rows.push(vec![(i + FIRST_ORDER) as f64, q, v]);
            }
        }
        t
    }

    /// Parses the `n,q,variance` CSV form. With `require_provenance`, a table
    /// without a `source` header key is refused.
    pub fn parse(text: &str, require_provenance: bool) -> Result<Self> {
        let t = CsvTable::parse(text)?;
        if require_provenance && !t.meta.contains_key("source") {
            return Err(Error::MissingProvenance);
        }
        let (cn, cq, cv) = (t.column("n")?, t.column("q")?, t.column("variance")?);
        let mut q_grid: Vec<f64> = t.rows.iter().map(|r| r[cq]).collect();
        q_grid.sort_by(|a, b| a.total_cmp(b));
        q_grid.dedup();
        let n_lo = t.rows.iter().map(|r| r[cn] as usize).min().unwrap_or(0);
        let n_hi = t.rows.iter().map(|r| r[cn] as usize).max().unwrap_or(0);
        if n_lo != FIRST_ORDER {
            return Err(invalid("n", format!("table must start at n = 3, starts at {n_lo}")));
        }
        let mut variances = vec![vec![f64::NAN; q_grid.len()]; n_hi - n_lo + 1];
        for r in &t.rows {
            let j = q_grid.iter().position(|&g| g == r[cq]).expect("q from grid");
            variances[r[cn] as usize - FIRST_ORDER][j] = r[cv];
        }
        if variances.iter().flatten().any(|v| v.is_nan()) {
            return Err(invalid("variances", "table has missing (n, q) cells"));
        }
        SigmaTable::new(q_grid, variances, t.meta)
    }
}

/// Settings of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub q_grid: Vec<f64>,
    pub n_max: usize,
    pub n_dim: usize,
    pub count: usize,
    pub master_seed: u64,
    pub edge_trim: f64,
    pub min_cell: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            q_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            n_max: DEFAULT_N_MAX,
            n_dim: 5000,
            count: 200,
            master_seed: 20_230_601,
            edge_trim: DEFAULT_EDGE_TRIM,
            min_cell: DEFAULT_MIN_CELL,
        }
    }
}

/// Streaming count, mean and centered second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PooledMoments {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl PooledMoments {
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum();
        PooledMoments { count, mean, m2 }
    }

    /// Chan's pairwise combination.
    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        PooledMoments {
            count: self.count + other.count,
            mean: self.mean + delta * other.count as f64 / n,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * other.count as f64 / n,
        }
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.count as f64 - 1.0)
    }
}

/// Per-order spacing moments of one unfolded, trimmed spectrum.
fn member_moments(config: &EnsembleConfig, index: usize, n_max: usize, edge_trim: f64) -> Result<Vec<PooledMoments>> {
    let seq = ensemble::observed_member(config, index, 1.0, edge_trim)?;
    let p = &seq.positions;
    Ok((FIRST_ORDER..=n_max)
        .map(|n| {
            if p.len() < n + 2 {
                return PooledMoments::default();
            }
            let gaps: Vec<f64> = p.iter().zip(&p[n + 1..]).map(|(a, b)| b - a).collect();
            PooledMoments::from_values(&gaps)
        })
        .collect())
}

/// Builds the variance table by Monte Carlo. Work items are (q, matrix)
/// pairs with derived seeds; per-matrix moments are merged in index order,
/// so the result does not depend on the thread count.
pub fn calibrate_sigma(opts: &CalibrationOptions) -> Result<SigmaTable> {
    if opts.n_max < FIRST_ORDER + 1 {
        return Err(invalid("n_max", format!("must be >= 4, got {}", opts.n_max)));
    }
    let mut q_grid = opts.q_grid.clone();
    q_grid.sort_by(|a, b| a.total_cmp(b));
    q_grid.dedup();
    if q_grid.first() != Some(&0.0) {
        q_grid.insert(0, 0.0);
    }
    if q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(invalid("q_grid", "values must lie in [0, 1]"));
    }
    let rows = opts.n_max - FIRST_ORDER + 1;
    let mut variances = vec![vec![0.0; q_grid.len()]; rows];
    let mut deficient = Vec::new();
    for (j, &q) in q_grid.iter().enumerate() {
        if q == 0.0 {
            for (i, row) in variances.iter_mut().enumerate() {
                row[j] = (i + FIRST_ORDER + 1) as f64;
            }
            continue;
        }
        let config = EnsembleConfig::new(
            opts.n_dim,
            q,
            opts.count,
            derive_seed(opts.master_seed, j as u64, Stream::Matrix),
        )?;
        let per_member = (0..opts.count)
            .into_par_iter()
            .map(|i| member_moments(&config, i, opts.n_max, opts.edge_trim))
            .collect::<Result<Vec<_>>>()?;
        for (i, row) in variances.iter_mut().enumerate() {
            let pooled = per_member
                .iter()
                .fold(PooledMoments::default(), |acc, m| acc.merge(m[i]));
            if pooled.count < opts.min_cell.max(2) {
                deficient.push(format!("(n={}, q={q}): {}", i + FIRST_ORDER, pooled.count));
            }
            row[j] = pooled.variance();
        }
    }
    if !deficient.is_empty() {
        return Err(Error::InsufficientStatistics(format!(
            "cells below {} spacings: {}",
            opts.min_cell,
            deficient.join(", ")
        )));
    }
    let mut prov = Metadata::new();
    prov.insert("source".into(), "beta-hermite calibration".into());
    prov.insert("n_dim".into(), opts.n_dim.to_string());
    prov.insert("count".into(), opts.count.to_string());
    prov.insert("master_seed".into(), opts.master_seed.to_string());
    prov.insert("edge_trim".into(), opts.edge_trim.to_string());
    prov.insert("n_max".into(), opts.n_max.to_string());
    prov.insert(
        "q_grid".into(),
        q_grid.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" "),
    );
    prov.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    SigmaTable::new(q_grid, variances, prov)
}
