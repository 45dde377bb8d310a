//! The two-parameter spacing density `P(s; q, f)` and its ingredients.
//!
//! A spectrum with Brody repulsion `q` of which only a fraction `f` of levels
//! is observed has nearest-neighbor density
//!
//! ```text
//! P(s) = sum_k (1 - f)^k p(k, s / f)
//! ```
//!
//! where `p(k, .)` is the order-k spacing density of the complete spectrum.
//! Orders 0, 1 and 2 come from the Brody family (closed form and the
//! [`OrderKernel`] quadratures); orders 3 and above are Gaussians of mean
//! `k + 1` whose variances come from a calibrated [`SigmaTable`].

mod kernel;

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

pub use kernel::{OrderKernel, OrderMoments};

use crate::calibration::{bn, SigmaTable};
use crate::error::{invalid, Error, Result};
use crate::io::{CsvTable, Metadata};
use crate::quad::{integrate_adaptive, QuadOptions};
use crate::seed::{stream_rng, Stream};
use crate::stats::SpacingSample;

/// Number of series terms kept by default.
pub const DEFAULT_K_MAX: usize = 150;
/// Series terms whose weight `(1 - f)^k` falls below this are skipped.
pub const SERIES_CUTOFF: f64 = 1e-16;
/// Absolute tolerance of the pointwise `p(1, s)` quadrature.
pub const P1_TOLERANCE: f64 = 1e-8;
/// Points of the tabulated cumulative used for sampling.
pub const SAMPLING_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    /// Brody repulsion parameter in [0, 1].
    pub q: f64,
    /// Observed fraction of levels in (0, 1].
    pub f: f64,
}

impl ModelParams {
    pub fn new(q: f64, f: f64) -> Result<Self> {
        check_q(q)?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid("f", format!("must lie in (0, 1], got {f}")));
        }
        Ok(ModelParams { q, f })
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [0, 1], got {q}")));
    }
    Ok(())
}

/// Constants of the order-0, 1 and 2 Brody-family densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrodyCoefficients {
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl BrodyCoefficients {
    /// Builds the set from `q` and the two free constants `b1`, `b2`.
    pub fn from_b(q: f64, b1: f64, b2: f64) -> Self {
        let b = libm::tgamma((q + 2.0) / (q + 1.0)).powf(q + 1.0);
        BrodyCoefficients {
            q,
            a: (q + 1.0) * b,
            b,
            a1: (2.0 * q + 1.0) * b1,
            b1,
            a2: (3.0 * q + 1.0) * b2,
            b2,
        }
    }
}

/// Printed parametrizations: `b1 = 1 / (1 + 2.7 q + 3.5 q^2)` and
/// `b2 = 1 / (1 + 6.7 q + 1.3 q^2 + 51 q^3)`.
pub fn brody_coefficients(q: f64) -> Result<BrodyCoefficients> {
    check_q(q)?;
    let b1 = 1.0 / (1.0 + 2.7 * q + 3.5 * q * q);
    let b2 = 1.0 / (1.0 + 6.7 * q + 1.3 * q * q + 51.0 * q * q * q);
    Ok(BrodyCoefficients::from_b(q, b1, b2))
}

/// Where `b1` and `b2` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CoefficientSource {
    /// Solved so that `p(1, s)` and `p(2, s)` have means 2 and 3.
    #[default]
    MeanCondition,
    /// The printed rational parametrizations.
    Printed,
}

impl CoefficientSource {
    pub fn coefficients(self, q: f64) -> Result<BrodyCoefficients> {
        match self {
            CoefficientSource::Printed => brody_coefficients(q),
            CoefficientSource::MeanCondition => {
                check_q(q)?;
                let (b1, b2) = bn::mean_condition_b(q);
                Ok(BrodyCoefficients::from_b(q, b1, b2))
            }
        }
    }
}

/// Brody density `a s^q exp(-b s^(q+1))`.
pub fn brody_ps(s: f64, q: f64) -> f64 {
    let b = libm::tgamma((q + 2.0) / (q + 1.0)).powf(q + 1.0);
    brody_with(s, q, (q + 1.0) * b, b)
}

fn brody_with(s: f64, q: f64, a: f64, b: f64) -> f64 {
    if s <= 0.0 {
        return if q == 0.0 { a } else { 0.0 };
    }
    if q == 0.0 {
        return a * (-b * s).exp();
    }
    let ls = s.ln();
    (a.ln() + q * ls - b * ((q + 1.0) * ls).exp()).exp()
}

/// `p(1, s)` by adaptive quadrature of its defining integral after the
/// substitution `u = x^(q+1)`, which removes the `x^q` endpoint behavior.
pub fn p1(s: f64, q: f64) -> Result<f64> {
    p1_with(s, &CoefficientSource::default().coefficients(q)?)
}

pub fn p1_with(s: f64, c: &BrodyCoefficients) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    let q = c.q;
    let e1 = 2.0 * q + 1.0;
    let ratio = e1 / (q + 1.0);
    let s1 = s.powf(e1);
    let upper = s.powf(q + 1.0);
    let prefactor = c.b * c.a1 * s.powf(2.0 * q);
    let integrand = |u: f64| (-c.b * u - c.b1 * (s1 - u.powf(ratio))).exp();
    let tol = P1_TOLERANCE / prefactor.max(1e-300);
    let r = integrate_adaptive(
        integrand,
        0.0,
        upper,
        QuadOptions {
            abs_tol: tol.min(1e-3),
            max_intervals: 4000,
        },
    )?;
    Ok(prefactor * r.value)
}

/// `p(2, s)` through the panel kernel with cached inner integrals.
pub fn p2(s: f64, q: f64) -> Result<f64> {
    let c = CoefficientSource::default().coefficients(q)?;
    Ok(OrderKernel::new(c).evaluate(&[s])[0][1])
}

/// Gaussian approximation of the order-n spacing density, mean `n + 1` and
/// variance `Sigma(n, q)` from the table.
pub fn gaussian_term(n: usize, s: f64, q: f64, table: &SigmaTable) -> Result<f64> {
    if n < 3 {
        return Err(invalid("n", format!("Gaussian terms start at n = 3, got {n}")));
    }
    let var = table.lookup(n, q)?;
    Ok(gaussian(s, (n + 1) as f64, var))
}

fn gaussian(s: f64, mean: f64, var: f64) -> f64 {
    (-(s - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Evaluator of the composite density for one sigma table.
#[derive(Debug, Clone, Copy)]
pub struct MissingLevelModel<'a> {
    pub table: &'a SigmaTable,
    pub k_max: usize,
    pub source: CoefficientSource,
}

impl<'a> MissingLevelModel<'a> {
    pub fn new(table: &'a SigmaTable) -> Self {
        MissingLevelModel {
            table,
            k_max: DEFAULT_K_MAX,
            source: CoefficientSource::default(),
        }
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_source(mut self, source: CoefficientSource) -> Self {
        self.source = source;
        self
    }

    /// Density at every point of `grid`.
    pub fn curve(&self, params: ModelParams, grid: &[f64]) -> Result<Vec<f64>> {
        let ModelParams { q, f } = ModelParams::new(params.q, params.f)?;
        if self.k_max < 3 {
            return Err(invalid("k_max", format!("must be >= 3, got {}", self.k_max)));
        }
        if let Some(i) = grid.iter().position(|&s| !(s >= 0.0)) {
            return Err(invalid("s", format!("grid point {i} is negative or NaN")));
        }
        let c = self.source.coefficients(q)?;
        let ts: Vec<f64> = grid.iter().map(|&s| s / f).collect();
        let mut out: Vec<f64> = ts.iter().map(|&t| brody_with(t, q, c.a, c.b)).collect();

        let w = 1.0 - f;
        if w <= 0.0 {
            return Ok(out);
        }
        let lw = w.ln();
        if w >= SERIES_CUTOFF {
            let kernel = OrderKernel::new(c);
            for (o, [v1, v2]) in out.iter_mut().zip(kernel.evaluate(&ts)) {
                *o += w * v1 + w * w * v2;
            }
        }
        // Terms with (1 - f)^n below the cutoff are dropped.
        let n_hi = ((SERIES_CUTOFF.ln() / lw).floor() as usize).min(self.k_max);
        if n_hi >= 3 {
            let vars = (3..=n_hi)
                .map(|n| self.table.lookup(n, q))
                .collect::<Result<Vec<f64>>>()?;
            for (o, &t) in out.iter_mut().zip(&ts) {
                let mut acc = 0.0;
                for (i, &var) in vars.iter().enumerate() {
                    let n = (i + 3) as f64;
                    let log_term =
                        n * lw - 0.5 * (2.0 * PI * var).ln() - (t - n - 1.0).powi(2) / (2.0 * var);
                    if log_term > -745.0 {
                        acc += log_term.exp();
                    }
                }
                *o += acc;
            }
        }
        Ok(out)
    }

    pub fn ps(&self, s: f64, params: ModelParams) -> Result<f64> {
        Ok(self.curve(params, &[s])?[0])
    }

    pub fn model_curve(&self, params: ModelParams, grid: &[f64]) -> Result<ModelCurve> {
        if let Some(i) = grid.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Unsorted { index: i + 1 });
        }
        Ok(ModelCurve {
            grid: grid.to_vec(),
            values: self.curve(params, grid)?,
            params,
            k_max: self.k_max,
        })
    }

    /// Draws `count` spacings by inverting the tabulated cumulative.
    pub fn sample_spacings(&self, params: ModelParams, count: usize, seed: u64) -> Result<SpacingSample> {
        let sampler = self.sampler(params)?;
        let mut rng = stream_rng(seed, 0, Stream::Sampling);
        let values = (0..count).map(|_| sampler.draw(rng.random::<f64>())).collect();
        Ok(SpacingSample { order: 0, values })
    }

    /// Tabulated inverse cumulative on [0, s_eff], where the tail beyond
    /// `s_eff` carries mass below 1e-6.
    pub fn sampler(&self, params: ModelParams) -> Result<InverseCdf> {
        let coarse_step = 0.1;
        let coarse: Vec<f64> = (0..=1000).map(|i| i as f64 * coarse_step).collect();
        let dens = self.curve(params, &coarse)?;
        let cdf = cumulative(&coarse, &dens)?;
        let total = *cdf.last().expect("nonempty");
        let cut = cdf
            .iter()
            .position(|&c| total - c < 1e-6 * total)
            .unwrap_or(cdf.len() - 1);
        let s_eff = coarse[cut.max(10)];
        let grid: Vec<f64> = (0..SAMPLING_GRID)
            .map(|i| s_eff * i as f64 / (SAMPLING_GRID - 1) as f64)
            .collect();
        let dens = self.curve(params, &grid)?;
        let cdf = cumulative(&grid, &dens)?;
        let total = *cdf.last().expect("nonempty");
        Ok(InverseCdf {
            grid,
            cdf: cdf.into_iter().map(|c| c / total).collect(),
        })
    }
}

fn cumulative(grid: &[f64], dens: &[f64]) -> Result<Vec<f64>> {
    let mut cdf = Vec::with_capacity(grid.len());
    cdf.push(0.0);
    for i in 1..grid.len() {
        if !(dens[i] >= 0.0) || !(dens[i - 1] >= 0.0) {
            return Err(Error::NonMonotoneCdf { index: i });
        }
        let prev = cdf[i - 1];
        cdf.push(prev + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]));
    }
    Ok(cdf)
}

/// Piecewise-linear inverse of a tabulated cumulative distribution.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn draw(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (s0, s1) = (self.grid[k - 1], self.grid[k]);
        if c1 > c0 {
            s0 + (u - c0) / (c1 - c0) * (s1 - s0)
        } else {
            s0
        }
    }
}

/// Convenience wrapper: the composite density at one point.
pub fn ps_missing(s: f64, params: ModelParams, table: &SigmaTable, k_max: usize) -> Result<f64> {
    MissingLevelModel::new(table).with_k_max(k_max).ps(s, params)
}

/// A model density tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub params: ModelParams,
    pub k_max: usize,
}

impl ModelCurve {
    /// Trapezoidal integral of the curve over its grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0]))
            .sum()
    }

    pub fn to_csv(&self, mut meta: Metadata) -> CsvTable {
        meta.insert("q".into(), self.params.q.to_string());
        meta.insert("f".into(), self.params.f.to_string());
        meta.insert("k_max".into(), self.k_max.to_string());
        meta.insert("p1_tolerance".into(), P1_TOLERANCE.to_string());
        meta.insert("series_cutoff".into(), SERIES_CUTOFF.to_string());
        let mut t = CsvTable::new(&["s", "density"]);
        t.meta = meta;
        for (&s, &v) in self.grid.iter().zip(&self.values) {
            t.rows.push(vec![s, v]);
        }
        t
    }
}

/// Uniform grid `0, step, 2 step, ...` up to and including `s_max`.
pub fn uniform_grid(s_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(s_max > 0.0) {
        return Err(invalid("step", "step and s_max must be positive"));
    }
    let n = (s_max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}
