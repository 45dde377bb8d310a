//! Least-squares estimation of `(q, f)` from a spacing histogram, and
//! ensemble studies of the fitted-parameter distribution.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::SigmaTable;
use crate::ensemble::{self, EnsembleConfig, DEFAULT_EDGE_TRIM};
use crate::error::{invalid, Error, Result};
use crate::io::{CsvTable, Metadata};
use crate::model::{CoefficientSource, MissingLevelModel, ModelParams, DEFAULT_K_MAX};
use crate::stats::{self, SpacingHistogram, DEFAULT_BIN_WIDTH, DEFAULT_S_MAX};

pub const Q_BOUNDS: (f64, f64) = (0.0, 1.0);
pub const F_BOUNDS: (f64, f64) = (0.05, 1.0);
/// Histograms with fewer nonempty bins are refused.
pub const MIN_NONEMPTY_BINS: usize = 10;
/// A start whose objective is within this factor of the best one counts as
/// a competing optimum.
pub const AMBIGUITY_RATIO: f64 = 1.1;
/// Competing optima closer than this in both parameters are the same optimum.
pub const AMBIGUITY_SEPARATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOptions {
    pub starts: Vec<(f64, f64)>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub k_max: usize,
    pub source: CoefficientSource,
    pub keep_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let fs = [0.2, 0.4, 0.6, 0.8, 1.0];
        FitOptions {
            starts: grid
                .iter()
                .flat_map(|&q| fs.iter().map(move |&f| (q, f)))
                .collect(),
            tolerance: 1e-3,
            max_iterations: 500,
            initial_step: 0.1,
            k_max: DEFAULT_K_MAX,
            source: CoefficientSource::default(),
            keep_trace: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts.is_empty() {
            return Err(invalid("starts", "at least one start is required"));
        }
        for &(q, f) in &self.starts {
            if !(Q_BOUNDS.0..=Q_BOUNDS.1).contains(&q) || !(F_BOUNDS.0..=F_BOUNDS.1).contains(&f) {
                return Err(invalid("starts", format!("start ({q}, {f}) lies outside the box")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", format!("must be > 0, got {}", self.tolerance)));
        }
        if !(self.initial_step > 0.0 && self.initial_step < 0.5) {
            return Err(invalid("initial_step", "must lie in (0, 0.5)"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// Where one start of the multi-start search ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartOutcome {
    pub start_q: f64,
    pub start_f: f64,
    pub q: f64,
    pub f: f64,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub q_hat: f64,
    pub f_hat: f64,
    pub objective: f64,
    pub starts: usize,
    pub ambiguous: bool,
    /// Bins entering the objective (up to the last occupied one).
    pub bins_used: usize,
    pub trace: Option<Vec<StartOutcome>>,
}

fn clamp_box(p: [f64; 2]) -> [f64; 2] {
    [
        p[0].clamp(Q_BOUNDS.0, Q_BOUNDS.1),
        p[1].clamp(F_BOUNDS.0, F_BOUNDS.1),
    ]
}

struct Objective<'a> {
    model: MissingLevelModel<'a>,
    hist: &'a SpacingHistogram,
    centers: Vec<f64>,
    bins: usize,
}

impl Objective<'_> {
    fn eval(&self, p: [f64; 2]) -> Result<f64> {
        let params = ModelParams::new(p[0], p[1])?;
        let curve = self.model.curve(params, &self.centers)?;
        Ok(stats::chi2_prefix(self.hist, &curve, self.bins))
    }
}

/// Nelder-Mead on the box, with trial points projected onto it.
fn simplex_search(obj: &Objective, start: [f64; 2], opts: &FitOptions) -> Result<([f64; 2], f64, usize)> {
    let start = clamp_box(start);
    let mut simplex = vec![start];
    for d in 0..2 {
        let mut v = start;
        let hi = if d == 0 { Q_BOUNDS.1 } else { F_BOUNDS.1 };
        v[d] += if v[d] + opts.initial_step <= hi {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        simplex.push(clamp_box(v));
    }
    let mut values = simplex
        .iter()
        .map(|&p| obj.eval(p))
        .collect::<Result<Vec<f64>>>()?;

    for iter in 0..opts.max_iterations {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let [best, mid, worst] = idx;
        let spread = (1..3)
            .map(|k| {
                let v = simplex[idx[k]];
                (v[0] - simplex[best][0]).abs().max((v[1] - simplex[best][1]).abs())
            })
            .fold(0.0, f64::max);
        if spread < opts.tolerance {
            return Ok((simplex[best], values[best], iter));
        }
        let centroid = [
            0.5 * (simplex[best][0] + simplex[mid][0]),
            0.5 * (simplex[best][1] + simplex[mid][1]),
        ];
        let toward = |t: f64| {
            clamp_box([
                centroid[0] + t * (simplex[worst][0] - centroid[0]),
                centroid[1] + t * (simplex[worst][1] - centroid[1]),
            ])
        };
        let reflected = toward(-1.0);
        let fr = obj.eval(reflected)?;
        if fr < values[best] {
            let expanded = toward(-2.0);
            let fe = obj.eval(expanded)?;
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[mid] {
            simplex[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[worst] {
            let c = toward(-0.5);
            (c, obj.eval(c)?)
        } else {
            let c = toward(0.5);
            (c, obj.eval(c)?)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = contracted;
            values[worst] = fc;
            continue;
        }
        for k in [mid, worst] {
            simplex[k] = clamp_box([
                0.5 * (simplex[k][0] + simplex[best][0]),
                0.5 * (simplex[k][1] + simplex[best][1]),
            ]);
            values[k] = obj.eval(simplex[k])?;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
    })
}

/// Fits `(q, f)` to a spacing histogram by multi-start simplex search.
pub fn fit_ps(hist: &SpacingHistogram, table: &SigmaTable, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let nonempty = hist.densities.iter().filter(|&&d| d > 0.0).count();
    if nonempty < MIN_NONEMPTY_BINS {
        return Err(Error::DegenerateHistogram(format!(
            "{nonempty} nonempty bins, need {MIN_NONEMPTY_BINS}"
        )));
    }
    let bins = hist.occupied_prefix();
    let obj = Objective {
        model: MissingLevelModel::new(table)
            .with_k_max(opts.k_max)
            .with_source(opts.source),
        hist,
        centers: hist.bin_centers()[..bins].to_vec(),
        bins,
    };
    let mut outcomes = Vec::with_capacity(opts.starts.len());
    for &(q0, f0) in &opts.starts {
        let (p, value, iterations) = simplex_search(&obj, [q0, f0], opts)?;
        outcomes.push(StartOutcome {
            start_q: q0,
            start_f: f0,
            q: p[0],
            f: p[1],
            objective: value,
            iterations,
        });
    }
    let best = *outcomes
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");
    let ambiguous = outcomes.iter().any(|o| {
        o.objective <= AMBIGUITY_RATIO * best.objective
            && ((o.q - best.q).abs() > AMBIGUITY_SEPARATION
                || (o.f - best.f).abs() > AMBIGUITY_SEPARATION)
    });
    Ok(FitResult {
        q_hat: best.q,
        f_hat: best.f,
        objective: best.objective,
        starts: outcomes.len(),
        ambiguous,
        bins_used: bins,
        trace: opts.keep_trace.then_some(outcomes),
    })
}

/// Histogramming and fitting settings for ensemble studies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleFitOptions {
    pub fit: FitOptions,
    pub bin_width: f64,
    pub s_max: f64,
    pub edge_trim: f64,
    /// Bins per axis of the joint histogram of fitted values.
    pub grid_bins: usize,
}

impl Default for EnsembleFitOptions {
    fn default() -> Self {
        EnsembleFitOptions {
            fit: FitOptions {
                keep_trace: false,
                ..FitOptions::default()
            },
            bin_width: DEFAULT_BIN_WIDTH,
            s_max: DEFAULT_S_MAX,
            edge_trim: DEFAULT_EDGE_TRIM,
            grid_bins: 20,
        }
    }
}

/// Outcome for one spectrum of an ensemble study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumFit {
    pub index: usize,
    pub result: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Marginal {
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub fitted: usize,
    pub failed: usize,
    pub ambiguous: usize,
    pub q_hat: Marginal,
    pub f_hat: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDistribution {
    pub q_edges: Vec<f64>,
    pub f_edges: Vec<f64>,
    /// `counts[i][j]` counts fits with `q_hat` in bin `i`, `f_hat` in bin `j`.
    pub counts: Vec<Vec<usize>>,
    pub spectra: Vec<SpectrumFit>,
    pub summary: FitSummary,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn marginal(values: &[f64]) -> Marginal {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Marginal {
        median: quantile(&sorted, 0.5),
        iqr: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        mean,
        std: var.sqrt(),
    }
}

fn bin_of(x: f64, edges: &[f64]) -> usize {
    let n = edges.len() - 1;
    edges[1..].partition_point(|&e| e <= x).min(n - 1)
}

impl FitDistribution {
    pub fn from_fits(spectra: Vec<SpectrumFit>, grid_bins: usize) -> Result<Self> {
        if grid_bins == 0 {
            return Err(invalid("grid_bins", "must be positive"));
        }
        let edges: Vec<f64> = (0..=grid_bins).map(|i| i as f64 / grid_bins as f64).collect();
        let mut counts = vec![vec![0usize; grid_bins]; grid_bins];
        let ok: Vec<&FitResult> = spectra.iter().filter_map(|s| s.result.as_ref()).collect();
        if ok.len() < 2 {
            return Err(Error::InsufficientStatistics(format!(
                "{} of {} spectra were fitted",
                ok.len(),
                spectra.len()
            )));
        }
        for r in &ok {
            counts[bin_of(r.q_hat, &edges)][bin_of(r.f_hat, &edges)] += 1;
        }
        let qs: Vec<f64> = ok.iter().map(|r| r.q_hat).collect();
        let fs: Vec<f64> = ok.iter().map(|r| r.f_hat).collect();
        let summary = FitSummary {
            fitted: ok.len(),
            failed: spectra.len() - ok.len(),
            ambiguous: ok.iter().filter(|r| r.ambiguous).count(),
            q_hat: marginal(&qs),
            f_hat: marginal(&fs),
        };
        Ok(FitDistribution {
            q_edges: edges.clone(),
            f_edges: edges,
            counts,
            spectra,
            summary,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Number of separated peaks of the joint histogram after 3x3 box
    /// smoothing. Cells below `min_fraction` of the highest smoothed cell
    /// are ignored; plateaus count once.
    pub fn modes(&self, min_fraction: f64) -> usize {
        let nq = self.counts.len();
        let nf = self.counts[0].len();
        let neighbors = |i: usize, j: usize| {
            let mut out = Vec::with_capacity(8);
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < nq && (b as usize) < nf {
                        out.push((a as usize, b as usize));
                    }
                }
            }
            out
        };
        let mut smooth = vec![vec![0.0; nf]; nq];
        for i in 0..nq {
            for j in 0..nf {
                smooth[i][j] = self.counts[i][j] as f64
                    + neighbors(i, j)
                        .iter()
                        .map(|&(a, b)| self.counts[a][b] as f64)
                        .sum::<f64>();
            }
        }
        let top = smooth.iter().flatten().cloned().fold(0.0, f64::max);
        let floor = min_fraction * top;
        // Label each plateau of locally maximal cells once.
        let mut seen = vec![vec![false; nf]; nq];
        let mut peaks = 0;
        for i in 0..nq {
            for j in 0..nf {
                if seen[i][j] || smooth[i][j] < floor || smooth[i][j] == 0.0 {
                    continue;
                }
                let level = smooth[i][j];
                let mut stack = vec![(i, j)];
                let mut plateau = vec![(i, j)];
                seen[i][j] = true;
                let mut is_peak = true;
                while let Some((a, b)) = stack.pop() {
                    for (c, d) in neighbors(a, b) {
                        if smooth[c][d] > level {
                            is_peak = false;
                        } else if smooth[c][d] == level && !seen[c][d] {
                            seen[c][d] = true;
                            stack.push((c, d));
                            plateau.push((c, d));
                        }
                    }
                }
                if is_peak {
                    peaks += 1;
                }
            }
        }
        peaks
    }

    pub fn to_csv(&self, meta: Metadata) -> CsvTable {
        let mut t = CsvTable::new(&["q_bin", "f_bin", "count"]);
        t.meta = meta;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                t.rows.push(vec![i as f64, j as f64, c as f64]);
            }
        }
        t
    }
}

/// Fits every member of an ensemble: generate, diagonalize, unfold, thin to
/// `f`, histogram and fit. Failures are kept in the per-spectrum list and
/// left out of the counts.
pub fn ensemble_fit(
    config: &EnsembleConfig,
    f: f64,
    table: &SigmaTable,
    opts: &EnsembleFitOptions,
) -> Result<FitDistribution> {
    config.validate()?;
    if config.count < 10 {
        return Err(invalid("count", format!("must be >= 10, got {}", config.count)));
    }
    if !(f > 0.0 && f <= 1.0) {
        return Err(invalid("f", format!("must lie in (0, 1], got {f}")));
    }
    opts.fit.validate()?;
    let one = |index: usize| -> Result<FitResult> {
        let seq = ensemble::observed_member(config, index, f, opts.edge_trim)?;
        let sample = stats::spacings(&seq, 0)?;
        let hist = stats::histogram(&sample, opts.bin_width, opts.s_max)?;
        fit_ps(&hist, table, &opts.fit)
    };
    let spectra: Vec<SpectrumFit> = (0..config.count)
        .into_par_iter()
        .map(|index| match one(index) {
            Ok(r) => SpectrumFit {
                index,
                result: Some(r),
                error: None,
            },
            Err(e) => SpectrumFit {
                index,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    FitDistribution::from_fits(spectra, opts.grid_bins)
}
