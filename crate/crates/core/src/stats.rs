//! Order-n spacings, density histograms and distances between an empirical
//! spacing distribution and a model curve.

use crate::ensemble::ObservedSequence;
use crate::error::{invalid, Error, Result};
use crate::io::{meta_f64, CsvTable, Metadata};

/// Default bin width for nearest-neighbor spacing histograms.
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
/// Default upper edge of the histogram range.
pub const DEFAULT_S_MAX: f64 = 5.0;
/// Minimum pooled count accepted by [`empirical_sigma`].
pub const DEFAULT_MIN_POOLED: usize = 10_000;

/// Gaps between levels `order + 1` apart (`order = 0` is the nearest-neighbor
/// spacing).
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingSample {
    pub order: usize,
    pub values: Vec<f64>,
}

impl SpacingSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Concatenates samples of a common order.
    pub fn pooled<'a>(samples: impl IntoIterator<Item = &'a SpacingSample>) -> Result<Self> {
        let mut out: Option<SpacingSample> = None;
        for s in samples {
            match &mut out {
                None => out = Some(s.clone()),
                Some(acc) => {
                    if acc.order != s.order {
                        return Err(invalid("order", "cannot pool spacings of different orders"));
                    }
                    acc.values.extend_from_slice(&s.values);
                }
            }
        }
        out.ok_or(Error::EmptySample)
    }
}

pub fn spacings(seq: &ObservedSequence, order: usize) -> Result<SpacingSample> {
    let p = &seq.positions;
    if p.len() < order + 2 {
        return Err(Error::TooShort {
            needed: order + 2,
            got: p.len(),
        });
    }
    let values: Vec<f64> = p.iter().zip(&p[order + 1..]).map(|(a, b)| b - a).collect();
    if let Some(index) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateSpacing {
            index,
            value: values[index],
        });
    }
    Ok(SpacingSample { order, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacingHistogram {
    pub bin_width: f64,
    pub s_max: f64,
    /// Density per bin, normalized by the full sample size.
    pub densities: Vec<f64>,
    /// Number of values that produced the histogram, including those at or
    /// beyond `s_max`.
    pub total_count: usize,
}

impl SpacingHistogram {
    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|j| (j as f64 + 0.5) * self.bin_width)
            .collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        let scale = self.total_count as f64 * self.bin_width;
        self.densities.iter().map(|d| (d * scale).round()).collect()
    }

    /// Number of leading bins up to and including the last occupied one.
    pub fn occupied_prefix(&self) -> usize {
        self.densities
            .iter()
            .rposition(|&d| d > 0.0)
            .map_or(0, |j| j + 1)
    }

    pub fn to_csv(&self, mut meta: Metadata) -> CsvTable {
        meta.insert("bin_width".into(), self.bin_width.to_string());
        meta.insert("s_max".into(), self.s_max.to_string());
        meta.insert("total_count".into(), self.total_count.to_string());
        let mut t = CsvTable::new(&["bin_left", "bin_right", "density"]);
        t.meta = meta;
        for (j, &d) in self.densities.iter().enumerate() {
            let left = j as f64 * self.bin_width;
            t.rows.push(vec![left, left + self.bin_width, d]);
        }
        t
    }

    pub fn from_csv(t: &CsvTable) -> Result<Self> {
        let bin_width = meta_f64(&t.meta, "bin_width")?;
        let s_max = meta_f64(&t.meta, "s_max")?;
        let total_count = meta_f64(&t.meta, "total_count")? as usize;
        let col = t.column("density")?;
        let densities: Vec<f64> = t.rows.iter().map(|r| r[col]).collect();
        if !(bin_width > 0.0) || densities.is_empty() {
            return Err(Error::DegenerateHistogram("no bins".into()));
        }
        Ok(SpacingHistogram {
            bin_width,
            s_max,
            densities,
            total_count,
        })
    }
}

pub fn histogram(sample: &SpacingSample, bin_width: f64, s_max: f64) -> Result<SpacingHistogram> {
    if !(bin_width > 0.0) {
        return Err(invalid("bin_width", format!("must be > 0, got {bin_width}")));
    }
    if !(s_max >= bin_width) {
        return Err(invalid("s_max", format!("must be >= bin_width, got {s_max}")));
    }
    if sample.values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n_bins = (s_max / bin_width + 1e-9).floor() as usize;
    let upper = n_bins as f64 * bin_width;
    let mut counts = vec![0usize; n_bins];
    for &v in &sample.values {
        if v >= 0.0 && v < upper {
            let j = ((v / bin_width) as usize).min(n_bins - 1);
            counts[j] += 1;
        }
    }
    let total = sample.values.len();
    let norm = 1.0 / (total as f64 * bin_width);
    Ok(SpacingHistogram {
        bin_width,
        s_max: upper,
        densities: counts.iter().map(|&c| c as f64 * norm).collect(),
        total_count: total,
    })
}

fn check_len(hist: &SpacingHistogram, curve: &[f64]) -> Result<()> {
    if curve.len() != hist.n_bins() {
        return Err(Error::LengthMismatch {
            expected: hist.n_bins(),
            got: curve.len(),
        });
    }
    Ok(())
}

/// Squared L2 distance between the histogram density and a model curve
/// sampled at the bin centers: `sum_j (h_j - m_j)^2 * bin_width`.
pub fn chi2_distance(hist: &SpacingHistogram, model_curve: &[f64]) -> Result<f64> {
    check_len(hist, model_curve)?;
    Ok(chi2_prefix(hist, model_curve, hist.n_bins()))
}

/// [`chi2_distance`] restricted to the first `bins` bins.
pub(crate) fn chi2_prefix(hist: &SpacingHistogram, model_curve: &[f64], bins: usize) -> f64 {
    hist.densities[..bins]
        .iter()
        .zip(&model_curve[..bins])
        .map(|(h, m)| (h - m).powi(2))
        .sum::<f64>()
        * hist.bin_width
}

/// Largest absolute difference between histogram density and model curve.
pub fn sup_distance(hist: &SpacingHistogram, model_curve: &[f64]) -> Result<f64> {
    check_len(hist, model_curve)?;
    Ok(hist
        .densities
        .iter()
        .zip(model_curve)
        .map(|(h, m)| (h - m).abs())
        .fold(0.0, f64::max))
}

/// Kolmogorov distance between the empirical distribution of `values` and
/// the cumulative distribution `cdf`.
pub fn kolmogorov_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Pooled sample variance of order-n spacings from several sequences.
pub fn empirical_sigma(samples: &[SpacingSample], min_count: usize) -> Result<f64> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    if samples.iter().any(|s| s.order != first.order) {
        return Err(invalid("order", "samples must share a spacing order"));
    }
    let count: usize = samples.iter().map(|s| s.len()).sum();
    if count < min_count.max(2) {
        return Err(Error::InsufficientStatistics(format!(
            "order {} has {count} pooled spacings, need {min_count}",
            first.order
        )));
    }
    let mean = samples.iter().flat_map(|s| &s.values).sum::<f64>() / count as f64;
    let ss: f64 = samples
        .iter()
        .flat_map(|s| &s.values)
        .map(|v| (v - mean).powi(2))
        .sum();
    Ok(ss / (count - 1) as f64)
}
