//! Beta-Hermite random matrices, their spectra, unfolding and thinning.
//!
//! A beta-Hermite matrix of size N is real symmetric tridiagonal with
//! standard normal diagonal and `chi_{beta (N - k)} / sqrt(2)` off-diagonal
//! entries. Its eigenvalues follow the semicircle law of radius
//! `sqrt(2 N beta)`; at `beta = 0` the matrix is diagonal and the levels are
//! independent Gaussians. All operations here are pure functions of their
//! inputs and seeds, so distinct matrix indices can be processed in any
//! order or concurrently.

mod eigen;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub use eigen::tridiagonal_eigenvalues;

use crate::error::{invalid, Error, Result};
use crate::io::{meta_f64, Metadata, ValueFile};
use crate::seed::{stream_rng, Stream};

/// Default fraction of levels discarded at each spectrum edge.
pub const DEFAULT_EDGE_TRIM: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_dim: usize,
    pub beta: f64,
    pub count: usize,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn new(n_dim: usize, beta: f64, count: usize, master_seed: u64) -> Result<Self> {
        let config = EnsembleConfig {
            n_dim,
            beta,
            count,
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim < 2 {
            return Err(invalid("n_dim", format!("must be >= 2, got {}", self.n_dim)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        if self.count < 1 {
            return Err(invalid("count", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    pub diag: Vec<f64>,
    /// Coupling between rows k and k+1; nonnegative.
    pub offdiag: Vec<f64>,
    /// Repulsion parameter the matrix was drawn with.
    pub beta: f64,
}

/// Sorted eigenvalues of one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub levels: Vec<f64>,
    pub n_dim: usize,
    pub beta: f64,
}

/// Unfolded level positions with unit mean spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSequence {
    pub positions: Vec<f64>,
    /// Fraction of the true levels still present, when known.
    pub f_true: Option<f64>,
    pub meta: Metadata,
}

/// Samples a chi variate with `nu` degrees of freedom as the square root of
/// a Gamma(nu / 2, scale 2) variate. `nu = 0` is the point mass at zero.
pub fn sample_chi<R: Rng + ?Sized>(rng: &mut R, nu: f64) -> f64 {
    if nu <= 0.0 {
        return 0.0;
    }
    let gamma = Gamma::new(0.5 * nu, 2.0).expect("positive shape and scale");
    gamma.sample(rng).sqrt()
}

/// Draws matrix `index` of the ensemble.
pub fn sample_beta_hermite(config: &EnsembleConfig, index: usize) -> Result<TridiagonalMatrix> {
    config.validate()?;
    if index >= config.count {
        return Err(invalid(
            "index",
            format!("must be < count = {}, got {index}", config.count),
        ));
    }
    let n = config.n_dim;
    let mut rng = stream_rng(config.master_seed, index as u64, Stream::Matrix);
    let diag: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let offdiag: Vec<f64> = (1..n)
        .map(|k| sample_chi(&mut rng, config.beta * (n - k) as f64) / std::f64::consts::SQRT_2)
        .collect();
    Ok(TridiagonalMatrix {
        diag,
        offdiag,
        beta: config.beta,
    })
}

pub fn eigenvalues(m: &TridiagonalMatrix) -> Result<Spectrum> {
    let levels = tridiagonal_eigenvalues(&m.diag, &m.offdiag)?;
    Ok(Spectrum {
        n_dim: levels.len(),
        levels,
        beta: m.beta,
    })
}

/// Mean number of levels below `e` under the semicircle law of an
/// `n_dim` x `n_dim` beta-Hermite matrix. Levels outside the support are
/// clamped to its edges.
pub fn semicircle_counting(e: f64, n_dim: usize, beta: f64) -> f64 {
    let n = n_dim as f64;
    let radius = (2.0 * n * beta).sqrt();
    let x = (e / radius).clamp(-1.0, 1.0);
    n * (0.5 + (x.asin() + x * (1.0 - x * x).sqrt()) / std::f64::consts::PI)
}

/// Mean number of levels below `e` for the diagonal (`beta = 0`) ensemble,
/// whose levels are independent standard normals.
pub fn gaussian_counting(e: f64, n_dim: usize) -> f64 {
    n_dim as f64 * 0.5 * libm::erfc(-e / std::f64::consts::SQRT_2)
}

pub fn unfold_semicircle(s: &Spectrum) -> Result<ObservedSequence> {
    if !(s.beta > 0.0) {
        return Err(invalid(
            "beta",
            "semicircle unfolding needs beta > 0; use Gaussian unfolding at beta = 0",
        ));
    }
    let positions = s
        .levels
        .iter()
        .map(|&e| semicircle_counting(e, s.n_dim, s.beta))
        .collect();
    finish_unfold(s, positions, "semicircle")
}

pub fn unfold_gaussian(s: &Spectrum) -> Result<ObservedSequence> {
    if s.beta != 0.0 {
        return Err(invalid(
            "beta",
            format!("Gaussian unfolding needs beta = 0, got {}", s.beta),
        ));
    }
    let positions = s.levels.iter().map(|&e| gaussian_counting(e, s.n_dim)).collect();
    finish_unfold(s, positions, "gaussian")
}

/// Picks the unfolding that matches the spectrum's repulsion parameter.
pub fn unfold(s: &Spectrum) -> Result<ObservedSequence> {
    if s.beta == 0.0 {
        unfold_gaussian(s)
    } else {
        unfold_semicircle(s)
    }
}

fn finish_unfold(s: &Spectrum, positions: Vec<f64>, method: &str) -> Result<ObservedSequence> {
    let mut meta = Metadata::new();
    meta.insert("n_dim".into(), s.n_dim.to_string());
    meta.insert("beta".into(), s.beta.to_string());
    meta.insert("unfolding".into(), method.into());
    let mut seq = ObservedSequence {
        positions,
        f_true: Some(1.0),
        meta,
    };
    seq.renormalize()?;
    Ok(seq)
}

/// How levels are removed by [`thin`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThinningMode {
    /// Remove exactly `round(len * (1 - f))` levels.
    #[default]
    ExactCount,
    /// Keep each level independently with probability `f`.
    Bernoulli,
}

impl ObservedSequence {
    pub fn new(positions: Vec<f64>, f_true: Option<f64>) -> Result<Self> {
        let mut seq = ObservedSequence {
            positions,
            f_true,
            meta: Metadata::new(),
        };
        seq.renormalize()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean_spacing(&self) -> f64 {
        let n = self.positions.len();
        (self.positions[n - 1] - self.positions[0]) / (n - 1) as f64
    }

    /// Rescales positions so the mean consecutive spacing is one.
    pub fn renormalize(&mut self) -> Result<()> {
        if self.positions.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: self.positions.len(),
            });
        }
        if let Some(index) = self.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(i) = self.positions.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Unsorted { index: i + 1 });
        }
        let mean = self.mean_spacing();
        if !(mean > 0.0) {
            return Err(invalid("positions", "all levels coincide"));
        }
        for p in &mut self.positions {
            *p /= mean;
        }
        Ok(())
    }
}

/// Removes a random fraction `1 - f` of the levels and renormalizes the rest.
pub fn thin(seq: &ObservedSequence, f: f64, seed: u64) -> Result<ObservedSequence> {
    thin_with_mode(seq, f, seed, ThinningMode::ExactCount)
}

pub fn thin_with_mode(
    seq: &ObservedSequence,
    f: f64,
    seed: u64,
    mode: ThinningMode,
) -> Result<ObservedSequence> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(invalid("f", format!("must lie in (0, 1], got {f}")));
    }
    let len = seq.positions.len();
    if len < 3 {
        return Err(Error::TooShort { needed: 3, got: len });
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let keep: Vec<bool> = match mode {
        ThinningMode::ExactCount => {
            let remove = (len as f64 * (1.0 - f)).round() as usize;
            let mut keep = vec![true; len];
            for i in rand::seq::index::sample(&mut rng, len, remove.min(len)) {
                keep[i] = false;
            }
            keep
        }
        ThinningMode::Bernoulli => (0..len).map(|_| rng.random::<f64>() < f).collect(),
    };
    if keep.iter().all(|&k| k) {
        return Ok(ObservedSequence {
            f_true: seq.f_true.map(|ft| ft * f),
            ..seq.clone()
        });
    }
    let positions: Vec<f64> = seq
        .positions
        .iter()
        .zip(&keep)
        .filter_map(|(&p, &k)| k.then_some(p))
        .collect();
    if positions.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: positions.len(),
        });
    }
    let mut out = ObservedSequence {
        positions,
        f_true: seq.f_true.map(|ft| ft * f),
        meta: seq.meta.clone(),
    };
    out.renormalize()?;
    Ok(out)
}

/// Drops `floor(len * fraction)` levels from each end and renormalizes.
pub fn trim_edges(seq: &ObservedSequence, fraction: f64) -> Result<ObservedSequence> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(invalid("trim", format!("must lie in [0, 0.5), got {fraction}")));
    }
    let len = seq.positions.len();
    let cut = (len as f64 * fraction).floor() as usize;
    let mut out = ObservedSequence {
        positions: seq.positions[cut..len - cut].to_vec(),
        f_true: seq.f_true,
        meta: seq.meta.clone(),
    };
    out.renormalize()?;
    Ok(out)
}

/// Generates, diagonalizes and unfolds matrix `index`, then trims the edges
/// and thins to fraction `f`. This is the per-spectrum unit of work shared by
/// validation, calibration and ensemble fitting.
pub fn observed_member(
    config: &EnsembleConfig,
    index: usize,
    f: f64,
    edge_trim: f64,
) -> Result<ObservedSequence> {
    let m = sample_beta_hermite(config, index)?;
    let spectrum = eigenvalues(&m)?;
    let unfolded = trim_edges(&unfold(&spectrum)?, edge_trim)?;
    let seed = crate::seed::derive_seed(config.master_seed, index as u64, Stream::Thinning);
    let mut seq = thin(&unfolded, f, seed)?;
    seq.meta.insert("master_seed".into(), config.master_seed.to_string());
    seq.meta.insert("index".into(), index.to_string());
    Ok(seq)
}

impl Spectrum {
    pub fn to_value_file(&self, mut meta: Metadata) -> ValueFile {
        meta.insert("kind".into(), "spectrum".into());
        meta.insert("n_dim".into(), self.n_dim.to_string());
        meta.insert("beta".into(), self.beta.to_string());
        ValueFile {
            meta,
            values: self.levels.clone(),
        }
    }

    pub fn from_value_file(file: &ValueFile) -> Result<Self> {
        let beta = meta_f64(&file.meta, "beta")?;
        let n_dim = meta_f64(&file.meta, "n_dim")? as usize;
        if n_dim != file.values.len() {
            return Err(Error::LengthMismatch {
                expected: n_dim,
                got: file.values.len(),
            });
        }
        if let Some(i) = file.values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Unsorted { index: i + 1 });
        }
        Ok(Spectrum {
            levels: file.values.clone(),
            n_dim,
            beta,
        })
    }
}

impl ObservedSequence {
    pub fn to_value_file(&self, extra: Metadata) -> ValueFile {
        let mut meta = self.meta.clone();
        meta.extend(extra);
        meta.insert("kind".into(), "observed_sequence".into());
        match self.f_true {
            Some(f) => meta.insert("f_true".into(), f.to_string()),
            None => meta.remove("f_true"),
        };
        ValueFile {
            meta,
            values: self.positions.clone(),
        }
    }

    /// Reads an observed sequence; externally produced files without an
    /// `f_true` key are accepted and renormalized to unit mean spacing.
    pub fn from_value_file(file: &ValueFile) -> Result<Self> {
        let f_true = match file.meta.get("f_true") {
            Some(_) => Some(meta_f64(&file.meta, "f_true")?),
            None => None,
        };
        let mut seq = ObservedSequence {
            positions: file.values.clone(),
            f_true,
            meta: file.meta.clone(),
        };
        seq.meta.remove("kind");
        seq.meta.remove("f_true");
        seq.renormalize()?;
        Ok(seq)
    }
}
