//! Worked examples from the module contracts, checked through the public API.

mod common;

use std::f64::consts::PI;

use levelfit::calibration::{calibrate_sigma, solve_bn, CalibrationOptions, SigmaTable};
use levelfit::ensemble::{
    self, gaussian_counting, sample_beta_hermite, semicircle_counting, thin, tridiagonal_eigenvalues,
    unfold_gaussian, unfold_semicircle, EnsembleConfig, ObservedSequence,
};
use levelfit::fit::{fit_ps, FitOptions};
use levelfit::model::{
    brody_coefficients, brody_ps, p1, p2, ps_missing, MissingLevelModel, ModelParams,
};
use levelfit::seed::{stream_rng, Stream};
use levelfit::stats::{
    chi2_distance, empirical_sigma, histogram, kolmogorov_distance, spacings, sup_distance,
    SpacingSample,
};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

#[test]
fn beta_hermite_shape_and_chi_degrees() {
    let cfg = EnsembleConfig::new(5, 1.0, 4000, 7).unwrap();
    let m = sample_beta_hermite(&cfg, 0).unwrap();
    assert_eq!((m.diag.len(), m.offdiag.len()), (5, 4));
    // E[(chi_nu / sqrt 2)^2] = nu / 2 with nu = 5 - k.
    let draws = 4000;
    let mut sq = [0.0; 4];
    for i in 0..draws {
        let m = sample_beta_hermite(&cfg, i).unwrap();
        for (s, x) in sq.iter_mut().zip(&m.offdiag) {
            *s += x * x / draws as f64;
        }
    }
    for (k, s) in sq.iter().enumerate() {
        let nu = (4 - k) as f64;
        assert!((s / (nu / 2.0) - 1.0).abs() < 0.06, "k={}: {s}", k + 1);
    }
    let zero = sample_beta_hermite(&EnsembleConfig::new(6, 0.0, 1, 3).unwrap(), 0).unwrap();
    assert!(zero.offdiag.iter().all(|&x| x == 0.0));
}

#[test]
fn eigen_small_closed_forms_and_bisection_oracle() {
    assert_eq!(tridiagonal_eigenvalues(&[2.5], &[]).unwrap(), vec![2.5]);
    let (d1, d2, e) = (0.3, -1.2, 0.7);
    let ev = tridiagonal_eigenvalues(&[d1, d2], &[e]).unwrap();
    let r = (((d1 - d2) / 2.0f64).powi(2) + e * e).sqrt();
    assert!((ev[0] - ((d1 + d2) / 2.0 - r)).abs() < 1e-14);
    assert!((ev[1] - ((d1 + d2) / 2.0 + r)).abs() < 1e-14);

    let mut rng = stream_rng(99, 0, Stream::Sampling);
    for _ in 0..50 {
        let d: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = tridiagonal_eigenvalues(&d, &e).unwrap();
        for (a, b) in got.iter().zip(common::bisection_eigenvalues(&d, &e)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn counting_functions_landmarks() {
    let n = 400;
    let r = (2.0 * n as f64).sqrt();
    assert!((semicircle_counting(0.0, n, 1.0) - 200.0).abs() < 1e-9);
    assert!((semicircle_counting(r, n, 1.0) - 400.0).abs() < 1e-9);
    assert!((gaussian_counting(0.0, n) - 200.0).abs() < 1e-12);
}

#[test]
fn semicircle_unfolding_flattens_goe() {
    let cfg = EnsembleConfig::new(2000, 1.0, 1, 11).unwrap();
    let s = ensemble::eigenvalues(&sample_beta_hermite(&cfg, 0).unwrap()).unwrap();
    let first = semicircle_counting(s.levels[0], 2000, 1.0);
    let last = semicircle_counting(*s.levels.last().unwrap(), 2000, 1.0);
    let mean = (last - first) / 1999.0;
    assert!((0.98..=1.02).contains(&mean), "{mean}");
    let seq = unfold_semicircle(&s).unwrap();
    assert!((seq.mean_spacing() - 1.0).abs() < 1e-12);
}

#[test]
fn gaussian_unfolding_gives_poisson_spacings() {
    let cfg = EnsembleConfig::new(5000, 0.0, 1, 5).unwrap();
    let s = ensemble::eigenvalues(&sample_beta_hermite(&cfg, 0).unwrap()).unwrap();
    let seq = unfold_gaussian(&s).unwrap();
    let sp = spacings(&seq, 0).unwrap();
    let d = kolmogorov_distance(&sp.values, |x| 1.0 - (-x).exp());
    assert!(d < 0.03, "{d}");
}

#[test]
fn thinning_examples() {
    let positions: Vec<f64> = (0..1000).map(|i| i as f64 + 0.3 * (i as f64).sin()).collect();
    let seq = ObservedSequence::new(positions, Some(1.0)).unwrap();
    let same = thin(&seq, 1.0, 1).unwrap();
    assert_eq!(same.positions, seq.positions);
    let t = thin(&seq, 0.7, 1).unwrap();
    assert_eq!(t.len(), 700);
    assert!((t.mean_spacing() - 1.0).abs() < 1e-12);
}

#[test]
fn spacing_examples() {
    let seq = ObservedSequence {
        positions: vec![0.0, 1.0, 2.5],
        f_true: None,
        meta: Default::default(),
    };
    assert_eq!(spacings(&seq, 0).unwrap().values, vec![1.0, 1.5]);
    assert_eq!(spacings(&seq, 1).unwrap().values, vec![2.5]);

    let cfg = EnsembleConfig::new(2000, 1.0, 1, 21).unwrap();
    let s = ensemble::eigenvalues(&sample_beta_hermite(&cfg, 0).unwrap()).unwrap();
    let sp = spacings(&unfold_semicircle(&s).unwrap(), 2).unwrap();
    assert!((sp.mean() - 3.0).abs() < 0.05, "{}", sp.mean());
}

#[test]
fn histogram_examples() {
    let one = SpacingSample {
        order: 0,
        values: vec![0.55],
    };
    let h = histogram(&one, 0.1, 1.0).unwrap();
    for (j, d) in h.densities.iter().enumerate() {
        let want = if j == 5 { 10.0 } else { 0.0 };
        assert!((d - want).abs() < 1e-12, "bin {j}: {d}");
    }

    let mut rng = stream_rng(5, 0, Stream::Sampling);
    let values: Vec<f64> = (0..1_000_000).map(|_| Exp1.sample(&mut rng)).collect();
    let h = histogram(&SpacingSample { order: 0, values }, 0.1, 30.0).unwrap();
    let exact = (1.0 - (-0.1f64).exp()) / 0.1;
    assert!((h.densities[0] - exact).abs() < 0.01);
    let mass: f64 = h.densities.iter().sum::<f64>() * 0.1;
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn empirical_sigma_examples() {
    let cfg = EnsembleConfig::new(2000, 0.0, 20, 8).unwrap();
    let samples: Vec<SpacingSample> = (0..20)
        .map(|i| spacings(&ensemble::observed_member(&cfg, i, 1.0, 0.05).unwrap(), 3).unwrap())
        .collect();
    let v = empirical_sigma(&samples, 10_000).unwrap();
    assert!((v / 4.0 - 1.0).abs() < 0.05, "{v}");
    let flat = SpacingSample {
        order: 3,
        values: vec![4.0; 20_000],
    };
    assert_eq!(empirical_sigma(&[flat], 10_000).unwrap(), 0.0);
}

#[test]
fn closed_form_examples() {
    let c = brody_coefficients(0.0).unwrap();
    assert_eq!((c.a, c.b, c.b1, c.b2), (1.0, 1.0, 1.0, 1.0));
    let c = brody_coefficients(1.0).unwrap();
    assert!((c.b - PI / 4.0).abs() < 1e-12 && (c.a - PI / 2.0).abs() < 1e-12);
    assert!((c.b1 - 1.0 / 7.2).abs() < 1e-12 && (c.b2 - 1.0 / 60.0).abs() < 1e-12);

    assert_eq!(brody_ps(0.0, 0.0), 1.0);
    assert_eq!(brody_ps(0.0, 0.5), 0.0);
    assert!((brody_ps(1.0, 1.0) - 0.716_185_936_340_569_2).abs() < 1e-12);
    assert!((p1(1.0, 0.0).unwrap() - (-1.0f64).exp()).abs() < 1e-8);
    assert!((p2(2.0, 0.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-8);
}

#[test]
fn complete_spectrum_reduction_is_exact() {
    let t = SigmaTable::bundled();
    for q in [0.0, 0.3, 1.0] {
        for s in [0.0, 0.4, 1.7, 4.0] {
            assert_eq!(
                ps_missing(s, ModelParams::new(q, 1.0).unwrap(), &t, 150).unwrap(),
                brody_ps(s, q)
            );
        }
    }
}

#[test]
fn sampler_reproduces_wigner() {
    let t = SigmaTable::bundled();
    let model = MissingLevelModel::new(&t);
    let n = 1_000_000;
    let p = ModelParams::new(1.0, 1.0).unwrap();
    let sample = model.sample_spacings(p, n, 3).unwrap();
    let h = histogram(&sample, 0.1, 5.0).unwrap();
    let wigner: Vec<f64> = h.bin_centers().iter().map(|&s| brody_ps(s, 1.0)).collect();
    let d = sup_distance(&h, &wigner).unwrap();
    assert!(d < 0.01, "{d}");
    assert!((sample.mean() - 1.0).abs() < 3.0 / (n as f64).sqrt());
    assert_eq!(model.sample_spacings(p, 1000, 3).unwrap().values[..], sample.values[..1000]);
}

#[test]
fn ensemble_distance_ordering() {
    let t = SigmaTable::bundled();
    let cfg = EnsembleConfig::new(2000, 0.7, 100, 2024).unwrap();
    let samples: Vec<SpacingSample> = (0..100)
        .map(|i| spacings(&ensemble::observed_member(&cfg, i, 0.7, 0.05).unwrap(), 0).unwrap())
        .collect();
    let h = histogram(&SpacingSample::pooled(&samples).unwrap(), 0.1, 5.0).unwrap();
    let x = h.bin_centers();
    let model = MissingLevelModel::new(&t);
    let curve = |q, f| model.curve(ModelParams::new(q, f).unwrap(), &x).unwrap();
    let d = |c: &[f64]| chi2_distance(&h, c).unwrap();
    let target = d(&curve(0.7, 0.7));
    let poisson: Vec<f64> = x.iter().map(|s| (-s).exp()).collect();
    let wigner: Vec<f64> = x.iter().map(|&s| brody_ps(s, 1.0)).collect();
    assert!(target < d(&curve(0.7, 1.0)));
    assert!(target < d(&poisson));
    assert!(target < d(&wigner));
    assert_eq!(chi2_distance(&h, &h.densities).unwrap(), 0.0);
}

#[test]
fn calibration_examples() {
    let opts = CalibrationOptions {
        q_grid: vec![0.0, 0.5, 1.0],
        n_max: 8,
        n_dim: 1000,
        count: 12,
        master_seed: 77,
        edge_trim: 0.05,
        min_cell: 5_000,
    };
    let a = calibrate_sigma(&opts).unwrap();
    for n in 3..=8 {
        assert_eq!(a.lookup(n, 0.0).unwrap(), (n + 1) as f64);
    }
    assert!(a.lookup(3, 1.0).unwrap() < 4.0);
    assert_eq!(a.lookup(5, 0.5).unwrap(), a.stored(5, 1));
    assert_eq!(calibrate_sigma(&opts).unwrap().to_csv().to_text(), a.to_csv().to_text());
    assert_eq!(SigmaTable::bundled().lookup(5, 0.0).unwrap(), 6.0);

    assert!((solve_bn(1, 0.0).unwrap().b - 1.0).abs() < 1e-8);
    assert!((solve_bn(2, 0.0).unwrap().b - 1.0).abs() < 1e-8);
    let b2 = solve_bn(2, 0.5).unwrap().b;
    assert!((b2 / (1.0 / 11.05) - 1.0).abs() < 0.1, "{b2}");
}

fn sample_hist(q: f64, f: f64, seed: u64) -> levelfit::stats::SpacingHistogram {
    let t = SigmaTable::bundled();
    let s = MissingLevelModel::new(&t)
        .sample_spacings(ModelParams::new(q, f).unwrap(), 100_000, seed)
        .unwrap();
    histogram(&s, 0.1, 5.0).unwrap()
}

#[test]
fn fit_recovers_model_samples() {
    let t = SigmaTable::bundled();
    let r = fit_ps(&sample_hist(0.6, 0.8, 1), &t, &FitOptions::default()).unwrap();
    assert!((r.q_hat - 0.6).abs() < 0.05 && (r.f_hat - 0.8).abs() < 0.05, "{r:?}");
}

#[test]
fn fit_recovers_complete_brody_spectrum() {
    let t = SigmaTable::bundled();
    let r = fit_ps(&sample_hist(0.5, 1.0, 2), &t, &FitOptions::default()).unwrap();
    assert!(r.f_hat >= 0.95 && (r.q_hat - 0.5).abs() < 0.05, "{r:?}");
}

#[test]
fn near_poisson_fits_are_mostly_ambiguous() {
    let t = SigmaTable::bundled();
    let cfg = EnsembleConfig::new(1000, 0.1, 15, 31).unwrap();
    let flagged = (0..15)
        .filter(|&i| {
            let seq = ensemble::observed_member(&cfg, i, 0.4, 0.05).unwrap();
            let h = histogram(&spacings(&seq, 0).unwrap(), 0.1, 5.0).unwrap();
            fit_ps(&h, &t, &FitOptions::default()).unwrap().ambiguous
        })
        .count();
    assert!(flagged > 7, "{flagged} of 15 flagged");
}
