//! The free constants `b1`, `b2` of the order-1 and order-2 densities.
//!
//! With `a_n` tied to `b_n`, the order-n density integrates to one for any
//! `b_n`; the mean condition `<s> = n + 1` then fixes `b_n`. We solve it by
//! bracketed root finding and report the normalization residual alongside.

use std::sync::OnceLock;

use serde::Serialize;

use super::spline::NaturalCubicSpline;
use crate::error::{invalid, Error, Result};
use crate::model::{brody_coefficients, BrodyCoefficients, OrderKernel};

/// Target accuracy on the mean when solving for `b_n`.
pub const MEAN_TOLERANCE: f64 = 1e-10;
/// Residuals above this are flagged as inconsistent.
pub const RESIDUAL_FLAG: f64 = 1e-2;

const TABLE_NODES: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BnSolution {
    pub n: usize,
    pub q: f64,
    pub b: f64,
    /// Value of the printed parametrization at the same `q`.
    pub printed: f64,
    /// `<s> - (n + 1)` at the solution.
    pub mean_residual: f64,
    /// `integral p(n, s) ds - 1` at the solution.
    pub norm_residual: f64,
    /// False when either residual exceeds [`RESIDUAL_FLAG`].
    pub consistent: bool,
}

fn moments_for(q: f64, b1: f64, b2: f64) -> crate::model::OrderMoments {
    OrderKernel::new(BrodyCoefficients::from_b(q, b1, b2)).moments()
}

/// Illinois-modified regula falsi on a bracket of a decreasing function.
fn decreasing_root(g: impl Fn(f64) -> f64, guess: f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    let mut expansions = 0;
    while !(glo > 0.0 && ghi < 0.0) {
        expansions += 1;
        if expansions > 30 {
            return Err(Error::Bracketing {
                what: what.to_string(),
                lo,
                hi,
            });
        }
        if glo <= 0.0 {
            lo *= 0.5;
            glo = g(lo);
        }
        if ghi >= 0.0 {
            hi *= 2.0;
            ghi = g(hi);
        }
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (lo * ghi - hi * glo) / (ghi - glo);
        let gx = g(x);
        if gx.abs() < MEAN_TOLERANCE || (hi - lo) < 1e-15 * hi {
            return Ok(x);
        }
        if gx > 0.0 {
            lo = x;
            glo = gx;
            if side == 1 {
                ghi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            ghi = gx;
            if side == -1 {
                glo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn solve_b1(q: f64, printed: &BrodyCoefficients) -> Result<f64> {
    decreasing_root(
        |b1| moments_for(q, b1, printed.b2).mean1 - 2.0,
        printed.b1,
        "b1",
    )
}

fn solve_b2(q: f64, b1: f64, printed: &BrodyCoefficients) -> Result<f64> {
    decreasing_root(|b2| moments_for(q, b1, b2).mean2 - 3.0, printed.b2, "b2")
}

/// Solves the mean condition for `b_n`, `n` in {1, 2}. For `n = 2` the
/// order-1 constant is itself solved first.
pub fn solve_bn(n: usize, q: f64) -> Result<BnSolution> {
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid("q", format!("must lie in [0, 1], got {q}")));
    }
    let printed = brody_coefficients(q)?;
    let b1 = solve_b1(q, &printed)?;
    let (b, m) = match n {
        1 => (b1, moments_for(q, b1, printed.b2)),
        2 => {
            let b2 = solve_b2(q, b1, &printed)?;
            (b2, moments_for(q, b1, b2))
        }
        _ => return Err(invalid("n", format!("must be 1 or 2, got {n}"))),
    };
    let (mass, mean, printed_b) = if n == 1 {
        (m.mass1, m.mean1, printed.b1)
    } else {
        (m.mass2, m.mean2, printed.b2)
    };
    let mean_residual = mean - (n + 1) as f64;
    let norm_residual = mass - 1.0;
    Ok(BnSolution {
        n,
        q,
        b,
        printed: printed_b,
        mean_residual,
        norm_residual,
        consistent: mean_residual.abs() <= RESIDUAL_FLAG && norm_residual.abs() <= RESIDUAL_FLAG,
    })
}

struct SolvedTable {
    log_b1: NaturalCubicSpline,
    log_b2: NaturalCubicSpline,
}

fn solved_table() -> &'static SolvedTable {
    static TABLE: OnceLock<SolvedTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let qs: Vec<f64> = (0..TABLE_NODES)
            .map(|i| i as f64 / (TABLE_NODES - 1) as f64)
            .collect();
        let mut l1 = Vec::with_capacity(TABLE_NODES);
        let mut l2 = Vec::with_capacity(TABLE_NODES);
        for &q in &qs {
            if q == 0.0 {
                l1.push(0.0);
                l2.push(0.0);
                continue;
            }
            let printed = brody_coefficients(q).expect("q on grid");
            let b1 = solve_b1(q, &printed).expect("b1 bracket on grid");
            let b2 = solve_b2(q, b1, &printed).expect("b2 bracket on grid");
            l1.push(b1.ln());
            l2.push(b2.ln());
        }
        SolvedTable {
            log_b1: NaturalCubicSpline::new(&qs, &l1).expect("grid"),
            log_b2: NaturalCubicSpline::new(&qs, &l2).expect("grid"),
        }
    })
}

/// `(b1, b2)` satisfying the mean conditions, interpolated from solutions on
/// a uniform grid of 51 values of `q` (computed once per process).
pub fn mean_condition_b(q: f64) -> (f64, f64) {
    let t = solved_table();
    (t.log_b1.eval(q).exp(), t.log_b2.eval(q).exp())
}
