//! Quadrature rules: Gauss-Legendre panels with a spectral integration
//! matrix, and globally adaptive Gauss-Kronrod (7, 15) integration.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// An m-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1);
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_m.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Matrix `W` with `W[i][j] = integral from -1 to x_i of l_j`, where
    /// `l_j` is the Lagrange basis polynomial on the nodes. Applying it to
    /// samples of a smooth function gives its running integral at the nodes.
    pub fn integration_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.len();
        // Integrate each l_j exactly with a rule of higher degree on [-1, x_i].
        let fine = GaussLegendre::new(m + 2);
        (0..m)
            .map(|i| {
                let xi = self.nodes[i];
                (0..m)
                    .map(|j| fine.integrate(-1.0, xi, |t| self.lagrange(j, t)))
                    .collect()
            })
            .collect()
    }

    fn lagrange(&self, j: usize, t: f64) -> f64 {
        let xj = self.nodes[j];
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &xk)| (t - xk) / (xj - xk))
            .product()
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss-Kronrod (7, 15) estimate and error bound on `[a, b]`.
fn gk15(a: f64, b: f64, f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration: the interval with the
/// largest error estimate is bisected until the summed estimate is below
/// `abs_tol`. Fails with [`Error::Quadrature`] carrying the achieved bound.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = gk15(a, b, &f);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total_err = error;
    while total_err > opts.abs_tol {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                error_estimate: total_err,
                tolerance: opts.abs_tol,
            });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature {
                error_estimate: total_err,
                tolerance: opts.abs_tol,
            });
        }
        let (v1, e1) = gk15(worst.a, mid, &f);
        let (v2, e2) = gk15(mid, worst.b, &f);
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed drift from the incremental updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals: heap.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for m in [1, 2, 5, 12, 20] {
            let gl = GaussLegendre::new(m);
            assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let deg = 2 * m - 1;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let got = gl.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-13, "m={m}");
            let got = gl.integrate(0.0, 1.0, |x| x.powi(deg as i32 - 1));
            assert!((got - 1.0 / deg as f64).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn integration_matrix_reproduces_running_integral() {
        let gl = GaussLegendre::new(12);
        let w = gl.integration_matrix();
        let samples: Vec<f64> = gl.nodes.iter().map(|&x| x.cos()).collect();
        for (i, row) in w.iter().enumerate() {
            let got: f64 = row.iter().zip(&samples).map(|(a, b)| a * b).sum();
            let exact = gl.nodes[i].sin() - (-1.0f64).sin();
            assert!((got - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
        let r = integrate_adaptive(
            |x: f64| (-x).exp(),
            0.0,
            30.0,
            QuadOptions {
                abs_tol: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.value - (1.0 - (-30.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn adaptive_reports_failure() {
        let err = integrate_adaptive(
            |x: f64| (1.0 / x).sin() / x,
            1e-8,
            1.0,
            QuadOptions {
                abs_tol: 1e-14,
                max_intervals: 10,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
