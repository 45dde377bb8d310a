//! Independent oracles shared by the integration tests.

/// Eigenvalues by Sturm-sequence bisection on the characteristic polynomial.
pub fn bisection_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let bound = d
        .iter()
        .enumerate()
        .map(|(i, di)| {
            let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { e[i].abs() } else { 0.0 };
            di.abs() + left + right
        })
        .fold(0.0, f64::max)
        + 1.0;
    // Number of eigenvalues below x.
    let count = |x: f64| {
        let mut c = 0;
        let mut q = d[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..n {
            let qq = if q == 0.0 { 1e-300 } else { q };
            q = d[i] - x - e[i - 1] * e[i - 1] / qq;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}
