//! Eigenvalues of real symmetric tridiagonal matrices by implicit QL.
//!
//! Only eigenvalues are accumulated, so one sweep costs O(N) and a full
//! decomposition is O(N^2).

use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Computes all eigenvalues of the symmetric tridiagonal matrix with main
/// diagonal `diag` and sub-diagonal `offdiag`, sorted ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if offdiag.len() + 1 != n {
        return Err(Error::LengthMismatch {
            expected: n - 1,
            got: offdiag.len(),
        });
    }
    if let Some(index) = diag.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(i) = offdiag.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: n + i });
    }

    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(offdiag);
    e.push(0.0);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS_PER_EIGENVALUE {
                return Err(Error::NoConvergence { iterations: sweeps });
            }

            // Wilkinson-type shift from the leading 2x2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0_f64, 1.0_f64, 0.0_f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}
