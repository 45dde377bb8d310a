//! Second- and third-neighbor spacing densities of the Brody family.
//!
//! With `p0` the Brody density, the higher orders follow the recursion
//!
//! ```text
//! p_n(s) = a_n s^{c_n} exp(-b_n s^{c_n + 1}) * integral_0^s p_{n-1}(x) exp(b_n x^{c_n + 1}) dx
//! ```
//!
//! with `c_n = (n + 1) q` and `a_n = (c_n + 1) b_n`. The kernel carries the
//! running inner integrals (scaled by their decaying prefactor so nothing
//! overflows) along a panel mesh: Gauss-Legendre nodes on each panel, with a
//! spectral integration matrix giving the inner integral at every outer node.
//! Panels grow geometrically away from the origin so the `x^q` endpoint
//! behavior is resolved, and are kept narrow enough that no exponential
//! factor changes by more than `e^4` across one panel.

use std::sync::OnceLock;

use super::BrodyCoefficients;
use crate::quad::GaussLegendre;

const NODES: usize = 12;
const MAX_PANEL: f64 = 0.5;
const FIRST_PANEL: f64 = 1e-9;
const MAX_EXPONENT_SWING: f64 = 4.0;
const NEGLIGIBLE: f64 = 1e-40;
const HARD_LIMIT: f64 = 400.0;

struct PanelRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    running: Vec<Vec<f64>>,
}

fn rule() -> &'static PanelRule {
    static RULE: OnceLock<PanelRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = GaussLegendre::new(NODES);
        let running = gl.integration_matrix();
        PanelRule {
            nodes: gl.nodes,
            weights: gl.weights,
            running,
        }
    })
}

/// Integrals of the order-1 and order-2 densities and their first moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderMoments {
    pub mass1: f64,
    pub mean1: f64,
    pub mass2: f64,
    pub mean2: f64,
}

#[derive(Debug, Clone, Copy)]
struct State {
    at: f64,
    j1: f64,
    j2: f64,
}

/// Evaluator for `p(1, s)` and `p(2, s)` at a fixed set of coefficients.
#[derive(Debug, Clone)]
pub struct OrderKernel {
    c: BrodyCoefficients,
    // Exponents q + 1, 2q + 1, 3q + 1 of the three stretched exponentials.
    e0: f64,
    e1: f64,
    e2: f64,
}

impl OrderKernel {
    pub fn new(c: BrodyCoefficients) -> Self {
        let q = c.q;
        OrderKernel {
            c,
            e0: q + 1.0,
            e1: 2.0 * q + 1.0,
            e2: 3.0 * q + 1.0,
        }
    }

    pub fn coefficients(&self) -> &BrodyCoefficients {
        &self.c
    }

    fn p0(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if self.c.q == 0.0 { self.c.a } else { 0.0 };
        }
        let lx = x.ln();
        self.c.a * (self.c.q * lx - self.c.b * (self.e0 * lx).exp()).exp()
    }

    fn values_at(&self, s: &State) -> (f64, f64) {
        if s.at <= 0.0 {
            return (0.0, 0.0);
        }
        let lx = s.at.ln();
        let q = self.c.q;
        (
            self.c.a1 * (2.0 * q * lx).exp() * s.j1,
            self.c.a2 * (3.0 * q * lx).exp() * s.j2,
        )
    }

    fn panel_width(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return FIRST_PANEL;
        }
        let mut w = MAX_PANEL.min(3.0 * u);
        for _ in 0..3 {
            let x = u + w;
            let mut limit = MAX_PANEL.min(3.0 * u);
            for (b, e) in [(self.c.b, self.e0), (self.c.b1, self.e1), (self.c.b2, self.e2)] {
                let slope = b * e * x.powf(e - 1.0);
                if slope > 0.0 {
                    limit = limit.min(MAX_EXPONENT_SWING / slope);
                }
            }
            w = limit;
        }
        w
    }

    /// Carries the running integrals from `s.at` to `v`. When `moments` is
    /// given, the panel's contribution to the mass and mean of both
    /// densities is added to it.
    fn advance(&self, s: State, v: f64, moments: Option<&mut OrderMoments>) -> State {
        let r = rule();
        let c = &self.c;
        let q = c.q;
        let u = s.at;
        let half = 0.5 * (v - u);
        let mid = 0.5 * (u + v);
        let s1u = if u > 0.0 { u.powf(self.e1) } else { 0.0 };
        let s2u = if u > 0.0 { u.powf(self.e2) } else { 0.0 };

        let mut x = [0.0; NODES];
        let mut lx = [0.0; NODES];
        let mut h1 = [0.0; NODES];
        let mut d1 = [0.0; NODES];
        let mut d2 = [0.0; NODES];
        for i in 0..NODES {
            x[i] = mid + half * r.nodes[i];
            lx[i] = x[i].ln();
            let p0e = (self.e0 * lx[i]).exp();
            d1[i] = (self.e1 * lx[i]).exp() - s1u;
            d2[i] = (self.e2 * lx[i]).exp() - s2u;
            h1[i] = c.a * (q * lx[i] - c.b * p0e + c.b1 * d1[i]).exp();
        }

        let mut p1 = [0.0; NODES];
        let mut h2 = [0.0; NODES];
        for i in 0..NODES {
            let k1: f64 = half * r.running[i].iter().zip(&h1).map(|(w, h)| w * h).sum::<f64>();
            let j1 = (-c.b1 * d1[i]).exp() * (s.j1 + k1);
            p1[i] = c.a1 * (2.0 * q * lx[i]).exp() * j1;
            h2[i] = p1[i] * (c.b2 * d2[i]).exp();
        }

        let int1: f64 = half * r.weights.iter().zip(&h1).map(|(w, h)| w * h).sum::<f64>();
        let int2: f64 = half * r.weights.iter().zip(&h2).map(|(w, h)| w * h).sum::<f64>();
        let s1v = v.powf(self.e1);
        let s2v = v.powf(self.e2);
        let next = State {
            at: v,
            j1: (-c.b1 * (s1v - s1u)).exp() * (s.j1 + int1),
            j2: (-c.b2 * (s2v - s2u)).exp() * (s.j2 + int2),
        };

        if let Some(m) = moments {
            for i in 0..NODES {
                let k2: f64 =
                    half * r.running[i].iter().zip(&h2).map(|(w, h)| w * h).sum::<f64>();
                let j2 = (-c.b2 * d2[i]).exp() * (s.j2 + k2);
                let p2 = c.a2 * (3.0 * q * lx[i]).exp() * j2;
                let w = half * r.weights[i];
                m.mass1 += w * p1[i];
                m.mean1 += w * x[i] * p1[i];
                m.mass2 += w * p2;
                m.mean2 += w * x[i] * p2;
            }
        }
        next
    }

    fn negligible(&self, s: &State) -> bool {
        if s.at < 8.0 {
            return false;
        }
        let (p1, p2) = self.values_at(s);
        self.p0(s.at) < NEGLIGIBLE && p1 < NEGLIGIBLE && p2 < NEGLIGIBLE
    }

    /// Returns `[p(1, t), p(2, t)]` for every `t` in `ts` (any order).
    pub fn evaluate(&self, ts: &[f64]) -> Vec<[f64; 2]> {
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.sort_by(|&i, &j| ts[i].total_cmp(&ts[j]));
        let mut out = vec![[0.0; 2]; ts.len()];
        let mut state = State {
            at: 0.0,
            j1: 0.0,
            j2: 0.0,
        };
        let mut exhausted = false;
        for idx in order {
            let t = ts[idx];
            if !(t > 0.0) || exhausted {
                continue;
            }
            while state.at < t {
                let v = (state.at + self.panel_width(state.at)).min(t);
                state = self.advance(state, v, None);
                if self.negligible(&state) || state.at >= HARD_LIMIT {
                    exhausted = true;
                    break;
                }
            }
            if exhausted {
                continue;
            }
            let (p1, p2) = self.values_at(&state);
            out[idx] = [p1, p2];
        }
        out
    }

    /// Mass and mean of both densities, integrated until they are negligible.
    pub fn moments(&self) -> OrderMoments {
        let mut m = OrderMoments {
            mass1: 0.0,
            mean1: 0.0,
            mass2: 0.0,
            mean2: 0.0,
        };
        let mut state = State {
            at: 0.0,
            j1: 0.0,
            j2: 0.0,
        };
        loop {
            let v = state.at + self.panel_width(state.at);
            state = self.advance(state, v, Some(&mut m));
            if self.negligible(&state) || state.at >= HARD_LIMIT {
                break;
            }
        }
        m
    }
}
