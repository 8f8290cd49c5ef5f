//! Hermite functions and Gauss–Hermite quadrature in function form.
//!
//! Everything is expressed through the normalized Hermite functions
//! `φ_n(x) = H_n(x) e^{-x²/2} / sqrt(2^n n! sqrt(π))`, which stay bounded by
//! one, so neither the nodes nor the weights overflow for large orders.

use std::f64::consts::PI;

use super::dd::Dd;

/// Rescale threshold for the three-term recurrence.
const RESCALE: f64 = 1e150;

/// Runs the recurrence up to order `n` at `x`, calling `visit(j, mantissa,
/// log_scale)` with `φ_j(x) = mantissa · e^{log_scale}`.
fn recur(x: f64, n: usize, mut visit: impl FnMut(usize, f64, f64)) -> (f64, f64, f64) {
    let mut log_scale = -0.25 * PI.ln() - 0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = 1.0;
    visit(0, cur, log_scale);
    for j in 0..n {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * cur - (jf / (jf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > RESCALE {
            prev /= mag;
            cur /= mag;
            log_scale += mag.ln();
        }
        visit(j + 1, cur, log_scale);
    }
    (cur, prev, log_scale)
}

fn unscale(mantissa: f64, log_scale: f64) -> f64 {
    if mantissa == 0.0 {
        0.0
    } else {
        mantissa.signum() * (mantissa.abs().ln() + log_scale).exp()
    }
}

/// Returns `φ_0(x), …, φ_n(x)`.
pub fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    recur(x, n, |j, m, s| out[j] = unscale(m, s));
    out
}

/// Nodes and function-form weights of the `k`-point Gauss–Hermite rule.
///
/// For the weight `e^{-y²}`, the classical weights are `w_i = W_i e^{-y_i²}`
/// with `W_i = 1 / (k φ_{k-1}(y_i)²)`. Nodes are ascending.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "quadrature needs at least one node");
        let kf = k as f64;
        let half = k.div_ceil(2);
        // positive roots in descending order
        let mut roots: Vec<f64> = Vec::with_capacity(half);
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * kf + 1.0).sqrt() - 1.85575 * (2.0 * kf + 1.0).powf(-0.16667),
                1 => z - 1.14 * kf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * roots[0],
                3 => 1.91 * z - 0.91 * roots[1],
                _ => 2.0 * z - roots[i - 2],
            };
            for _ in 0..200 {
                let (f, fm1, _) = recur(z, k, |_, _, _| {});
                let df = (2.0 * kf).sqrt() * fm1 - z * f;
                let dz = f / df;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            roots.push(z);
        }
        let mut nodes = Vec::with_capacity(k);
        for &r in &roots {
            nodes.push(-r);
        }
        let mut positive: Vec<f64> = roots.iter().rev().copied().collect();
        if k % 2 == 1 {
            // the middle root is exactly zero
            nodes.pop();
            positive[0] = 0.0;
            nodes.push(0.0);
            positive.remove(0);
        }
        nodes.extend(positive);
        let scaled_weights = nodes
            .iter()
            .map(|&y| {
                let (_, fm1, s) = recur(y, k, |_, _, _| {});
                // 1 / (k φ_{k-1}²) evaluated in log space
                (-(kf.ln() + 2.0 * (fm1.abs().ln() + s))).exp()
            })
            .collect();
        GaussHermite {
            nodes,
            scaled_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Classical weights `w_i` for the weight function `e^{-y²}`.
    pub fn weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.scaled_weights)
            .map(|(y, w)| w * (-y * y).exp())
            .collect()
    }
}

/// Recurrence coefficients `sqrt(2/(j+1))` and `sqrt(j/(j+1))` in double-double.
fn dd_coefficients(n: usize) -> Vec<(Dd, Dd)> {
    (0..n)
        .map(|j| {
            let j1 = Dd::new(j as f64 + 1.0);
            ((Dd::new(2.0) / j1).sqrt(), (Dd::new(j as f64) / j1).sqrt())
        })
        .collect()
}

/// Double-double recurrence; `visit(j, mantissa, k)` receives
/// `φ_j(x) = mantissa · 2^k`. Returns the last two mantissas and the shared
/// exponent.
fn dd_recur(x: Dd, coef: &[(Dd, Dd)], mut visit: impl FnMut(usize, Dd, i32)) -> (Dd, Dd, i32) {
    let (m0, mut k) = (-(x * x).mul_f64(0.5)).exp_split();
    let mut prev = Dd::ZERO;
    let mut cur = m0 * Dd::PI_M_QUARTER;
    visit(0, cur, k);
    for (j, (c1, c2)) in coef.iter().enumerate() {
        let next = *c1 * x * cur - *c2 * prev;
        prev = cur;
        cur = next;
        if cur.hi.abs() > 1e150 {
            let e = cur.hi.abs().log2().floor() as i32;
            prev = prev.ldexp(-e);
            cur = cur.ldexp(-e);
            k += e;
        }
        visit(j + 1, cur, k);
    }
    (cur, prev, k)
}

/// Quadrature for the one-dimensional quartic integrals
/// `I(a, b, c) = ∫ φ_0 φ_a φ_b φ_c dx` with all orders `≤ n_max`.
///
/// The integrand is a polynomial of degree `a+b+c` times `e^{-2x²}`, so with
/// `y = √2 x` the rule with `2 n_max + 2` nodes is exact. Nodes, weights and
/// sums are carried in double-double precision because the sums cancel
/// strongly for small integrals.
#[derive(Debug, Clone)]
pub struct QuarticRule {
    n_max: usize,
    nodes: usize,
    /// weights on the non-negative half of the nodes, already doubled for
    /// strictly positive nodes (the integrand is even when `a+b+c` is even)
    vweights: Vec<Dd>,
    /// `φ_n(x_i)` on the same half, row-major by order `n`
    phi: Vec<Dd>,
    half: usize,
}

impl QuarticRule {
    pub fn new(n_max: usize) -> Self {
        Self::with_nodes(n_max, 2 * n_max + 2)
    }

    pub fn with_nodes(n_max: usize, k: usize) -> Self {
        let gh = GaussHermite::new(k);
        let coef = dd_coefficients(k.max(n_max));
        let sqrt_2k = Dd::new(2.0 * k as f64).sqrt();
        let inv_sqrt2 = Dd::new(0.5).sqrt();
        let positive: Vec<f64> = gh.nodes.iter().copied().filter(|&y| y >= 0.0).collect();
        let half = positive.len();
        let mut phi = vec![Dd::ZERO; (n_max + 1) * half];
        let mut vweights = Vec::with_capacity(half);
        for (i, &y0) in positive.iter().enumerate() {
            // polish the node in double-double
            let mut y = Dd::new(y0);
            if y0 != 0.0 {
                for _ in 0..3 {
                    let (f, fm1, _) = dd_recur(y, &coef[..k], |_, _, _| {});
                    let df = sqrt_2k * fm1 - y * f;
                    y = y - f / df;
                }
            }
            let (_, fm1, e) = dd_recur(y, &coef[..k], |_, _, _| {});
            // W = 1 / (k φ_{k-1}(y)²)
            let w = (Dd::ONE / (fm1 * fm1).mul_f64(k as f64)).ldexp(-2 * e);
            let x = y * inv_sqrt2;
            let mut phi0 = Dd::ZERO;
            dd_recur(x, &coef[..n_max], |n, m, e| {
                let v = m.ldexp(e);
                if n == 0 {
                    phi0 = v;
                }
                phi[n * half + i] = v;
            });
            let fold = if y0 == 0.0 { 1.0 } else { 2.0 };
            vweights.push((w * phi0 * inv_sqrt2).mul_f64(fold));
        }
        QuarticRule {
            n_max,
            nodes: k,
            vweights,
            phi,
            half,
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    fn row(&self, n: usize) -> &[Dd] {
        &self.phi[n * self.half..(n + 1) * self.half]
    }

    /// `∫ φ_0 φ_a φ_b φ_c dx`; exact zero when `a+b+c` is odd.
    pub fn integral(&self, a: usize, b: usize, c: usize) -> f64 {
        assert!(a <= self.n_max && b <= self.n_max && c <= self.n_max);
        if (a + b + c) % 2 == 1 {
            return 0.0;
        }
        let (ra, rb, rc) = (self.row(a), self.row(b), self.row(c));
        let mut s = Dd::ZERO;
        for i in 0..self.half {
            s = s + self.vweights[i] * ra[i] * rb[i] * rc[i];
        }
        s.to_f64()
    }

    /// Dense table of `I(a, b, c)` for all orders, index `(a·d + b)·d + c`
    /// with `d = n_max + 1`.
    pub fn dense_table(&self) -> Vec<f64> {
        let d = self.n_max + 1;
        let mut t = vec![0.0; d * d * d];
        let mut u = vec![Dd::ZERO; self.half];
        for a in 0..d {
            let ra = self.row(a);
            for b in a..d {
                let rb = self.row(b);
                for i in 0..self.half {
                    u[i] = self.vweights[i] * ra[i] * rb[i];
                }
                for c in (b..d).filter(|c| (a + b + c) % 2 == 0) {
                    let rc = self.row(c);
                    let mut s = Dd::ZERO;
                    for i in 0..self.half {
                        s = s + u[i] * rc[i];
                    }
                    let v = s.to_f64();
                    for (i, j, k) in [
                        (a, b, c),
                        (a, c, b),
                        (b, a, c),
                        (b, c, a),
                        (c, a, b),
                        (c, b, a),
                    ] {
                        t[(i * d + j) * d + k] = v;
                    }
                }
            }
        }
        t
    }
}
