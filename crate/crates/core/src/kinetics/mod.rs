//! Birth–death master equation for the condensate number distribution:
//! propagation, the detailed-balance steady state and the mean growth
//! equation.
//!
//! The generator is tridiagonal in `N₀`:
//! `dp(N₀)/dt = −[ξ⁺(N₀) + ξ⁻(N₀)] p(N₀) + ξ⁺(N₀−1) p(N₀−1) + ξ⁻(N₀+1) p(N₀+1)`.
//! Out-flows leaving `0..=N` are dropped so every column sums to zero.

mod integrate;

use std::cell::Cell;
use std::io::{self, Write};
use std::str::FromStr;

use integrate::{bdf2, dopri45, Projection, StepControl, System};

use crate::collision_rates::RateTable;
use crate::numeric::{mean_std, normalize_log_weights};
use crate::{Error, Result};

/// Tolerance on `|Σp − 1|` for a valid distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
/// Most negative entry an accepted step may produce before clipping.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Probability distribution of `N₀` over `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    p: Vec<f64>,
}

impl Distribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and >= 0".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Distribution { p })
    }

    /// All probability at `n0`.
    pub fn delta(n_total: usize, n0: usize) -> Result<Self> {
        if n0 > n_total {
            return Err(Error::InvalidArgument(format!(
                "n0 = {n0} exceeds N = {n_total}"
            )));
        }
        let mut p = vec![0.0; n_total + 1];
        p[n0] = 1.0;
        Ok(Distribution { p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n_total(&self) -> usize {
        self.p.len() - 1
    }

    /// `(⟨N₀⟩, ΔN₀)`.
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.p)
    }
}

/// Tridiagonal master-equation generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// `A[n][n−1] = ξ⁺(n−1)`
    lower: Vec<f64>,
    diag: Vec<f64>,
    /// `A[n][n+1] = ξ⁻(n+1)`
    upper: Vec<f64>,
}

impl Generator {
    pub fn new(table: &RateTable) -> Self {
        let n = table.n_total;
        let mut lower = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut upper = vec![0.0; n + 1];
        for i in 0..=n {
            let up = if i < n { table.xi_plus[i] } else { 0.0 };
            let down = if i > 0 { table.xi_minus[i] } else { 0.0 };
            diag[i] = -(up + down);
            if i > 0 {
                lower[i] = table.xi_plus[i - 1];
            }
            if i < n {
                upper[i] = table.xi_minus[i + 1];
            }
        }
        Generator { lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * p[i];
            if i > 0 {
                v += self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * p[i + 1];
            }
            out[i] = v;
        }
    }

    /// Row-major dense matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i > 0 {
                m[i][i - 1] = self.lower[i];
            }
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
            }
        }
        m
    }

    /// Largest total out-flow rate of any state.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// Solves `(I − cA) y = b` by the Thomas algorithm. `I − cA` is a
    /// column diagonally dominant M-matrix, so no pivoting is needed.
    fn solve_shifted(&self, c: f64, b: &[f64], y: &mut [f64]) {
        let n = self.len();
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut d = 1.0 - c * self.diag[0];
        sup[0] = -c * self.upper[0] / d;
        rhs[0] = b[0] / d;
        for i in 1..n {
            let sub = -c * self.lower[i];
            d = 1.0 - c * self.diag[i] - sub * sup[i - 1];
            sup[i] = if i + 1 < n {
                -c * self.upper[i] / d
            } else {
                0.0
            };
            rhs[i] = (b[i] - sub * rhs[i - 1]) / d;
        }
        y[n - 1] = rhs[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = rhs[i] - sup[i] * y[i + 1];
        }
    }
}

fn check_shape(table: &RateTable, n: usize) -> Result<()> {
    if table.n_total + 1 != n {
        return Err(Error::ShapeMismatch {
            expected: table.n_total + 1,
            found: n,
        });
    }
    Ok(())
}

/// `dp/dt` for distribution `p` under `table`.
pub fn generator_apply(table: &RateTable, p: &Distribution) -> Result<Vec<f64>> {
    check_shape(table, p.p.len())?;
    let mut out = vec![0.0; p.p.len()];
    Generator::new(table).apply(&p.p, &mut out);
    Ok(out)
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Explicit Dormand–Prince 5(4).
    Rk45,
    /// Implicit variable-step BDF2, for stiff tables.
    Bdf,
}

impl Integrator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Integrator::Rk45 => "rk45",
            Integrator::Bdf => "bdf",
        }
    }
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk45" => Ok(Integrator::Rk45),
            "bdf" => Ok(Integrator::Bdf),
            other => Err(Error::InvalidArgument(format!(
                "unknown integrator `{other}` (expected rk45 or bdf)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagateOptions {
    pub integrator: Integrator,
    pub rtol: f64,
    pub atol: f64,
    /// Step budget; exhausting it is reported as a step-size collapse.
    pub max_steps: usize,
    /// Abort once the accumulated clipped mass exceeds this.
    pub clip_budget: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            integrator: Integrator::Rk45,
            rtol: 1e-8,
            atol: 1e-12,
            max_steps: 2_000_000,
            clip_budget: 1e-8,
        }
    }
}

impl PropagateOptions {
    fn control(&self) -> Result<StepControl> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(StepControl {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            clip_budget: self.clip_budget,
        })
    }
}

/// Propagated distribution sampled on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Distribution>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Mass removed by positivity clipping over the run.
    pub clipped: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Distribution {
        self.snapshots
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Largest increase of `p(N)` over the run.
    pub fn absorbed_mass(&self) -> f64 {
        let n = self.snapshots[0].n_total();
        let p0 = self.snapshots[0].p[n];
        self.snapshots
            .iter()
            .map(|d| d.p[n] - p0)
            .fold(0.0, f64::max)
    }

    /// Writes `time_s,mean_n0,std_n0[,p_0..p_N]`; every `stride`-th row
    /// (and the last) carries the distribution, `stride = 0` omits it.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> io::Result<()> {
        write!(out, "time_s,mean_n0,std_n0")?;
        let n = self.snapshots.first().map_or(0, Distribution::n_total);
        if stride > 0 {
            for i in 0..=n {
                write!(out, ",p_{i}")?;
            }
        }
        writeln!(out)?;
        let rows = self.times.len();
        for r in 0..rows {
            write!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.times[r], self.means[r], self.stds[r]
            )?;
            if stride > 0 && (r % stride == 0 || r + 1 == rows) {
                for v in &self.snapshots[r].p {
                    write!(out, ",{v:.16e}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

struct Master {
    gen: Generator,
}

impl System for Master {
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        self.gen.apply(y, dy);
    }

    fn implicit_solve(&self, c: f64, b: &[f64], y: &mut [f64]) {
        self.gen.solve_shifted(c, b, y);
    }

    fn project(&self, y: &mut [f64]) -> Projection {
        let mut clipped = 0.0;
        for v in y.iter_mut() {
            if *v < 0.0 {
                if *v < -NEGATIVITY_TOLERANCE {
                    return Projection::Reject;
                }
                clipped -= *v;
                *v = 0.0;
            }
        }
        let total: f64 = y.iter().sum();
        if clipped > 0.0 || (total - 1.0).abs() > 1e-14 {
            for v in y.iter_mut() {
                *v /= total;
            }
        }
        Projection::Accept(clipped)
    }
}

/// Propagates `p0` and samples it at `grid` (s, strictly increasing).
pub fn propagate(
    table: &RateTable,
    p0: &Distribution,
    grid: &[f64],
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    check_shape(table, p0.p.len())?;
    let sys = Master {
        gen: Generator::new(table),
    };
    let ctl = opts.control()?;
    let (states, stats) = match opts.integrator {
        Integrator::Rk45 => dopri45(&sys, &p0.p, grid, &ctl)?,
        Integrator::Bdf => bdf2(&sys, &p0.p, grid, &ctl)?,
    };
    let snapshots: Vec<Distribution> = states.into_iter().map(|p| Distribution { p }).collect();
    let (means, stds) = snapshots.iter().map(Distribution::mean_std).unzip();
    Ok(Trajectory {
        times: grid.to_vec(),
        snapshots,
        means,
        stds,
        clipped: stats.clipped,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// `n` output times evenly spaced on `(0, t_final]`, preceded by `0`.
pub fn uniform_grid(t_final: f64, n: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((1..=n).map(|i| t_final * i as f64 / n as f64));
    g
}

/// True when `N₀ = N` can be entered but not left.
pub fn is_quasi_absorbing(table: &RateTable) -> bool {
    let n = table.n_total;
    n > 0 && table.xi_minus[n] == 0.0 && table.xi_plus[n - 1] > 0.0
}

/// Detailed-balance steady state
/// `p(N₀) ∝ Π_{z=1}^{N₀} ξ⁺(z−1)/ξ⁻(z)`, built in log domain.
///
/// When `N₀ = N` is quasi-absorbing (`ξ⁻(N) = 0`) the chain is closed at
/// `N − 1` and `p(N) = 0`: this is the stationary state of the dynamics
/// restricted to the transient states.
pub fn steady_state(table: &RateTable) -> Result<Distribution> {
    let n = table.n_total;
    let mut logp = vec![f64::NEG_INFINITY; n + 1];
    logp[0] = 0.0;
    for z in 1..=n {
        let up = table.xi_plus[z - 1];
        let down = table.xi_minus[z];
        if down == 0.0 {
            if z < n {
                return Err(Error::ZeroLossRate { n0: z });
            }
            break;
        }
        logp[z] = if up == 0.0 {
            f64::NEG_INFINITY
        } else {
            logp[z - 1] + up.ln() - down.ln()
        };
    }
    Ok(Distribution {
        p: normalize_log_weights(&logp),
    })
}

/// Net probability flux `ξ⁺(N₀)p(N₀) − ξ⁻(N₀+1)p(N₀+1)` on every link.
pub fn link_fluxes(table: &RateTable, p: &Distribution) -> Result<Vec<f64>> {
    check_shape(table, p.p.len())?;
    Ok((0..table.n_total)
        .map(|i| table.xi_plus[i] * p.p[i] - table.xi_minus[i + 1] * p.p[i + 1])
        .collect())
}

fn interp(v: &[f64], x: f64) -> (f64, f64) {
    let top = (v.len() - 1) as f64;
    let x = x.clamp(0.0, top);
    let i = (x.floor() as usize).min(v.len().saturating_sub(2));
    if v.len() == 1 {
        return (v[0], 0.0);
    }
    let slope = v[i + 1] - v[i];
    (v[i] + slope * (x - i as f64), slope)
}

/// `(2(x+1)·[λ⁺(N−x) − λ⁻(N−x)], derivative in x)`, both rates taken at the
/// non-condensate number of the current mean and interpolated linearly in `N⊥`.
fn growth_drift(table: &RateTable, x: f64) -> (f64, f64) {
    let n_perp = table.n_total as f64 - x;
    let (up, dup) = interp(&table.lambda_plus, n_perp);
    let (down, ddown) = interp(&table.lambda_minus, n_perp);
    let gap = up - down;
    (
        2.0 * (x + 1.0) * gap,
        2.0 * gap - 2.0 * (x + 1.0) * (dup - ddown),
    )
}

struct Growth<'a> {
    table: &'a RateTable,
    clamped: Cell<bool>,
}

impl Growth<'_> {
    fn eval(&self, x: f64) -> (f64, f64) {
        growth_drift(self.table, x)
    }
}

impl System for Growth<'_> {
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        dy[0] = self.eval(y[0]).0;
    }

    fn implicit_solve(&self, c: f64, b: &[f64], y: &mut [f64]) {
        let mut x = y[0];
        for _ in 0..100 {
            let (f, df) = self.eval(x);
            let g = x - c * f - b[0];
            let dg = 1.0 - c * df;
            let step = if dg.abs() > 1e-300 { g / dg } else { g };
            x -= step;
            if step.abs() <= 1e-14 * x.abs().max(1.0) {
                break;
            }
        }
        y[0] = x;
    }

    fn project(&self, y: &mut [f64]) -> Projection {
        let top = self.table.n_total as f64;
        if y[0] < 0.0 || y[0] > top {
            self.clamped.set(true);
            y[0] = y[0].clamp(0.0, top);
        }
        Projection::Accept(0.0)
    }
}

/// Mean-field growth `d⟨N₀⟩/dt = ξ⁺(⟨N₀⟩) − ξ⁻(⟨N₀⟩+1)` for a narrow
/// distribution, with both `λ±` evaluated at `N⊥ = N − ⟨N₀⟩`:
/// `2(⟨N₀⟩+1)·[λ⁺(N−⟨N₀⟩) − λ⁻(N−⟨N₀⟩)]`. Returns `⟨N₀⟩` on `grid`.
pub fn mean_growth(
    table: &RateTable,
    n0_init: f64,
    grid: &[f64],
    opts: &PropagateOptions,
) -> Result<Vec<f64>> {
    if !(0.0..=table.n_total as f64).contains(&n0_init) {
        return Err(Error::InvalidArgument(format!(
            "initial condensate number {n0_init} outside [0, {}]",
            table.n_total
        )));
    }
    let sys = Growth {
        table,
        clamped: Cell::new(false),
    };
    let ctl = StepControl {
        atol: opts.atol.max(1e-12 * table.n_total.max(1) as f64),
        ..opts.control()?
    };
    let (states, _) = match opts.integrator {
        Integrator::Rk45 => dopri45(&sys, &[n0_init], grid, &ctl)?,
        Integrator::Bdf => bdf2(&sys, &[n0_init], grid, &ctl)?,
    };
    Ok(states.into_iter().map(|s| s[0]).collect())
}

/// Fixed point of the mean growth equation, where `λ⁺(N−x) = λ⁻(N−x)`,
/// found by bisection of the sign change closest to the top of `[0, N−1]`.
/// `None` if the drift never changes sign.
pub fn growth_fixed_point(table: &RateTable) -> Option<f64> {
    let n = table.n_total;
    let drift = |x: f64| growth_drift(table, x).0;
    let z = (0..n)
        .rev()
        .find(|&z| z > 0 && drift(z as f64 - 1.0) > 0.0 && drift(z as f64) <= 0.0)?;
    let (mut lo, mut hi) = (z as f64 - 1.0, z as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drift(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Time at which `values` (sampled at `times`) first completes a fraction
/// `1 − 1/e` of its total change, by linear interpolation.
pub fn e_folding_time(times: &[f64], values: &[f64]) -> Option<f64> {
    let (&first, &last) = (values.first()?, values.last()?);
    let total = last - first;
    if total == 0.0 || times.len() != values.len() {
        return None;
    }
    let target = first + (1.0 - (-1.0f64).exp()) * total;
    let above = |v: f64| (v - target) * total.signum() >= 0.0;
    let i = values.iter().position(|&v| above(v))?;
    if i == 0 {
        return Some(times[0]);
    }
    let (v0, v1) = (values[i - 1], values[i]);
    let f = (target - v0) / (v1 - v0);
    Some(times[i - 1] + f * (times[i] - times[i - 1]))
}

/// Writes `n0,p_steady,p_canonical_oracle`.
pub fn write_steady_csv<W: Write>(
    mut out: W,
    steady: &Distribution,
    oracle: &[f64],
) -> io::Result<()> {
    writeln!(out, "n0,p_steady,p_canonical_oracle")?;
    for (i, (p, q)) in steady.p.iter().zip(oracle).enumerate() {
        writeln!(out, "{i},{p:.16e},{q:.16e}")?;
    }
    Ok(())
}
