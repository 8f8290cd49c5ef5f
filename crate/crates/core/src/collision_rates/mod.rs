//! Gaussian-broadened collision rates between the condensate and the
//! non-condensate, and the `N₀`-resolved rate table of the master equation.

mod convolve;
mod kernel;

pub use convolve::{convolve_direct, convolve_fft, Cube};
pub use kernel::{build_level_kernel, CellMap, GKernel, KernelRoute, LevelKernel, PairKernel};

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::canonical_stats::{solve_levels, OccupationProfile};
use crate::constants::{HBAR, K_B};
use crate::trap_spectrum::{OverlapProvider, SpectrumTable, TrapModel};
use crate::{Error, Result};

/// Default pruning half-width of the single-particle energy window, in `Γ`.
pub const DEFAULT_WINDOW: f64 = 8.0;
/// Default half-width for pair events, in `Γ`. Their smallest mismatch is
/// far outside the single-particle window, so they get their own.
pub const DEFAULT_PAIR_WINDOW: f64 = 40.0;

/// `Re ∫₀^∞ e^{−Γ²τ²} e^{iΔωτ} dτ = (√π / 2Γ) exp(−Δω² / 4Γ²)`, in s.
pub fn delta_gamma(delta_omega: f64, gamma: f64) -> f64 {
    let x = delta_omega / (2.0 * gamma);
    PI.sqrt() / (2.0 * gamma) * (-x * x).exp()
}

/// `16π³ħ²a²/m²`, the single-particle rate prefactor.
pub fn single_prefactor(trap: &TrapModel) -> f64 {
    16.0 * PI.powi(3) * (HBAR * trap.scattering_length / trap.mass).powi(2)
}

/// `4π³ħ²a²/m²`, the pair rate prefactor.
pub fn pair_prefactor(trap: &TrapModel) -> f64 {
    4.0 * PI.powi(3) * (HBAR * trap.scattering_length / trap.mass).powi(2)
}

/// Mode sums over discrete levels or over the density of states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    Discrete,
    Semiclassical,
}

impl RateMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateMode::Discrete => "discrete",
            RateMode::Semiclassical => "semiclassical",
        }
    }
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(RateMode::Discrete),
            "semiclassical" => Ok(RateMode::Semiclassical),
            other => Err(Error::InvalidArgument(format!(
                "unknown rate mode `{other}` (expected discrete or semiclassical)"
            ))),
        }
    }
}

/// Numerical controls of the rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Single-particle window half-width in units of `Γ`.
    pub window: f64,
    /// Pair window half-width in units of `Γ`.
    pub pair_window: f64,
    /// Tabulate the pair rates `γ±`.
    pub include_pairs: bool,
    /// Add the exchange-type `g±` terms to `λ±`.
    pub include_g_terms: bool,
    pub route: KernelRoute,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            window: DEFAULT_WINDOW,
            pair_window: DEFAULT_PAIR_WINDOW,
            include_pairs: false,
            include_g_terms: false,
            route: KernelRoute::Auto,
        }
    }
}

/// Per-`N₀` feeding and loss rates at fixed `N` and `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub n_total: usize,
    pub temperature: f64,
    pub gamma: f64,
    pub mode: RateMode,
    /// `λ±↝(N⊥)`, indexed by `N⊥ = 0..=N`, 1/s.
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    /// `ξ±(N₀)`, indexed by `N₀ = 0..=N`, 1/s.
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    /// Pair-event rates by `N₀` when tabulated.
    pub gamma_plus: Option<Vec<f64>>,
    pub gamma_minus: Option<Vec<f64>>,
    /// Pair rates `λ±↔(N⊥)` when tabulated.
    pub pair_plus: Option<Vec<f64>>,
    pub pair_minus: Option<Vec<f64>>,
    /// `g±` contributions included in `λ±` (zero when disabled).
    pub g_plus: Vec<f64>,
    pub g_minus: Vec<f64>,
    /// `μ⊥(N⊥)`, J (`−∞` at `N⊥ = 0`).
    pub mu_perp: Vec<f64>,
    /// `μ₀ = ε₀`, J.
    pub ground_energy: f64,
}

impl RateTable {
    /// Table from hand-set transition rates `ξ±(N₀)`. The `λ±` columns are
    /// back-filled from the defining relations where they are determined.
    pub fn from_transition_rates(xi_plus: Vec<f64>, xi_minus: Vec<f64>) -> Result<Self> {
        if xi_plus.len() != xi_minus.len() {
            return Err(Error::ShapeMismatch {
                expected: xi_plus.len(),
                found: xi_minus.len(),
            });
        }
        if xi_plus.is_empty() {
            return Err(Error::InvalidArgument(
                "rate table needs at least one state".into(),
            ));
        }
        if xi_plus
            .iter()
            .chain(&xi_minus)
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "transition rates must be finite and >= 0".into(),
            ));
        }
        let n = xi_plus.len() - 1;
        let mut lambda_plus = vec![0.0; n + 1];
        let mut lambda_minus = vec![0.0; n + 1];
        for n0 in 0..=n {
            lambda_plus[n - n0] = xi_plus[n0] / (2.0 * (n0 as f64 + 1.0));
            if n0 > 0 {
                lambda_minus[n - n0] = xi_minus[n0] / (2.0 * n0 as f64);
            }
        }
        Ok(RateTable {
            n_total: n,
            temperature: f64::NAN,
            gamma: f64::NAN,
            mode: RateMode::Discrete,
            lambda_plus,
            lambda_minus,
            xi_plus,
            xi_minus,
            gamma_plus: None,
            gamma_minus: None,
            pair_plus: None,
            pair_minus: None,
            g_plus: vec![0.0; n + 1],
            g_minus: vec![0.0; n + 1],
            mu_perp: vec![f64::NAN; n + 1],
            ground_energy: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.xi_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_plus.is_empty()
    }

    /// Writes
    /// `n0,n_perp,lambda_plus,lambda_minus,xi_plus,xi_minus[,gamma_plus,gamma_minus],mu_perp_joule`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let pairs = self.gamma_plus.as_ref().zip(self.gamma_minus.as_ref());
        write!(out, "n0,n_perp,lambda_plus,lambda_minus,xi_plus,xi_minus")?;
        if pairs.is_some() {
            write!(out, ",gamma_plus,gamma_minus")?;
        }
        writeln!(out, ",mu_perp_joule")?;
        let n = self.n_total;
        for n0 in 0..=n {
            let np = n - n0;
            write!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                n0,
                np,
                self.lambda_plus[np],
                self.lambda_minus[np],
                self.xi_plus[n0],
                self.xi_minus[n0]
            )?;
            if let Some((gp, gm)) = pairs {
                write!(out, ",{:.16e},{:.16e}", gp[n0], gm[n0])?;
            }
            writeln!(out, ",{:.16e}", self.mu_perp[np])?;
        }
        Ok(())
    }
}

/// Temperature-independent kernels for one spectrum, `Γ` and rate mode.
#[derive(Debug, Clone)]
pub struct RateKernel {
    pub mode: RateMode,
    pub gamma: f64,
    pub single: LevelKernel,
    pub pair: Option<PairKernel>,
    pub g_terms: Option<GKernel>,
    /// Level → cell map (semiclassical mode only).
    pub cells: Option<CellMap>,
    pub ground_energy: f64,
}

impl RateKernel {
    pub fn build(
        spectrum: &SpectrumTable,
        overlaps: &OverlapProvider,
        gamma: f64,
        mode: RateMode,
        opts: &RateOptions,
    ) -> Result<Self> {
        let discrete = build_level_kernel(spectrum, overlaps, gamma, opts.window, opts.route)?;
        let pair = opts
            .include_pairs
            .then(|| PairKernel::build(spectrum, overlaps, gamma, opts.pair_window));
        let g_terms = opts
            .include_g_terms
            .then(|| GKernel::build(spectrum, overlaps, gamma, opts.window));
        let (single, pair, cells) = match mode {
            RateMode::Discrete => (discrete, pair, None),
            RateMode::Semiclassical => {
                let w = spectrum.omegas();
                let cells = CellMap::new(
                    discrete.levels(),
                    gamma,
                    (w[0] * w[1] * w[2]).cbrt(),
                    spectrum.cutoff_energy / HBAR,
                )?;
                let single = discrete.to_cells(&cells);
                let pair = pair.map(|p| p.to_cells(&cells));
                (single, pair, Some(cells))
            }
        };
        Ok(RateKernel {
            mode,
            gamma,
            single,
            pair,
            g_terms,
            cells,
            ground_energy: spectrum.ground_energy,
        })
    }

    /// Rates for one `N⊥`: `(λ₊, λ₋, pair, g, β(μ⊥−ε₀))` without prefactors
    /// applied to pairs and g-terms folded into the single-particle sums.
    fn evaluate(&self, n_perp: usize, beta: f64) -> Result<PerpRates> {
        let sol = solve_levels(self.single.levels(), n_perp, beta)?;
        if n_perp == 0 {
            return Ok(PerpRates {
                single: (0.0, 0.0),
                pair: self.pair.as_ref().map(|_| (0.0, 0.0)),
                g: (0.0, 0.0),
                beta_delta_mu: f64::NEG_INFINITY,
            });
        }
        let single = self.single.evaluate(&sol.occupations);
        let pair = self.pair.as_ref().map(|p| p.evaluate(&sol.occupations));
        let g = match &self.g_terms {
            Some(g) => match &self.cells {
                Some(c) => {
                    let lv: Vec<f64> = c
                        .cell_of
                        .iter()
                        .map(|&ci| sol.occupations[ci as usize])
                        .collect();
                    g.evaluate(&lv)
                }
                None => g.evaluate(&sol.occupations),
            },
            None => (0.0, 0.0),
        };
        Ok(PerpRates {
            single,
            pair,
            g,
            beta_delta_mu: sol.beta_delta_mu(),
        })
    }

    /// Evaluates the rate table for `trap.n_total` atoms at `temperature`.
    pub fn rate_table(&self, trap: &TrapModel, temperature: f64) -> Result<RateTable> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let beta = 1.0 / (K_B * temperature);
        let n = trap.n_total;
        let rows: Vec<PerpRates> = (0..=n)
            .into_par_iter()
            .map(|np| self.evaluate(np, beta))
            .collect::<Result<_>>()?;
        let c1 = single_prefactor(trap);
        let c2 = pair_prefactor(trap);
        let lambda_plus: Vec<f64> = rows.iter().map(|r| c1 * (r.single.0 + r.g.0)).collect();
        let lambda_minus: Vec<f64> = rows.iter().map(|r| c1 * (r.single.1 + r.g.1)).collect();
        let g_plus = rows.iter().map(|r| c1 * r.g.0).collect();
        let g_minus = rows.iter().map(|r| c1 * r.g.1).collect();
        let mu_perp = rows
            .iter()
            .map(|r| self.ground_energy + r.beta_delta_mu / beta)
            .collect();
        let mut xi_plus = vec![0.0; n + 1];
        let mut xi_minus = vec![0.0; n + 1];
        for n0 in 0..=n {
            xi_plus[n0] = 2.0 * (n0 as f64 + 1.0) * lambda_plus[n - n0];
            xi_minus[n0] = 2.0 * n0 as f64 * lambda_minus[n - n0];
        }
        let (pair_plus, pair_minus, gamma_plus, gamma_minus) = if self.pair.is_some() {
            let pp: Vec<f64> = rows
                .iter()
                .map(|r| c2 * r.pair.unwrap_or_default().0)
                .collect();
            let pm: Vec<f64> = rows
                .iter()
                .map(|r| c2 * r.pair.unwrap_or_default().1)
                .collect();
            let gp = (0..=n)
                .map(|n0| (n0 as f64 + 1.0) * (n0 as f64 + 2.0) * pp[n - n0])
                .collect();
            let gm = (0..=n)
                .map(|n0| n0 as f64 * (n0 as f64 - 1.0).max(0.0) * pm[n - n0])
                .collect();
            (Some(pp), Some(pm), Some(gp), Some(gm))
        } else {
            (None, None, None, None)
        };
        Ok(RateTable {
            n_total: n,
            temperature,
            gamma: self.gamma,
            mode: self.mode,
            lambda_plus,
            lambda_minus,
            xi_plus,
            xi_minus,
            gamma_plus,
            gamma_minus,
            pair_plus,
            pair_minus,
            g_plus,
            g_minus,
            mu_perp,
            ground_energy: self.ground_energy,
        })
    }
}

struct PerpRates {
    single: (f64, f64),
    pair: Option<(f64, f64)>,
    g: (f64, f64),
    beta_delta_mu: f64,
}

/// Builds the kernels and evaluates the full `N⊥ = 0..=N` table.
pub fn build_rate_table(
    spectrum: &SpectrumTable,
    overlaps: &OverlapProvider,
    trap: &TrapModel,
    temperature: f64,
    mode: RateMode,
    opts: &RateOptions,
) -> Result<RateTable> {
    trap.validate()?;
    RateKernel::build(spectrum, overlaps, trap.gamma, mode, opts)?.rate_table(trap, temperature)
}

fn check_profile(spectrum: &SpectrumTable, profile: &OccupationProfile) -> Result<()> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: 0.0,
        });
    }
    if profile.occupations.len() != spectrum.len() {
        return Err(Error::ShapeMismatch {
            expected: spectrum.len(),
            found: profile.occupations.len(),
        });
    }
    Ok(())
}

/// `λ±↝` for one occupation profile by a direct loop over mode triples,
/// pruned by parity and by the energy window `|Δω| ≤ window · Γ`.
pub fn single_particle_rates(
    spectrum: &SpectrumTable,
    overlaps: &OverlapProvider,
    profile: &OccupationProfile,
    trap: &TrapModel,
    opts: &RateOptions,
) -> Result<(f64, f64)> {
    check_profile(spectrum, profile)?;
    if profile.n_perp == 0 {
        return Ok((0.0, 0.0));
    }
    let occ = &profile.occupations;
    let omega = |k: usize| spectrum.levels()[spectrum.level_of(k)].omega;
    let half = opts.window * trap.gamma;
    let mut plus = 0.0;
    let mut minus = 0.0;
    for k in 0..spectrum.len() {
        let qk = spectrum.modes[k].quanta();
        for l in 0..spectrum.len() {
            let ql = spectrum.modes[l].quanta();
            let target = omega(k) + omega(l);
            for m in 0..spectrum.len() {
                let dw = target - omega(m);
                if dw.abs() > half {
                    continue;
                }
                let qm = spectrum.modes[m].quanta();
                if (0..3).any(|a| (qk[a] + ql[a] + qm[a]) % 2 == 1) {
                    continue;
                }
                let z = overlaps.zeta(k, l, m);
                let w = z * z * delta_gamma(dw, trap.gamma);
                plus += occ[k] * occ[l] * (occ[m] + 1.0) * w;
                minus += (occ[k] + 1.0) * (occ[l] + 1.0) * occ[m] * w;
            }
        }
    }
    if opts.include_g_terms {
        let (gp, gm) = GKernel::build(spectrum, overlaps, trap.gamma, opts.window)
            .evaluate(&level_occupations(spectrum, occ));
        plus += gp;
        minus += gm;
    }
    let c = single_prefactor(trap);
    Ok((c * plus, c * minus))
}

fn level_occupations(spectrum: &SpectrumTable, occ: &[f64]) -> Vec<f64> {
    spectrum.levels().iter().map(|l| occ[l.start]).collect()
}

/// `λ±↔` for one occupation profile over mode pairs with
/// `ω_k + ω_l ≤ pair_window · Γ`.
pub fn pair_rates(
    spectrum: &SpectrumTable,
    overlaps: &OverlapProvider,
    profile: &OccupationProfile,
    trap: &TrapModel,
    opts: &RateOptions,
) -> Result<(f64, f64)> {
    check_profile(spectrum, profile)?;
    let (p, m) = PairKernel::build(spectrum, overlaps, trap.gamma, opts.pair_window)
        .evaluate(&level_occupations(spectrum, &profile.occupations));
    let c = pair_prefactor(trap);
    Ok((c * p, c * m))
}

/// Smallest pair mismatch `min_{k,l} (ω_k + ω_l)` over the spectrum, rad/s.
pub fn min_pair_mismatch(spectrum: &SpectrumTable) -> f64 {
    2.0 * spectrum.levels()[0].omega
}

/// `r(N⊥) = λ⁺ / (λ⁻ e^{β(μ⊥ − μ₀)}) − 1` for every `N⊥` with `λ⁻ > 0`.
pub fn detailed_balance_residual(table: &RateTable) -> Vec<(usize, f64)> {
    let beta = 1.0 / (K_B * table.temperature);
    (0..=table.n_total)
        .filter(|&np| table.lambda_minus[np] > 0.0)
        .map(|np| {
            let bdm = beta * (table.mu_perp[np] - table.ground_energy);
            (
                np,
                table.lambda_plus[np] / (table.lambda_minus[np] * bdm.exp()) - 1.0,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_gamma_values() {
        let g = 34.0;
        assert_eq!(delta_gamma(0.0, g), PI.sqrt() / (2.0 * g));
        let v = delta_gamma(2.0 * g, g);
        assert!((v - PI.sqrt() / (2.0 * g) * (-1f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn transition_rate_table_backfills_lambdas() {
        let t = RateTable::from_transition_rates(vec![2.0, 4.0, 0.0], vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(t.lambda_plus[2], 1.0);
        assert_eq!(t.lambda_minus[0], 0.75);
        assert!(RateTable::from_transition_rates(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(RateTable::from_transition_rates(vec![-1.0], vec![0.0]).is_err());
    }
}
