//! Constrained thermal statistics of the non-condensate at fixed particle
//! number: the Lagrange parameter `α⊥`, mode occupations, the chemical
//! potential `μ⊥ = −α⊥/β`, and exact canonical partition sums.

use std::io::{self, Write};

use crate::constants::K_B;
use crate::numeric::log_sum_exp;
use crate::trap_spectrum::SpectrumTable;
use crate::{Error, Result};

/// Residual target of the occupation solver, relative to `N⊥`.
const SOLVER_TOL: f64 = 1e-13;
/// Largest residual accepted when the iteration budget runs out.
const ACCEPT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 300;
/// Limit for the brute-force microstate enumeration.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Single-particle levels with multiplicities. Energies are excitation
/// energies above the ground mode; weights may be fractional (density of
/// states cells).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLevels {
    pub excitation: Vec<f64>,
    pub weight: Vec<f64>,
    pub ground_energy: f64,
}

impl WeightedLevels {
    pub fn new(excitation: Vec<f64>, weight: Vec<f64>, ground_energy: f64) -> Result<Self> {
        if excitation.len() != weight.len() {
            return Err(Error::ShapeMismatch {
                expected: excitation.len(),
                found: weight.len(),
            });
        }
        if excitation.is_empty() {
            return Err(Error::EmptySpectrum {
                cutoff_over_kbt: 0.0,
            });
        }
        if excitation.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || weight.iter().any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(Error::InvalidArgument(
                "level energies and weights must be finite and positive".into(),
            ));
        }
        Ok(WeightedLevels {
            excitation,
            weight,
            ground_energy,
        })
    }

    /// Distinct levels of a spectrum weighted by their degeneracies.
    pub fn from_spectrum(spectrum: &SpectrumTable) -> Self {
        let hbar = crate::constants::HBAR;
        WeightedLevels {
            excitation: spectrum.levels().iter().map(|l| hbar * l.omega).collect(),
            weight: spectrum
                .levels()
                .iter()
                .map(|l| l.degeneracy() as f64)
                .collect(),
            ground_energy: spectrum.ground_energy,
        }
    }

    pub fn len(&self) -> usize {
        self.excitation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excitation.is_empty()
    }

    pub fn min_excitation(&self) -> f64 {
        self.excitation
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }
}

/// Occupations per level for one `N⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOccupations {
    pub n_perp: usize,
    /// `α⊥ + βε₀`, so that a level at excitation `e` holds
    /// `1/(exp(βe + alpha_exc) − 1)` particles per mode. `+∞` when empty.
    pub alpha_exc: f64,
    /// Occupation of a single mode of each level.
    pub occupations: Vec<f64>,
}

impl LevelOccupations {
    /// `β(μ⊥ − ε₀)`.
    pub fn beta_delta_mu(&self) -> f64 {
        -self.alpha_exc
    }
}

fn empty_levels(levels: &WeightedLevels) -> LevelOccupations {
    LevelOccupations {
        n_perp: 0,
        alpha_exc: f64::INFINITY,
        occupations: vec![0.0; levels.len()],
    }
}

/// Solves `Σ w_i / (exp(βe_i + α) − 1) = N⊥` for the level form.
pub fn solve_levels(levels: &WeightedLevels, n_perp: usize, beta: f64) -> Result<LevelOccupations> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if n_perp == 0 {
        return Ok(empty_levels(levels));
    }
    let n = n_perp as f64;
    let e_min = levels.min_excitation();
    let d: Vec<f64> = levels
        .excitation
        .iter()
        .map(|e| beta * (e - e_min))
        .collect();
    let w0: f64 = levels
        .weight
        .iter()
        .zip(&d)
        .filter(|(_, &di)| di == 0.0)
        .map(|(w, _)| w)
        .sum();
    let total = levels.total_weight();
    // in u = α + β(ε₀ + e_min) the constraint is strictly decreasing on u > 0
    let constraint = |u: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (w, di) in levels.weight.iter().zip(&d) {
            let occ = 1.0 / (di + u).exp_m1();
            s += w * occ;
            ds -= w * occ * (1.0 + occ);
        }
        (s - n, ds)
    };
    let mut lo = (w0 / n).ln_1p();
    let mut hi = (total / n).ln_1p();
    let mut u = lo;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (f, df) = constraint(u);
        residual = f;
        if f.abs() <= SOLVER_TOL * n {
            converged = true;
            break;
        }
        if f > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let newton = u - f / df;
        u = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if !converged && (residual.is_nan() || residual.abs() > ACCEPT_TOL * n) {
        return Err(Error::SolverNonConvergence {
            n_perp,
            iterations: MAX_ITER,
            lower: lo,
            upper: hi,
            residual,
        });
    }
    let occupations = d.iter().map(|di| 1.0 / (di + u).exp_m1()).collect();
    Ok(LevelOccupations {
        n_perp,
        alpha_exc: u - beta * e_min,
        occupations,
    })
}

/// Constrained occupations of every excited mode for `N⊥` particles.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationProfile {
    pub n_perp: usize,
    /// Lagrange parameter `α⊥` (absolute energies); `+∞` when `N⊥ = 0`.
    pub alpha: f64,
    /// `μ⊥ = −α⊥/β`, J; `−∞` when `N⊥ = 0`.
    pub mu_perp: f64,
    /// `⟨N_k⟩` aligned with the spectrum's mode order.
    pub occupations: Vec<f64>,
    pub temperature: f64,
}

impl OccupationProfile {
    /// `μ⊥ − μ₀` with `μ₀ = ε₀`, J.
    pub fn delta_mu(&self, ground_energy: f64) -> f64 {
        self.mu_perp - ground_energy
    }

    pub fn total(&self) -> f64 {
        self.occupations.iter().sum()
    }
}

/// Solves for `α⊥` such that the mode occupations sum to `n_perp`.
pub fn solve_alpha(
    spectrum: &SpectrumTable,
    n_perp: usize,
    temperature: f64,
) -> Result<OccupationProfile> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: 0.0,
        });
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let beta = 1.0 / (K_B * temperature);
    let levels = WeightedLevels::from_spectrum(spectrum);
    let sol = solve_levels(&levels, n_perp, beta)?;
    let mut occupations = vec![0.0; spectrum.len()];
    for (l, occ) in spectrum.levels().iter().zip(&sol.occupations) {
        for o in &mut occupations[l.start..l.end] {
            *o = *occ;
        }
    }
    let alpha = sol.alpha_exc - beta * spectrum.ground_energy;
    Ok(OccupationProfile {
        n_perp,
        alpha,
        mu_perp: -alpha / beta,
        occupations,
        temperature,
    })
}

/// `ln 𝒵⊥(n)` for `n = 0..=n_max` at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTables {
    pub ln_z: Vec<f64>,
    pub temperature: f64,
}

/// Cycle-sum recursion `𝒵(n) = (1/n) Σ_j z₁(jβ) 𝒵(n−j)` in log space over
/// weighted levels, absolute energies.
pub fn partition_levels(levels: &WeightedLevels, n_max: usize, beta: f64) -> Result<Vec<f64>> {
    let e_min = levels.min_excitation();
    let base = beta * (levels.ground_energy + e_min);
    let d: Vec<f64> = levels
        .excitation
        .iter()
        .map(|e| beta * (e - e_min))
        .collect();
    let ln_w: Vec<f64> = levels.weight.iter().map(|w| w.ln()).collect();
    let mut ln_z1 = vec![0.0; n_max + 1];
    let mut scratch = vec![0.0; levels.len()];
    for (j, slot) in ln_z1.iter_mut().enumerate().skip(1) {
        let jf = j as f64;
        for ((s, di), lw) in scratch.iter_mut().zip(&d).zip(&ln_w) {
            *s = lw - jf * di;
        }
        *slot = -jf * base + log_sum_exp(&scratch);
    }
    let mut ln_z = vec![0.0; n_max + 1];
    let mut terms = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        terms.clear();
        for j in 1..=n {
            terms.push(ln_z1[j] + ln_z[n - j]);
        }
        let v = log_sum_exp(&terms) - (n as f64).ln();
        if !v.is_finite() {
            return Err(Error::NumericRange(format!("ln Z({n}) is not finite")));
        }
        ln_z[n] = v;
    }
    Ok(ln_z)
}

/// Exact canonical partition sums of the excited spectrum.
pub fn partition_tables(
    spectrum: &SpectrumTable,
    n_max: usize,
    temperature: f64,
) -> Result<CanonicalTables> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: 0.0,
        });
    }
    let beta = 1.0 / (K_B * temperature);
    let ln_z = partition_levels(&WeightedLevels::from_spectrum(spectrum), n_max, beta)?;
    Ok(CanonicalTables { ln_z, temperature })
}

/// Result of a direct microstate enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub ln_z: f64,
    pub occupations: Vec<f64>,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Number of ways to place `n` bosons in `modes` modes.
pub fn microstate_count(modes: usize, n: usize) -> u128 {
    if modes == 0 {
        return u128::from(n == 0);
    }
    binomial((n + modes - 1) as u128, (modes - 1) as u128)
}

/// Visits every occupation tuple of `energies.len()` modes holding `n`
/// particles, passing the tuple and its total energy.
pub(crate) fn for_each_microstate(
    energies: &[f64],
    n: usize,
    mut visit: impl FnMut(&[usize], f64),
) {
    fn rec(
        e: &[f64],
        idx: usize,
        left: usize,
        acc: f64,
        occ: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if idx + 1 == e.len() {
            occ[idx] = left;
            visit(occ, acc + left as f64 * e[idx]);
            return;
        }
        for k in 0..=left {
            occ[idx] = k;
            rec(e, idx + 1, left - k, acc + k as f64 * e[idx], occ, visit);
        }
    }
    if energies.is_empty() {
        if n == 0 {
            visit(&[], 0.0);
        }
        return;
    }
    let mut occ = vec![0; energies.len()];
    rec(energies, 0, n, 0.0, &mut occ, &mut visit);
}

/// Canonical `ln Z` and occupations of `n` bosons by direct summation over
/// all Fock states of the spectrum's modes.
pub fn brute_force_canonical(
    spectrum: &SpectrumTable,
    n: usize,
    temperature: f64,
) -> Result<BruteForce> {
    let states = microstate_count(spectrum.len(), n);
    if states > BRUTE_FORCE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let beta = 1.0 / (K_B * temperature);
    let energies: Vec<f64> = spectrum.modes.iter().map(|m| m.energy).collect();
    let mut log_w = Vec::with_capacity(states as usize);
    let mut tuples = Vec::with_capacity(states as usize);
    for_each_microstate(&energies, n, |occ, e| {
        log_w.push(-beta * e);
        tuples.push(occ.to_vec());
    });
    let ln_z = log_sum_exp(&log_w);
    let mut occupations = vec![0.0; energies.len()];
    for (lw, occ) in log_w.iter().zip(&tuples) {
        let p = (lw - ln_z).exp();
        for (o, &k) in occupations.iter_mut().zip(occ) {
            *o += p * k as f64;
        }
    }
    Ok(BruteForce { ln_z, occupations })
}

/// Writes `n_perp,alpha,mu_perp_joule`.
pub fn write_alpha_csv<W: Write>(mut out: W, profiles: &[OccupationProfile]) -> io::Result<()> {
    writeln!(out, "n_perp,alpha,mu_perp_joule")?;
    for p in profiles {
        writeln!(out, "{},{:.16e},{:.16e}", p.n_perp, p.alpha, p.mu_perp)?;
    }
    Ok(())
}

/// Writes `index,occupation` for one profile.
pub fn write_occupations_csv<W: Write>(mut out: W, profile: &OccupationProfile) -> io::Result<()> {
    writeln!(out, "index,occupation")?;
    for (i, o) in profile.occupations.iter().enumerate() {
        writeln!(out, "{},{:.16e}", i, o)?;
    }
    Ok(())
}
