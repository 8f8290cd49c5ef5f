//! Equilibrium reference: the canonical Gibbs state of `N` non-interacting
//! bosons, its condensate-number marginal, condensate fraction curves and
//! the semiclassical critical temperature.

use rayon::prelude::*;
use std::io::{self, Write};

use crate::canonical_stats::{
    for_each_microstate, microstate_count, partition_levels, WeightedLevels, BRUTE_FORCE_LIMIT,
};
use crate::collision_rates::{RateKernel, RateMode, RateOptions};
use crate::constants::{HBAR, K_B, ZETA_3};
use crate::kinetics::steady_state;
use crate::numeric::{log_sum_exp, mean_std, normalize_log_weights};
use crate::trap_spectrum::{enumerate_modes_below, OverlapProvider, SpectrumTable, TrapModel};
use crate::{Error, Result};

/// Canonical distribution of the condensate number.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalMarginal {
    /// `p_th(N₀)` for `N₀ = 0..=N`.
    pub p_th: Vec<f64>,
    pub temperature: f64,
    pub mean: f64,
    pub std: f64,
}

/// Marginal over weighted levels:
/// `ln p(N₀) = −βε₀N₀ + ln 𝒵⊥(N − N₀)` up to normalization.
pub fn marginal_from_levels(
    levels: &WeightedLevels,
    n_total: usize,
    temperature: f64,
) -> Result<CanonicalMarginal> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let beta = 1.0 / (K_B * temperature);
    let ln_z = partition_levels(levels, n_total, beta)?;
    let e0 = levels.ground_energy;
    let log_p: Vec<f64> = (0..=n_total)
        .map(|n0| -beta * e0 * n0 as f64 + ln_z[n_total - n0])
        .collect();
    let p_th = normalize_log_weights(&log_p);
    let (mean, std) = mean_std(&p_th);
    Ok(CanonicalMarginal {
        p_th,
        temperature,
        mean,
        std,
    })
}

/// Canonical condensate-number marginal of `n_total` atoms.
pub fn thermal_marginal(
    spectrum: &SpectrumTable,
    n_total: usize,
    temperature: f64,
) -> Result<CanonicalMarginal> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: 0.0,
        });
    }
    marginal_from_levels(
        &WeightedLevels::from_spectrum(spectrum),
        n_total,
        temperature,
    )
}

/// The same marginal by enumerating every Fock state of the ground mode
/// plus the spectrum's modes.
pub fn brute_force_marginal(
    spectrum: &SpectrumTable,
    n_total: usize,
    temperature: f64,
) -> Result<Vec<f64>> {
    let states = microstate_count(spectrum.len() + 1, n_total);
    if states > BRUTE_FORCE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let beta = 1.0 / (K_B * temperature);
    let mut energies = vec![spectrum.ground_energy];
    energies.extend(spectrum.modes.iter().map(|m| m.energy));
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_total + 1];
    for_each_microstate(&energies, n_total, |occ, e| buckets[occ[0]].push(-beta * e));
    let log_p: Vec<f64> = buckets
        .iter()
        .map(|b| {
            if b.is_empty() {
                f64::NEG_INFINITY
            } else {
                log_sum_exp(b)
            }
        })
        .collect();
    Ok(normalize_log_weights(&log_p))
}

/// `T_c = (ħω̄ / k_B) (N / ζ(3))^{1/3}` with `ω̄ = (ωx ωy ωz)^{1/3}`.
pub fn critical_temperature(trap: &TrapModel, n_total: usize) -> f64 {
    HBAR * trap.omega_bar() / K_B * (n_total as f64 / ZETA_3).cbrt()
}

/// One temperature of the paired oracle/kinetics curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub temperature: f64,
    pub t_over_tc: f64,
    pub oracle_fraction: f64,
    pub oracle_std: f64,
    pub kinetics_fraction: f64,
    pub kinetics_std: f64,
}

/// Condensate fraction and fluctuations from the canonical marginal and
/// from the kinetic steady state on a temperature grid.
///
/// One spectrum, cut at `energy_cutoff · k_B · max(T_grid)`, and one
/// collision kernel serve every temperature.
pub fn condensate_curves(
    trap: &TrapModel,
    t_grid: &[f64],
    mode: RateMode,
    opts: &RateOptions,
) -> Result<Vec<CurvePoint>> {
    trap.validate()?;
    let t_max = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidArgument(
            "temperature grid must be non-empty and positive".into(),
        ));
    }
    let n = trap.n_total;
    let tc = critical_temperature(trap, n);
    let spectrum = enumerate_modes_below(trap, trap.energy_cutoff * K_B * t_max)?;
    let overlaps = OverlapProvider::new(&spectrum);
    let kernel = RateKernel::build(&spectrum, &overlaps, trap.gamma, mode, opts)?;
    let levels = WeightedLevels::from_spectrum(&spectrum);
    t_grid
        .par_iter()
        .map(|&t| {
            let oracle = marginal_from_levels(&levels, n, t)?;
            let table = kernel.rate_table(trap, t)?;
            let (km, ks) = steady_state(&table)?.mean_std();
            Ok(CurvePoint {
                temperature: t,
                t_over_tc: t / tc,
                oracle_fraction: oracle.mean / n as f64,
                oracle_std: oracle.std,
                kinetics_fraction: km / n as f64,
                kinetics_std: ks,
            })
        })
        .collect()
}

/// Lowest temperature at which a fraction curve drops below `level`,
/// linearly interpolated between grid points.
pub fn apparent_transition(temperatures: &[f64], fractions: &[f64], level: f64) -> Option<f64> {
    let i = fractions.iter().position(|&f| f < level)?;
    if i == 0 {
        return None;
    }
    let (f0, f1) = (fractions[i - 1], fractions[i]);
    let (t0, t1) = (temperatures[i - 1], temperatures[i]);
    Some(t0 + (f0 - level) / (f0 - f1) * (t1 - t0))
}

/// Writes
/// `t_kelvin,t_over_tc,mean_fraction_oracle,std_oracle,mean_fraction_kinetics,std_kinetics`.
pub fn write_curves_csv<W: Write>(mut out: W, points: &[CurvePoint]) -> io::Result<()> {
    writeln!(
        out,
        "t_kelvin,t_over_tc,mean_fraction_oracle,std_oracle,mean_fraction_kinetics,std_kinetics"
    )?;
    for p in points {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.temperature,
            p.t_over_tc,
            p.oracle_fraction,
            p.oracle_std,
            p.kinetics_fraction,
            p.kinetics_std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_interpolates_between_grid_points() {
        let t = [1.0, 2.0, 3.0];
        let f = [0.5, 0.1, 0.0];
        assert!((apparent_transition(&t, &f, 0.05).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(apparent_transition(&t, &[0.01, 0.0, 0.0], 0.05), None);
        assert_eq!(apparent_transition(&t, &[0.9, 0.8, 0.7], 0.05), None);
    }
}
