//! Single-particle eigenmodes of the anisotropic harmonic trap and the
//! quartic overlap amplitudes between them and the ground mode.

mod dd;
mod hermite;
mod overlap;

pub use hermite::{hermite_functions, GaussHermite, QuarticRule};
pub use overlap::{overlap_zeta, OverlapProvider};

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::constants::{AMU, HBAR, K_B, RB87_MASS_AMU};
use crate::{Error, Result};

/// Default excitation-energy cutoff in units of `k_B T`.
pub const DEFAULT_ENERGY_CUTOFF: f64 = 12.0;

/// Physical parameters of the gas, the trap and the non-condensate bath.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapModel {
    /// Trap angular frequencies, rad/s.
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    /// Atomic mass, kg.
    pub mass: f64,
    /// s-wave scattering length, m.
    pub scattering_length: f64,
    /// Total atom number `N`.
    pub n_total: usize,
    /// Temperature, K.
    pub temperature: f64,
    /// Decay rate of the non-condensate correlations, 1/s.
    pub gamma: f64,
    /// Excitation-energy cutoff as a multiple of `k_B T`.
    pub energy_cutoff: f64,
}

impl TrapModel {
    /// ⁸⁷Rb in a 42/42/120 Hz trap with 2000 atoms at 20.31 nK.
    pub fn rb87_reference() -> Self {
        TrapModel {
            omega_x: 2.0 * PI * 42.0,
            omega_y: 2.0 * PI * 42.0,
            omega_z: 2.0 * PI * 120.0,
            mass: RB87_MASS_AMU * AMU,
            scattering_length: 5.7e-9,
            n_total: 2000,
            temperature: 20.31e-9,
            gamma: 34.0,
            energy_cutoff: DEFAULT_ENERGY_CUTOFF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_x", self.omega_x),
            ("omega_y", self.omega_y),
            ("omega_z", self.omega_z),
            ("mass", self.mass),
            ("temperature", self.temperature),
            ("gamma", self.gamma),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if !(self.scattering_length.is_finite() && self.scattering_length >= 0.0) {
            return Err(Error::InvalidModel {
                field: "scattering_length",
                reason: format!("must be finite and >= 0, got {}", self.scattering_length),
            });
        }
        if self.n_total < 1 {
            return Err(Error::InvalidModel {
                field: "n_total",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.energy_cutoff.is_finite() && self.energy_cutoff >= 1.0) {
            return Err(Error::InvalidModel {
                field: "energy_cutoff",
                reason: format!("must be >= 1, got {}", self.energy_cutoff),
            });
        }
        Ok(())
    }

    pub fn omegas(&self) -> [f64; 3] {
        [self.omega_x, self.omega_y, self.omega_z]
    }

    /// Geometric mean trap frequency.
    pub fn omega_bar(&self) -> f64 {
        (self.omega_x * self.omega_y * self.omega_z).cbrt()
    }

    /// Contact coupling `g = 4π a ħ² / m`.
    pub fn coupling(&self) -> f64 {
        4.0 * PI * self.scattering_length * HBAR * HBAR / self.mass
    }

    pub fn beta(&self) -> f64 {
        1.0 / (K_B * self.temperature)
    }

    /// `ħ(ωx + ωy + ωz)/2`.
    pub fn ground_energy(&self) -> f64 {
        0.5 * HBAR * (self.omega_x + self.omega_y + self.omega_z)
    }

    pub fn cutoff_energy(&self) -> f64 {
        self.energy_cutoff * K_B * self.temperature
    }

    /// Diagnostic `a N / ℓ` with the oscillator length `ℓ = sqrt(ħ / m ω̄)`.
    /// The non-interacting basis is reliable when this is small.
    pub fn interaction_ratio(&self) -> f64 {
        self.scattering_length * self.n_total as f64 * (self.mass * self.omega_bar() / HBAR).sqrt()
    }

    /// Peak density of a Boltzmann cloud of `N` atoms in this trap, 1/m³.
    pub fn peak_thermal_density(&self) -> f64 {
        let w2 = self.omega_bar().powi(2);
        self.n_total as f64 * (self.mass * w2 / (2.0 * PI * K_B * self.temperature)).powf(1.5)
    }

    /// Kinetic collision-rate estimate `a² ϱ v` with `v = sqrt(3 k_B T / m)`.
    pub fn kinetic_gamma_estimate(&self, density: f64) -> f64 {
        let v = (3.0 * K_B * self.temperature / self.mass).sqrt();
        self.scattering_length.powi(2) * density * v
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        TrapModel {
            temperature,
            ..self.clone()
        }
    }
}

/// One excited eigenmode of the trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    /// Absolute single-particle energy, J.
    pub energy: f64,
}

impl Mode {
    pub fn new(quanta: [u32; 3], omegas: [f64; 3]) -> Self {
        let [nx, ny, nz] = quanta;
        let energy = HBAR
            * (omegas[0] * (nx as f64 + 0.5)
                + omegas[1] * (ny as f64 + 0.5)
                + omegas[2] * (nz as f64 + 0.5));
        Mode { nx, ny, nz, energy }
    }

    pub fn quanta(&self) -> [u32; 3] {
        [self.nx, self.ny, self.nz]
    }
}

/// Excitation angular frequency `Σ_a ω_a n_a`.
pub fn excitation_omega(quanta: [u32; 3], omegas: [f64; 3]) -> f64 {
    omegas[0] * quanta[0] as f64 + omegas[1] * quanta[1] as f64 + omegas[2] * quanta[2] as f64
}

/// A set of modes sharing one single-particle energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    /// Excitation angular frequency above the ground mode, rad/s.
    pub omega: f64,
    /// Mode index range `start..end` in the spectrum.
    pub start: usize,
    pub end: usize,
}

impl Level {
    pub fn degeneracy(&self) -> usize {
        self.end - self.start
    }
}

/// Excited modes of a trap, sorted by energy with lexicographic ties.
#[derive(Debug, Clone)]
pub struct SpectrumTable {
    pub modes: Vec<Mode>,
    pub ground_energy: f64,
    pub cutoff_energy: f64,
    omegas: [f64; 3],
    mass: f64,
    complete: bool,
    levels: Vec<Level>,
    level_of: Vec<u32>,
}

impl SpectrumTable {
    /// Builds a table from an explicit list of excited quantum numbers. The
    /// result is marked incomplete: it need not contain every mode below its
    /// highest energy.
    pub fn from_quanta(omegas: [f64; 3], mass: f64, quanta: &[[u32; 3]]) -> Result<Self> {
        if quanta.is_empty() {
            return Err(Error::EmptySpectrum {
                cutoff_over_kbt: 0.0,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for q in quanta {
            if *q == [0, 0, 0] {
                return Err(Error::InvalidArgument(
                    "the ground mode (0,0,0) cannot be an excited mode".into(),
                ));
            }
            if !seen.insert(*q) {
                return Err(Error::InvalidArgument(format!("duplicate mode {q:?}")));
            }
        }
        let cutoff = quanta
            .iter()
            .map(|&q| HBAR * excitation_omega(q, omegas))
            .fold(0.0, f64::max);
        Ok(Self::build(omegas, mass, quanta.to_vec(), cutoff, false))
    }

    fn build(
        omegas: [f64; 3],
        mass: f64,
        mut quanta: Vec<[u32; 3]>,
        cutoff: f64,
        complete: bool,
    ) -> Self {
        quanta.sort_by(|a, b| {
            excitation_omega(*a, omegas)
                .total_cmp(&excitation_omega(*b, omegas))
                .then(a.cmp(b))
        });
        let tol = 1e-9 * omegas.iter().copied().fold(f64::INFINITY, f64::min);
        let mut levels: Vec<Level> = Vec::new();
        for (i, q) in quanta.iter().enumerate() {
            let w = excitation_omega(*q, omegas);
            match levels.last_mut() {
                Some(l) if (w - l.omega).abs() <= tol => l.end = i + 1,
                _ => levels.push(Level {
                    omega: w,
                    start: i,
                    end: i + 1,
                }),
            }
        }
        // ties within a level are ordered lexicographically
        for l in &levels {
            quanta[l.start..l.end].sort();
        }
        let mut level_of = vec![0u32; quanta.len()];
        for (li, l) in levels.iter().enumerate() {
            for slot in &mut level_of[l.start..l.end] {
                *slot = li as u32;
            }
        }
        let modes = quanta.iter().map(|&q| Mode::new(q, omegas)).collect();
        SpectrumTable {
            modes,
            ground_energy: 0.5 * HBAR * (omegas[0] + omegas[1] + omegas[2]),
            cutoff_energy: cutoff,
            omegas,
            mass,
            complete,
            levels,
            level_of,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn omegas(&self) -> [f64; 3] {
        self.omegas
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// True when every mode below the cutoff is present.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level_of(&self, mode: usize) -> usize {
        self.level_of[mode] as usize
    }

    /// Excitation energy `ε_k − ε_0` of a mode, J.
    pub fn excitation_energy(&self, mode: usize) -> f64 {
        HBAR * excitation_omega(self.modes[mode].quanta(), self.omegas)
    }

    /// Largest quantum number per axis.
    pub fn axis_max(&self) -> [usize; 3] {
        let mut m = [0usize; 3];
        for md in &self.modes {
            for (a, q) in md.quanta().iter().enumerate() {
                m[a] = m[a].max(*q as usize);
            }
        }
        m
    }

    /// Index range of modes whose excitation energy lies in `[lo, hi]` (J).
    pub fn modes_in_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self
            .modes
            .partition_point(|m| m.energy - self.ground_energy < lo);
        let b = self
            .modes
            .partition_point(|m| m.energy - self.ground_energy <= hi);
        a..b.max(a)
    }

    /// Writes `index,nx,ny,nz,energy_joule,excitation_over_kbt`.
    pub fn write_csv<W: Write>(&self, mut out: W, temperature: f64) -> io::Result<()> {
        writeln!(out, "index,nx,ny,nz,energy_joule,excitation_over_kbt")?;
        let kt = K_B * temperature;
        for (i, m) in self.modes.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:.16e},{:.16e}",
                i,
                m.nx,
                m.ny,
                m.nz,
                m.energy,
                self.excitation_energy(i) / kt
            )?;
        }
        Ok(())
    }
}

/// All excited modes with excitation energy `≤ energy_cutoff · k_B T`.
pub fn enumerate_modes(trap: &TrapModel) -> Result<SpectrumTable> {
    trap.validate()?;
    enumerate_modes_below(trap, trap.cutoff_energy())
}

/// All excited modes with excitation energy `≤ cutoff` (J).
pub fn enumerate_modes_below(trap: &TrapModel, cutoff: f64) -> Result<SpectrumTable> {
    trap.validate()?;
    let w = trap.omegas();
    let wmax = cutoff / HBAR;
    let nmax = |omega: f64| (wmax / omega).floor() as u32;
    let mut quanta = Vec::new();
    for nx in 0..=nmax(w[0]) {
        for ny in 0..=nmax(w[1]) {
            for nz in 0..=nmax(w[2]) {
                let q = [nx, ny, nz];
                if q == [0, 0, 0] {
                    continue;
                }
                if HBAR * excitation_omega(q, w) <= cutoff {
                    quanta.push(q);
                }
            }
        }
    }
    if quanta.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: cutoff / (K_B * trap.temperature),
        });
    }
    Ok(SpectrumTable::build(w, trap.mass, quanta, cutoff, true))
}
