//! Quartic overlap amplitudes `ζ = ∫ χ_0 χ_m χ_k χ_l d³r` for real trap
//! eigenfunctions, factorized into per-axis Hermite integrals.

use std::collections::HashMap;
use std::sync::Mutex;

use super::hermite::QuarticRule;
use super::SpectrumTable;
use crate::constants::HBAR;

/// Dense per-axis tables are built up to this many entries; larger axes
/// evaluate the quadrature on demand.
const DENSE_LIMIT: usize = 40_000_000;

struct Axis {
    rule: QuarticRule,
    dense: Option<Vec<f64>>,
    /// `sqrt(m ω / ħ)`, 1/m
    scale: f64,
}

impl Axis {
    fn integral(&self, a: usize, b: usize, c: usize) -> f64 {
        if (a + b + c) % 2 == 1 {
            return 0.0;
        }
        match &self.dense {
            Some(t) => {
                let d = self.rule.n_max() + 1;
                t[(a * d + b) * d + c]
            }
            None => self.rule.integral(a, b, c),
        }
    }
}

/// Overlap amplitudes with the ground mode as the fourth leg.
///
/// Per-axis integrals are tabulated up front; full amplitudes addressed by
/// mode index are memoized under the sorted index triple. The provider is
/// `Sync` and can be shared across threads.
pub struct OverlapProvider {
    axes: [Axis; 3],
    quanta: Vec<[u32; 3]>,
    cache: Mutex<HashMap<[u32; 3], f64>>,
}

impl std::fmt::Debug for OverlapProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OverlapProvider")
            .field("axis_n_max", &self.axis_n_max())
            .field("modes", &self.quanta.len())
            .finish()
    }
}

impl OverlapProvider {
    pub fn new(spectrum: &SpectrumTable) -> Self {
        Self::with_axis_n_max(spectrum, spectrum.axis_max())
    }

    /// Uses quadrature rules sized for the given per-axis orders, which must
    /// cover the spectrum.
    pub fn with_axis_n_max(spectrum: &SpectrumTable, n_max: [usize; 3]) -> Self {
        let have = spectrum.axis_max();
        assert!(
            (0..3).all(|a| n_max[a] >= have[a]),
            "quadrature orders do not cover the spectrum"
        );
        let w = spectrum.omegas();
        let axes = [0, 1, 2].map(|a| {
            let rule = QuarticRule::new(n_max[a]);
            let d = n_max[a] + 1;
            let dense = (d * d * d <= DENSE_LIMIT).then(|| rule.dense_table());
            Axis {
                rule,
                dense,
                scale: (spectrum.mass() * w[a] / HBAR).sqrt(),
            }
        });
        OverlapProvider {
            axes,
            quanta: spectrum.modes.iter().map(|m| m.quanta()).collect(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn axis_n_max(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.axes[a].rule.n_max())
    }

    /// Dimensionless `∫ φ_0 φ_a φ_b φ_c dx` on one axis.
    pub fn axis_integral(&self, axis: usize, a: usize, b: usize, c: usize) -> f64 {
        self.axes[axis].integral(a, b, c)
    }

    /// `sqrt(m ω_axis / ħ)`, the per-axis dimensional factor of `ζ`.
    pub fn axis_scale(&self, axis: usize) -> f64 {
        self.axes[axis].scale
    }

    /// `ζ` from quantum numbers without touching the cache.
    pub fn zeta_quanta(&self, k: [u32; 3], l: [u32; 3], m: [u32; 3]) -> f64 {
        let mut z = 1.0;
        for a in 0..3 {
            let (ka, la, ma) = (k[a] as usize, l[a] as usize, m[a] as usize);
            if (ka + la + ma) % 2 == 1 {
                return 0.0;
            }
            z *= self.axes[a].scale * self.axes[a].integral(ka, la, ma);
        }
        z
    }

    /// Pair amplitude `∫ χ_0² χ_k χ_l d³r` from quantum numbers.
    pub fn pair_zeta_quanta(&self, k: [u32; 3], l: [u32; 3]) -> f64 {
        self.zeta_quanta(k, l, [0, 0, 0])
    }

    /// `ζ_{kl}^{m0}` for mode indices, memoized.
    pub fn zeta(&self, k: usize, l: usize, m: usize) -> f64 {
        let mut key = [k as u32, l as u32, m as u32];
        key.sort_unstable();
        if let Some(v) = self.cache.lock().expect("overlap cache poisoned").get(&key) {
            return *v;
        }
        let v = self.zeta_quanta(self.quanta[k], self.quanta[l], self.quanta[m]);
        self.cache
            .lock()
            .expect("overlap cache poisoned")
            .insert(key, v);
        v
    }

    /// `ζ_{kl}^{00}` for mode indices.
    pub fn pair_zeta(&self, k: usize, l: usize) -> f64 {
        self.pair_zeta_quanta(self.quanta[k], self.quanta[l])
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("overlap cache poisoned").len()
    }
}

/// `∫ χ_0 χ_m χ_k χ_l d³r` (1/m³) for excited modes `k, l, m`.
pub fn overlap_zeta(provider: &OverlapProvider, k: usize, l: usize, m: usize) -> f64 {
    provider.zeta(k, l, m)
}
