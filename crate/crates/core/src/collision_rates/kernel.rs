//! Level-resolved collision kernels.
//!
//! Occupations depend on a mode only through its energy, so the mode triple
//! sums collapse onto distinct levels:
//! `K(i, j, p) = δ^{(Γ)}(ω_i + ω_j − ω_p) Σ_{k∈i, l∈j, m∈p} |ζ_{kl}^{m0}|²`.
//! The kernel does not depend on temperature or `N⊥` and is reused for every
//! occupation profile. Entries are stored for `i ≤ j` (the `i < j` entries
//! carry the factor two of the `k ↔ l` exchange) as contiguous runs in `p`.

use std::collections::HashMap;

use rayon::prelude::*;

use super::convolve::{self_convolve, Cube};
use super::delta_gamma;
use crate::canonical_stats::WeightedLevels;
use crate::constants::HBAR;
use crate::trap_spectrum::{OverlapProvider, SpectrumTable};
use crate::{Error, Result};

/// How the single-particle kernel is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRoute {
    /// Loop over explicit mode triples; works for any mode subset.
    Direct,
    /// Merge axes of equal frequency and convolve their overlap tables;
    /// requires a complete spectrum.
    Factorized,
    /// `Factorized` for complete spectra, `Direct` otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    i: u32,
    j: u32,
    p0: u32,
    len: u32,
    off: usize,
    /// `Σ_p K(i, j, p)`
    s0: f64,
}

/// Single-particle kernel over weighted levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelKernel {
    pub(crate) levels: WeightedLevels,
    runs: Vec<Run>,
    values: Vec<f64>,
}

impl LevelKernel {
    pub fn levels(&self) -> &WeightedLevels {
        &self.levels
    }

    /// Number of stored `(i, j, p)` entries.
    pub fn entries(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(i, j, p, K)` over stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.runs.iter().flat_map(move |r| {
            self.values[r.off..r.off + r.len as usize]
                .iter()
                .enumerate()
                .map(move |(t, v)| (r.i as usize, r.j as usize, r.p0 as usize + t, *v))
        })
    }

    /// Raw sums `(Σ f₊ δ, Σ f₋ δ)` over all mode triples for per-level
    /// occupations `occ` (no dimensional prefactor).
    pub fn evaluate(&self, occ: &[f64]) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for r in &self.runs {
            let vals = &self.values[r.off..r.off + r.len as usize];
            let np = &occ[r.p0 as usize..r.p0 as usize + r.len as usize];
            let mut s1 = 0.0;
            for (v, n) in vals.iter().zip(np) {
                s1 += v * n;
            }
            let (ni, nj) = (occ[r.i as usize], occ[r.j as usize]);
            plus += ni * nj * (r.s0 + s1);
            minus += (1.0 + ni) * (1.0 + nj) * s1;
        }
        (plus, minus)
    }

    /// Density-of-states reduction: levels are binned with width
    /// `bin_omega`, each cell takes the degeneracy-weighted mean energy and
    /// the mass `∫ g(ε) dε` of its Voronoi interval, and the summed kernel is
    /// rescaled from mode counts to that mass.
    pub fn to_cells(&self, cells: &CellMap) -> LevelKernel {
        let mut acc: HashMap<(u32, u32), Vec<(u32, f64)>> = HashMap::new();
        let mut order: Vec<(u32, u32)> = Vec::new();
        for r in &self.runs {
            let ci = cells.cell_of[r.i as usize];
            let cj = cells.cell_of[r.j as usize];
            let entry = acc.entry((ci, cj)).or_insert_with(|| {
                order.push((ci, cj));
                Vec::new()
            });
            for (t, v) in self.values[r.off..r.off + r.len as usize]
                .iter()
                .enumerate()
            {
                entry.push((cells.cell_of[r.p0 as usize + t], *v));
            }
        }
        order.sort_unstable();
        let scale: Vec<f64> = cells
            .mass
            .iter()
            .zip(&cells.degeneracy)
            .map(|(c, d)| c / d)
            .collect();
        let mut runs = Vec::with_capacity(order.len());
        let mut values = Vec::new();
        for key in order {
            let list = &acc[&key];
            let p0 = list.iter().map(|x| x.0).min().unwrap_or(0);
            let p1 = list.iter().map(|x| x.0).max().unwrap_or(0);
            let off = values.len();
            values.resize(off + (p1 - p0 + 1) as usize, 0.0);
            for (p, v) in list {
                values[off + (p - p0) as usize] += v;
            }
            let f = scale[key.0 as usize] * scale[key.1 as usize];
            for (t, v) in values[off..].iter_mut().enumerate() {
                *v *= f * scale[p0 as usize + t];
            }
            let s0 = values[off..].iter().sum();
            runs.push(Run {
                i: key.0,
                j: key.1,
                p0,
                len: p1 - p0 + 1,
                off,
                s0,
            });
        }
        LevelKernel {
            levels: cells.levels.clone(),
            runs,
            values,
        }
    }
}

/// Mapping from spectral levels to density-of-states cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    pub cell_of: Vec<u32>,
    /// Cell energies and their density-of-states mass.
    pub levels: WeightedLevels,
    pub mass: Vec<f64>,
    pub degeneracy: Vec<f64>,
}

impl CellMap {
    /// Bins levels with width `bin_omega` (rad/s); `g(ε) = ε²/(2 (ħω̄)³)`
    /// integrated between midpoints, from zero to `cutoff_omega`.
    pub fn new(
        levels: &WeightedLevels,
        bin_omega: f64,
        omega_bar: f64,
        cutoff_omega: f64,
    ) -> Result<Self> {
        let omegas: Vec<f64> = levels.excitation.iter().map(|e| e / HBAR).collect();
        let mut cell_of = Vec::with_capacity(omegas.len());
        let mut energy_sum: Vec<f64> = Vec::new();
        let mut degeneracy: Vec<f64> = Vec::new();
        let mut last_bin = i64::MIN;
        for (w, d) in omegas.iter().zip(&levels.weight) {
            let bin = (w / bin_omega).floor() as i64;
            if bin != last_bin {
                energy_sum.push(0.0);
                degeneracy.push(0.0);
                last_bin = bin;
            }
            let c = degeneracy.len() - 1;
            energy_sum[c] += d * w;
            degeneracy[c] += d;
            cell_of.push(c as u32);
        }
        let centers: Vec<f64> = energy_sum
            .iter()
            .zip(&degeneracy)
            .map(|(e, d)| e / d)
            .collect();
        let n = centers.len();
        let cube = |w: f64| w * w * w / (6.0 * omega_bar.powi(3));
        let mut mass = Vec::with_capacity(n);
        for c in 0..n {
            let lo = if c == 0 {
                0.0
            } else {
                0.5 * (centers[c - 1] + centers[c])
            };
            let hi = if c + 1 == n {
                cutoff_omega.max(centers[c])
            } else {
                0.5 * (centers[c] + centers[c + 1])
            };
            mass.push(cube(hi) - cube(lo));
        }
        let cell_levels = WeightedLevels::new(
            centers.iter().map(|w| HBAR * w).collect(),
            mass.clone(),
            levels.ground_energy,
        )?;
        Ok(CellMap {
            cell_of,
            levels: cell_levels,
            mass,
            degeneracy,
        })
    }
}

/// An axis group: axes sharing one frequency, addressed by their summed
/// quantum number.
struct Group {
    axes: Vec<usize>,
    table: Cube,
}

#[derive(Debug, Clone, Copy)]
struct Composite {
    key: [u16; 3],
}

fn axis_groups(
    spectrum: &SpectrumTable,
    provider: &OverlapProvider,
    merge: bool,
) -> Result<Vec<Group>> {
    let w = spectrum.omegas();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in 0..3 {
        match groups
            .iter_mut()
            .find(|g| merge && w[g[0]].to_bits() == w[a].to_bits())
        {
            Some(g) => g.push(a),
            None => groups.push(vec![a]),
        }
    }
    let n_max = provider.axis_n_max();
    groups
        .into_iter()
        .map(|axes| {
            let top = spectrum
                .modes
                .iter()
                .map(|m| axes.iter().map(|&a| m.quanta()[a] as usize).sum::<usize>())
                .max()
                .unwrap_or(0);
            let a0 = axes[0];
            if top > n_max[a0] {
                return Err(Error::InvalidArgument(format!(
                    "merged axis order {top} exceeds quadrature order {}",
                    n_max[a0]
                )));
            }
            let d = top + 1;
            let s2 = provider.axis_scale(a0).powi(2);
            let mut data = vec![0.0; d * d * d];
            for x in 0..d {
                for y in 0..d {
                    for z in 0..d {
                        let v = provider.axis_integral(a0, x, y, z);
                        data[(x * d + y) * d + z] = s2 * v * v;
                    }
                }
            }
            let table = self_convolve(&Cube { d, data }, axes.len());
            Ok(Group { axes, table })
        })
        .collect()
}

/// Builds the single-particle level kernel of a spectrum.
///
/// `window` is the pruning half-width in units of `Γ` (`f64::INFINITY`
/// keeps every triple).
pub fn build_level_kernel(
    spectrum: &SpectrumTable,
    provider: &OverlapProvider,
    gamma: f64,
    window: f64,
    route: KernelRoute,
) -> Result<LevelKernel> {
    if spectrum.is_empty() {
        return Err(Error::EmptySpectrum {
            cutoff_over_kbt: 0.0,
        });
    }
    if gamma.is_nan() || gamma <= 0.0 || window.is_nan() || window <= 0.0 {
        return Err(Error::InvalidArgument(
            "gamma and window must be positive".into(),
        ));
    }
    let merge = match route {
        KernelRoute::Direct => false,
        KernelRoute::Factorized => {
            if !spectrum.is_complete() {
                return Err(Error::InvalidArgument(
                    "the factorized kernel needs a complete spectrum".into(),
                ));
            }
            true
        }
        KernelRoute::Auto => spectrum.is_complete(),
    };
    let groups = axis_groups(spectrum, provider, merge)?;

    // composite states: one per distinct tuple of group quantum numbers
    let mut seen: HashMap<[u16; 3], u32> = HashMap::new();
    for (idx, m) in spectrum.modes.iter().enumerate() {
        let q = m.quanta();
        let mut key = [0u16; 3];
        for (g, grp) in groups.iter().enumerate() {
            key[g] = grp.axes.iter().map(|&a| q[a] as u16).sum();
        }
        seen.entry(key).or_insert(spectrum.level_of(idx) as u32);
    }
    let mut comps: Vec<(u32, [u16; 3])> = seen.into_iter().map(|(k, l)| (l, k)).collect();
    comps.sort_unstable();
    let nlev = spectrum.levels().len();
    let mut comp_start = vec![0usize; nlev + 1];
    for (l, _) in &comps {
        comp_start[*l as usize + 1] += 1;
    }
    for l in 0..nlev {
        comp_start[l + 1] += comp_start[l];
    }
    let comp_level: Vec<u32> = comps.iter().map(|c| c.0).collect();
    let comps: Vec<Composite> = comps.iter().map(|c| Composite { key: c.1 }).collect();

    // unused group slots use a unit table
    let unit = Cube {
        d: 1,
        data: vec![1.0],
    };
    let tables: Vec<&Cube> = (0..3)
        .map(|g| groups.get(g).map_or(&unit, |x| &x.table))
        .collect();

    let omega: Vec<f64> = spectrum.levels().iter().map(|l| l.omega).collect();
    let w_min = spectrum
        .omegas()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * w_min;
    let half = window * gamma;

    let rows: Vec<(Vec<Run>, Vec<f64>)> = (0..nlev)
        .into_par_iter()
        .map(|i| {
            // p ranges per partner level j
            let mut plan: Vec<(usize, usize, usize, usize)> = Vec::new(); // (j, p_lo, p_hi, off)
            let mut len = 0;
            for j in i..nlev {
                let target = omega[i] + omega[j];
                if target - half - tol > omega[nlev - 1] {
                    break;
                }
                let p_lo = omega.partition_point(|&w| w < target - half - tol);
                let p_hi = omega.partition_point(|&w| w <= target + half + tol);
                if p_lo < p_hi {
                    plan.push((j, p_lo, p_hi, len));
                    len += p_hi - p_lo;
                }
            }
            let mut buf = vec![0.0; len];
            for k in &comps[comp_start[i]..comp_start[i + 1]] {
                for &(j, p_lo, p_hi, off) in &plan {
                    let fold = if j > i { 2.0 } else { 1.0 };
                    let run = &mut buf[off..off + (p_hi - p_lo)];
                    for l in &comps[comp_start[j]..comp_start[j + 1]] {
                        let base: [usize; 3] = [0, 1, 2].map(|g| {
                            let d = tables[g].d;
                            (k.key[g] as usize * d + l.key[g] as usize) * d
                        });
                        let m_range = comp_start[p_lo]..comp_start[p_hi];
                        for (m, lev) in comps[m_range.clone()].iter().zip(&comp_level[m_range]) {
                            let mut v = tables[0].data[base[0] + m.key[0] as usize];
                            if v == 0.0 {
                                continue;
                            }
                            v *= tables[1].data[base[1] + m.key[1] as usize];
                            if v == 0.0 {
                                continue;
                            }
                            v *= tables[2].data[base[2] + m.key[2] as usize];
                            run[*lev as usize - p_lo] += fold * v;
                        }
                    }
                }
            }
            let mut runs = Vec::new();
            let mut values = Vec::new();
            for &(j, p_lo, p_hi, off) in &plan {
                let raw = &buf[off..off + (p_hi - p_lo)];
                let first = raw.iter().position(|v| *v != 0.0);
                let last = raw.iter().rposition(|v| *v != 0.0);
                let (Some(a), Some(b)) = (first, last) else {
                    continue;
                };
                let o = values.len();
                for (t, v) in raw[a..=b].iter().enumerate() {
                    let p = p_lo + a + t;
                    values.push(v * delta_gamma(omega[i] + omega[j] - omega[p], gamma));
                }
                runs.push(Run {
                    i: i as u32,
                    j: j as u32,
                    p0: (p_lo + a) as u32,
                    len: (b - a + 1) as u32,
                    off: o,
                    s0: values[o..].iter().sum(),
                });
            }
            (runs, values)
        })
        .collect();

    let mut runs = Vec::new();
    let mut values = Vec::new();
    for (rs, vs) in rows {
        let shift = values.len();
        runs.extend(rs.into_iter().map(|mut r| {
            r.off += shift;
            r
        }));
        values.extend(vs);
    }
    Ok(LevelKernel {
        levels: WeightedLevels::from_spectrum(spectrum),
        runs,
        values,
    })
}

/// Pair kernel `δ^{(Γ)}(ω_i + ω_j) Σ_{k∈i, l∈j} |ζ_{kl}^{00}|²` for `i ≤ j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKernel {
    entries: Vec<(u32, u32, f64)>,
}

impl PairKernel {
    /// Keeps mode pairs with `ω_k + ω_l ≤ window · Γ`.
    pub fn build(
        spectrum: &SpectrumTable,
        provider: &OverlapProvider,
        gamma: f64,
        window: f64,
    ) -> Self {
        let limit = window * gamma;
        let omega: Vec<f64> = spectrum.levels().iter().map(|l| l.omega).collect();
        let top = spectrum
            .modes
            .partition_point(|m| m.energy - spectrum.ground_energy <= HBAR * limit * (1.0 + 1e-12));
        let mut acc: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
        for k in 0..top {
            let lk = spectrum.level_of(k);
            for l in 0..top {
                let ll = spectrum.level_of(l);
                if ll < lk || omega[lk] + omega[ll] > limit {
                    continue;
                }
                let z = provider
                    .pair_zeta_quanta(spectrum.modes[k].quanta(), spectrum.modes[l].quanta());
                if z == 0.0 {
                    continue;
                }
                let fold = if ll > lk { 2.0 } else { 1.0 };
                *acc.entry((lk as u32, ll as u32)).or_insert(0.0) += fold * z * z;
            }
        }
        let entries = acc
            .into_iter()
            .map(|((i, j), v)| {
                (
                    i,
                    j,
                    v * delta_gamma(omega[i as usize] + omega[j as usize], gamma),
                )
            })
            .collect();
        PairKernel { entries }
    }

    pub fn evaluate(&self, occ: &[f64]) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for &(i, j, v) in &self.entries {
            let (ni, nj) = (occ[i as usize], occ[j as usize]);
            plus += ni * nj * v;
            minus += (1.0 + ni) * (1.0 + nj) * v;
        }
        (plus, minus)
    }

    pub fn to_cells(&self, cells: &CellMap) -> PairKernel {
        let scale: Vec<f64> = cells
            .mass
            .iter()
            .zip(&cells.degeneracy)
            .map(|(c, d)| c / d)
            .collect();
        let mut acc: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
        for &(i, j, v) in &self.entries {
            let (ci, cj) = (cells.cell_of[i as usize], cells.cell_of[j as usize]);
            *acc.entry((ci, cj)).or_insert(0.0) += v;
        }
        PairKernel {
            entries: acc
                .into_iter()
                .map(|((i, j), v)| (i, j, v * scale[i as usize] * scale[j as usize]))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Kernel of the exchange-type terms with energy balance `ω_l − ω₀`:
/// `g₊ = 2 Σ_l ⟨N_l⟩ S_l² δ(ω_l)` and `g₋ = 2 Σ_l (⟨N_l⟩+1) S_l² δ(ω_l)`
/// with `S_l = Σ_k ⟨N_k⟩ ζ_{kl}^{k0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GKernel {
    /// `(level of l, δ(ω_l), H_l)` with `H_l[i] = Σ_{k∈i} ζ_{kl}^{k0}`
    terms: Vec<(u32, f64, Vec<f64>)>,
}

impl GKernel {
    pub fn build(
        spectrum: &SpectrumTable,
        provider: &OverlapProvider,
        gamma: f64,
        window: f64,
    ) -> Self {
        let limit = window * gamma;
        let mut terms = Vec::new();
        for (l, ml) in spectrum.modes.iter().enumerate() {
            let wl = spectrum.levels()[spectrum.level_of(l)].omega;
            if wl > limit {
                break;
            }
            let ql = ml.quanta();
            if ql.iter().any(|q| q % 2 == 1) {
                // ζ_{kl}^{k0} needs an even quantum number on every axis of l
                continue;
            }
            let mut h = vec![0.0; spectrum.levels().len()];
            for (k, mk) in spectrum.modes.iter().enumerate() {
                let qk = mk.quanta();
                h[spectrum.level_of(k)] += provider.zeta_quanta(qk, ql, qk);
            }
            terms.push((spectrum.level_of(l) as u32, delta_gamma(wl, gamma), h));
        }
        GKernel { terms }
    }

    pub fn evaluate(&self, occ: &[f64]) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (l, d, h) in &self.terms {
            let s: f64 = h.iter().zip(occ).map(|(h, n)| h * n).sum();
            let nl = occ[*l as usize];
            plus += 2.0 * nl * s * s * d;
            minus += 2.0 * (nl + 1.0) * s * s * d;
        }
        (plus, minus)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}
