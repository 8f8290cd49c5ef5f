//! Physical constants (SI, CODATA 2018 exact or recommended values).

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Apéry's constant ζ(3).
pub const ZETA_3: f64 = 1.202_056_903_159_594_3;

/// Mass of a ⁸⁷Rb atom in atomic mass units.
pub const RB87_MASS_AMU: f64 = 86.909_180_527;
