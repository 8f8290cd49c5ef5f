//! Conversions between configuration units and SI.
//!
//! Configuration files use linear frequencies in Hz, temperatures in nK,
//! lengths in nm and masses in atomic mass units. Every conversion into the
//! engine goes through this module.

use std::f64::consts::PI;

use condensate_core::constants::{AMU, K_B};

pub fn hz_to_rad_s(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_s_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

pub fn nk_to_kelvin(t: f64) -> f64 {
    t * 1e-9
}

pub fn kelvin_to_nk(t: f64) -> f64 {
    t * 1e9
}

/// Thermal energy `k_B T` in joules for a temperature in nK.
pub fn nk_to_joule(t: f64) -> f64 {
    K_B * nk_to_kelvin(t)
}

pub fn joule_to_nk(e: f64) -> f64 {
    kelvin_to_nk(e / K_B)
}

pub fn nm_to_m(x: f64) -> f64 {
    x * 1e-9
}

pub fn amu_to_kg(m: f64) -> f64 {
    m * AMU
}
