//! Condensate formation in a fixed-N ideal Bose gas held in a harmonic trap.
//!
//! The crate follows the number-conserving picture: the excited modes of the
//! trap form a rapidly thermalizing environment with a fixed particle number
//! `N - N0`, two-body collisions move single particles in and out of the
//! ground mode, and the condensate number distribution `p(N0, t)` obeys a
//! birth-death master equation.
//!
//! Module map:
//!
//! * [`trap_spectrum`] enumerates trap eigenmodes and computes quartic mode
//!   overlaps.
//! * [`canonical_stats`] solves the constrained occupations of the excited
//!   modes and the exact canonical partition sums.
//! * [`collision_rates`] builds the Gaussian-broadened collision kernel and
//!   the per-`N0` feeding/loss rate tables.
//! * [`kinetics`] propagates and solves the master equation.
//! * [`ensemble_oracle`] is the independent equilibrium reference.

pub mod canonical_stats;
pub mod collision_rates;
pub mod constants;
pub mod ensemble_oracle;
mod error;
pub mod kinetics;
pub mod numeric;
pub mod trap_spectrum;

pub use error::{Error, ErrorKind, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
