//! INI run configuration.
//!
//! A configuration is a flat list of `key = value` lines with `#` or `;`
//! comments. Unknown keys, sections and repeated keys are rejected, and
//! parsing reports every violation at once.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use condensate_core::collision_rates::{
    RateMode, RateOptions, DEFAULT_PAIR_WINDOW, DEFAULT_WINDOW,
};
use condensate_core::kinetics::{Integrator, PropagateOptions};
use condensate_core::trap_spectrum::{TrapModel, DEFAULT_ENERGY_CUTOFF};
use ini::Ini;

use crate::units;

pub const REQUIRED_KEYS: [&str; 8] = [
    "n_total",
    "freq_x_hz",
    "freq_y_hz",
    "freq_z_hz",
    "mass_amu",
    "scattering_length_nm",
    "temperature_nk",
    "gamma_hz",
];

pub const OPTIONAL_KEYS: [&str; 20] = [
    "run_mode",
    "energy_cutoff",
    "window_width",
    "pair_window_width",
    "rate_mode",
    "include_pairs",
    "include_g_terms",
    "integrator",
    "rtol",
    "atol",
    "max_steps",
    "t_final_s",
    "output_points",
    "snapshot_stride",
    "initial_condition",
    "sweep_t_min_over_tc",
    "sweep_t_max_over_tc",
    "sweep_points",
    "output_dir",
    "clip_budget",
];

/// Pipeline selected by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Spectrum,
    Rates,
    Evolve,
    Steady,
    Oracle,
    Sweep,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Spectrum => "spectrum",
            RunMode::Rates => "rates",
            RunMode::Evolve => "evolve",
            RunMode::Steady => "steady",
            RunMode::Oracle => "oracle",
            RunMode::Sweep => "sweep",
        }
    }
}

impl FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectrum" => Ok(RunMode::Spectrum),
            "rates" => Ok(RunMode::Rates),
            "evolve" => Ok(RunMode::Evolve),
            "steady" => Ok(RunMode::Steady),
            "oracle" => Ok(RunMode::Oracle),
            "sweep" => Ok(RunMode::Sweep),
            other => Err(format!(
                "unknown run mode `{other}` (expected spectrum, rates, evolve, steady, oracle or sweep)"
            )),
        }
    }
}

/// Starting distribution of `N₀` for `evolve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// All probability at one condensate number.
    Delta(usize),
    /// The canonical marginal at the configured temperature.
    Canonical,
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Delta(n0) => write!(f, "delta:{n0}"),
            InitialCondition::Canonical => write!(f, "canonical"),
        }
    }
}

impl FromStr for InitialCondition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "canonical" {
            return Ok(InitialCondition::Canonical);
        }
        s.strip_prefix("delta:")
            .and_then(|n| n.trim().parse().ok())
            .map(InitialCondition::Delta)
            .ok_or_else(|| format!("`{s}` is not `delta:<n0>` or `canonical`"))
    }
}

/// Validated configuration in configuration units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_total: usize,
    pub freq_x_hz: f64,
    pub freq_y_hz: f64,
    pub freq_z_hz: f64,
    pub mass_amu: f64,
    pub scattering_length_nm: f64,
    pub temperature_nk: f64,
    pub gamma_hz: f64,
    pub run_mode: Option<RunMode>,
    pub energy_cutoff: f64,
    pub window_width: f64,
    pub pair_window_width: f64,
    pub rate_mode: RateMode,
    pub include_pairs: bool,
    pub include_g_terms: bool,
    pub integrator: Integrator,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub clip_budget: f64,
    pub t_final_s: f64,
    pub output_points: usize,
    pub snapshot_stride: usize,
    pub initial_condition: InitialCondition,
    pub sweep_t_min_over_tc: f64,
    pub sweep_t_max_over_tc: f64,
    pub sweep_points: usize,
    pub output_dir: Option<PathBuf>,
}

/// Every problem found in a configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    let ini =
        Ini::load_from_str(text).map_err(|e| ConfigErrors(vec![format!("syntax error: {e}")]))?;
    let mut errors = Vec::new();
    let mut entries: Vec<(String, String)> = Vec::new();
    for (section, props) in ini.iter() {
        if let Some(name) = section {
            errors.push(format!(
                "unexpected section [{name}]; all keys belong at top level"
            ));
        }
        for (k, v) in props.iter() {
            if entries.iter().any(|(seen, _)| seen == k) {
                errors.push(format!("{k}: given more than once"));
            } else {
                entries.push((k.to_string(), v.to_string()));
            }
        }
    }
    for (k, _) in &entries {
        if !REQUIRED_KEYS.contains(&k.as_str()) && !OPTIONAL_KEYS.contains(&k.as_str()) {
            errors.push(format!("{k}: unknown key"));
        }
    }
    let mut r = Reader {
        entries: &entries,
        errors,
    };
    let cfg = r.build();
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(r.errors))
    }
}

struct Reader<'a> {
    entries: &'a [(String, String)],
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn value<T: FromStr>(&mut self, key: &str, default: Option<T>, what: &str) -> Option<T> {
        match self.raw(key) {
            Some(v) => match v.parse() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.errors
                        .push(format!("{key}: cannot parse `{v}` as {what}"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.errors.push(format!("{key}: missing required key"));
                }
                default
            }
        }
    }

    fn parsed<T: FromStr<Err = E>, E: fmt::Display>(&mut self, key: &str, default: T) -> T {
        match self.raw(key) {
            Some(v) => match v.parse::<T>() {
                Ok(x) => x,
                Err(e) => {
                    self.errors.push(format!("{key}: {e}"));
                    default
                }
            },
            None => default,
        }
    }

    fn float(
        &mut self,
        key: &str,
        default: Option<f64>,
        check: fn(f64) -> bool,
        rule: &str,
    ) -> f64 {
        match self.value::<f64>(key, default, "a number") {
            Some(x) if x.is_finite() && check(x) => x,
            Some(x) => {
                self.errors.push(format!("{key}: must be {rule}, got {x}"));
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn count(&mut self, key: &str, default: Option<usize>, min: usize) -> usize {
        match self.value::<usize>(key, default, "a non-negative integer") {
            Some(x) if x >= min => x,
            Some(x) => {
                self.errors
                    .push(format!("{key}: must be >= {min}, got {x}"));
                0
            }
            None => 0,
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        self.value::<bool>(key, Some(false), "true or false")
            .unwrap_or(false)
    }

    fn build(&mut self) -> RunConfig {
        let positive = |x: f64| x > 0.0;
        let n_total = self.count("n_total", None, 1);
        let cfg = RunConfig {
            n_total,
            freq_x_hz: self.float("freq_x_hz", None, positive, "positive"),
            freq_y_hz: self.float("freq_y_hz", None, positive, "positive"),
            freq_z_hz: self.float("freq_z_hz", None, positive, "positive"),
            mass_amu: self.float("mass_amu", None, positive, "positive"),
            scattering_length_nm: self.float("scattering_length_nm", None, positive, "positive"),
            temperature_nk: self.float("temperature_nk", None, positive, "positive"),
            gamma_hz: self.float("gamma_hz", None, positive, "positive"),
            run_mode: self
                .raw("run_mode")
                .is_some()
                .then(|| self.parsed("run_mode", RunMode::Spectrum)),
            energy_cutoff: self.float(
                "energy_cutoff",
                Some(DEFAULT_ENERGY_CUTOFF),
                |x| x >= 1.0,
                ">= 1",
            ),
            window_width: self.float("window_width", Some(DEFAULT_WINDOW), positive, "positive"),
            pair_window_width: self.float(
                "pair_window_width",
                Some(DEFAULT_PAIR_WINDOW),
                positive,
                "positive",
            ),
            rate_mode: self.parsed("rate_mode", RateMode::Discrete),
            include_pairs: self.flag("include_pairs"),
            include_g_terms: self.flag("include_g_terms"),
            integrator: self.parsed("integrator", Integrator::Rk45),
            rtol: self.float(
                "rtol",
                Some(PropagateOptions::default().rtol),
                positive,
                "positive",
            ),
            atol: self.float(
                "atol",
                Some(PropagateOptions::default().atol),
                positive,
                "positive",
            ),
            max_steps: self.count("max_steps", Some(PropagateOptions::default().max_steps), 1),
            clip_budget: self.float(
                "clip_budget",
                Some(PropagateOptions::default().clip_budget),
                |x| x >= 0.0,
                ">= 0",
            ),
            t_final_s: self.float("t_final_s", Some(1.0), positive, "positive"),
            output_points: self.count("output_points", Some(200), 1),
            snapshot_stride: self.count("snapshot_stride", Some(1), 1),
            initial_condition: self.parsed("initial_condition", InitialCondition::Delta(0)),
            sweep_t_min_over_tc: self.float("sweep_t_min_over_tc", Some(0.2), positive, "positive"),
            sweep_t_max_over_tc: self.float(
                "sweep_t_max_over_tc",
                Some(1.2),
                |x| x > 0.0 && x <= 1.5,
                "in (0, 1.5]",
            ),
            sweep_points: self.count("sweep_points", Some(21), 2),
            output_dir: self.raw("output_dir").map(PathBuf::from),
        };
        if let InitialCondition::Delta(n0) = cfg.initial_condition {
            if n0 > n_total && n_total > 0 {
                self.errors.push(format!(
                    "initial_condition: delta:{n0} exceeds n_total = {n_total}"
                ));
            }
        }
        if cfg.sweep_t_min_over_tc >= cfg.sweep_t_max_over_tc {
            self.errors.push(format!(
                "sweep_t_min_over_tc: must be below sweep_t_max_over_tc ({} >= {})",
                cfg.sweep_t_min_over_tc, cfg.sweep_t_max_over_tc
            ));
        }
        cfg
    }
}

impl RunConfig {
    /// Engine model in SI units.
    pub fn trap(&self) -> TrapModel {
        TrapModel {
            omega_x: units::hz_to_rad_s(self.freq_x_hz),
            omega_y: units::hz_to_rad_s(self.freq_y_hz),
            omega_z: units::hz_to_rad_s(self.freq_z_hz),
            mass: units::amu_to_kg(self.mass_amu),
            scattering_length: units::nm_to_m(self.scattering_length_nm),
            n_total: self.n_total,
            temperature: units::nk_to_kelvin(self.temperature_nk),
            gamma: self.gamma_hz,
            energy_cutoff: self.energy_cutoff,
        }
    }

    pub fn rate_options(&self) -> RateOptions {
        RateOptions {
            window: self.window_width,
            pair_window: self.pair_window_width,
            include_pairs: self.include_pairs,
            include_g_terms: self.include_g_terms,
            ..RateOptions::default()
        }
    }

    pub fn propagate_options(&self) -> PropagateOptions {
        PropagateOptions {
            integrator: self.integrator,
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            clip_budget: self.clip_budget,
        }
    }

    /// Effective settings as `(key, value)` pairs in file syntax, defaults
    /// included. Floats use the shortest round-trip representation.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("n_total", self.n_total.to_string()),
            ("freq_x_hz", format!("{:?}", self.freq_x_hz)),
            ("freq_y_hz", format!("{:?}", self.freq_y_hz)),
            ("freq_z_hz", format!("{:?}", self.freq_z_hz)),
            ("mass_amu", format!("{:?}", self.mass_amu)),
            (
                "scattering_length_nm",
                format!("{:?}", self.scattering_length_nm),
            ),
            ("temperature_nk", format!("{:?}", self.temperature_nk)),
            ("gamma_hz", format!("{:?}", self.gamma_hz)),
        ];
        if let Some(mode) = self.run_mode {
            e.push(("run_mode", mode.as_str().to_string()));
        }
        e.extend([
            ("energy_cutoff", format!("{:?}", self.energy_cutoff)),
            ("window_width", format!("{:?}", self.window_width)),
            ("pair_window_width", format!("{:?}", self.pair_window_width)),
            ("rate_mode", self.rate_mode.as_str().to_string()),
            ("include_pairs", self.include_pairs.to_string()),
            ("include_g_terms", self.include_g_terms.to_string()),
            ("integrator", self.integrator.as_str().to_string()),
            ("rtol", format!("{:?}", self.rtol)),
            ("atol", format!("{:?}", self.atol)),
            ("max_steps", self.max_steps.to_string()),
            ("clip_budget", format!("{:?}", self.clip_budget)),
            ("t_final_s", format!("{:?}", self.t_final_s)),
            ("output_points", self.output_points.to_string()),
            ("snapshot_stride", self.snapshot_stride.to_string()),
            ("initial_condition", self.initial_condition.to_string()),
            (
                "sweep_t_min_over_tc",
                format!("{:?}", self.sweep_t_min_over_tc),
            ),
            (
                "sweep_t_max_over_tc",
                format!("{:?}", self.sweep_t_max_over_tc),
            ),
            ("sweep_points", self.sweep_points.to_string()),
        ]);
        if let Some(dir) = &self.output_dir {
            e.push(("output_dir", dir.display().to_string()));
        }
        e
    }

    /// Renders the configuration back into file syntax.
    pub fn to_ini(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
