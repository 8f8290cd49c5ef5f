//! Pipelines behind each subcommand and the run record.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use condensate_core::collision_rates::{build_rate_table, detailed_balance_residual, RateTable};
use condensate_core::ensemble_oracle::{
    apparent_transition, condensate_curves, critical_temperature, thermal_marginal,
    write_curves_csv,
};
use condensate_core::kinetics::{
    e_folding_time, propagate, steady_state, uniform_grid, write_steady_csv, Distribution,
};
use condensate_core::numeric::total_variation;
use condensate_core::trap_spectrum::{enumerate_modes, OverlapProvider, SpectrumTable, TrapModel};
use condensate_core::{Error as EngineError, ErrorKind};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigErrors, InitialCondition, RunConfig, RunMode};

/// Level at which the condensate fraction counts as vanished in sweeps.
pub const TRANSITION_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Engine(e) => match e.kind() {
                ErrorKind::Config => "config",
                ErrorKind::Numeric => "numeric",
                ErrorKind::Structural => "structural",
            },
        }
    }

    /// Process exit status: 2 configuration (or unusable output path),
    /// 3 numeric failure, 4 structural model error.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "numeric" => 3,
            "structural" => 4,
            _ => 2,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            CliError::Config(errs) => errs.0.clone(),
            other => vec![other.to_string()],
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "errors": self.messages(),
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files and headline numbers produced by one pipeline.
struct Products {
    files: Vec<String>,
    summary: Map<String, Value>,
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Sink<'_> {
    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Runs one pipeline, writing its CSV outputs and `manifest.json` into
/// `out`. Returns the manifest.
pub fn execute(cfg: &RunConfig, mode: RunMode, out: &Path) -> Result<Value, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let trap = cfg.trap();
    trap.validate()?;
    let mut sink = Sink {
        dir: out,
        files: Vec::new(),
    };
    let mut summary = Map::new();
    match mode {
        RunMode::Spectrum => spectrum_run(&trap, &mut sink, &mut summary)?,
        RunMode::Rates => rates_run(cfg, &trap, &mut sink, &mut summary)?,
        RunMode::Evolve => evolve_run(cfg, &trap, &mut sink, &mut summary)?,
        RunMode::Steady => steady_run(cfg, &trap, &mut sink, &mut summary)?,
        RunMode::Oracle => oracle_run(&trap, &mut sink, &mut summary)?,
        RunMode::Sweep => sweep_run(cfg, &trap, &mut sink, &mut summary)?,
    }
    let products = Products {
        files: sink.files,
        summary,
    };
    let manifest = manifest(cfg, mode, out, &products)?;
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Writes the error record next to where the outputs would have gone.
pub fn write_error_record(err: &CliError, out: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let text =
        serde_json::to_string_pretty(&err.to_json()).expect("error record serializes") + "\n";
    fs::write(out.join("error.json"), text)
}

fn spectrum(trap: &TrapModel) -> Result<SpectrumTable, CliError> {
    let spectrum = enumerate_modes(trap)?;
    if spectrum.is_empty() {
        return Err(EngineError::EmptySpectrum {
            cutoff_over_kbt: trap.energy_cutoff,
        }
        .into());
    }
    Ok(spectrum)
}

fn rate_table(
    cfg: &RunConfig,
    trap: &TrapModel,
    spectrum: &SpectrumTable,
) -> Result<RateTable, CliError> {
    let overlaps = OverlapProvider::new(spectrum);
    Ok(build_rate_table(
        spectrum,
        &overlaps,
        trap,
        trap.temperature,
        cfg.rate_mode,
        &cfg.rate_options(),
    )?)
}

fn spectrum_run(
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let spectrum = spectrum(trap)?;
    sink.write("spectrum.csv", |w| spectrum.write_csv(w, trap.temperature))?;
    summary.insert("modes".into(), json!(spectrum.len()));
    summary.insert("levels".into(), json!(spectrum.levels().len()));
    Ok(())
}

fn rates_run(
    cfg: &RunConfig,
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let spectrum = spectrum(trap)?;
    let table = rate_table(cfg, trap, &spectrum)?;
    sink.write("rates.csv", |w| table.write_csv(w))?;
    let residual = detailed_balance_residual(&table)
        .into_iter()
        .map(|(_, r)| r)
        .fold(0.0, f64::max);
    summary.insert("modes".into(), json!(spectrum.len()));
    summary.insert("max_detailed_balance_residual".into(), json!(residual));
    Ok(())
}

fn evolve_run(
    cfg: &RunConfig,
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let spectrum = spectrum(trap)?;
    let table = rate_table(cfg, trap, &spectrum)?;
    let p0 = match cfg.initial_condition {
        InitialCondition::Delta(n0) => Distribution::delta(trap.n_total, n0)?,
        InitialCondition::Canonical => {
            Distribution::new(thermal_marginal(&spectrum, trap.n_total, trap.temperature)?.p_th)?
        }
    };
    let grid = uniform_grid(cfg.t_final_s, cfg.output_points);
    let traj = propagate(&table, &p0, &grid, &cfg.propagate_options())?;
    sink.write("trajectory.csv", |w| traj.write_csv(w, cfg.snapshot_stride))?;
    let (mean, std) = traj.last().mean_std();
    summary.insert(
        "e_folding_time_s".into(),
        json!(e_folding_time(&traj.times, &traj.means)),
    );
    summary.insert("final_mean_n0".into(), json!(mean));
    summary.insert("final_std_n0".into(), json!(std));
    summary.insert("clipped_mass".into(), json!(traj.clipped));
    summary.insert("accepted_steps".into(), json!(traj.accepted_steps));
    summary.insert("rejected_steps".into(), json!(traj.rejected_steps));
    Ok(())
}

fn steady_run(
    cfg: &RunConfig,
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let spectrum = spectrum(trap)?;
    let table = rate_table(cfg, trap, &spectrum)?;
    let steady = steady_state(&table)?;
    let oracle = thermal_marginal(&spectrum, trap.n_total, trap.temperature)?;
    sink.write("steady.csv", |w| write_steady_csv(w, &steady, &oracle.p_th))?;
    let tv = total_variation(steady.probabilities(), &oracle.p_th);
    let (mean, std) = steady.mean_std();
    summary.insert("steady_mean_n0".into(), json!(mean));
    summary.insert("steady_std_n0".into(), json!(std));
    summary.insert("oracle_mean_n0".into(), json!(oracle.mean));
    summary.insert("oracle_std_n0".into(), json!(oracle.std));
    summary.insert("total_variation".into(), json!(tv));
    Ok(())
}

fn oracle_run(
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let spectrum = spectrum(trap)?;
    let oracle = thermal_marginal(&spectrum, trap.n_total, trap.temperature)?;
    sink.write("oracle.csv", |w| {
        writeln!(w, "n0,p_canonical")?;
        for (n0, p) in oracle.p_th.iter().enumerate() {
            writeln!(w, "{n0},{p:.16e}")?;
        }
        Ok(())
    })?;
    summary.insert(
        "critical_temperature_k".into(),
        json!(critical_temperature(trap, trap.n_total)),
    );
    summary.insert("mean_n0".into(), json!(oracle.mean));
    summary.insert("std_n0".into(), json!(oracle.std));
    Ok(())
}

fn sweep_run(
    cfg: &RunConfig,
    trap: &TrapModel,
    sink: &mut Sink,
    summary: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let tc = critical_temperature(trap, trap.n_total);
    let k = cfg.sweep_points - 1;
    let grid: Vec<f64> = (0..=k)
        .map(|i| {
            let x = cfg.sweep_t_min_over_tc
                + (cfg.sweep_t_max_over_tc - cfg.sweep_t_min_over_tc) * i as f64 / k as f64;
            x * tc
        })
        .collect();
    let points = condensate_curves(trap, &grid, cfg.rate_mode, &cfg.rate_options())?;
    sink.write("curves.csv", |w| write_curves_csv(w, &points))?;
    let ratio: Vec<f64> = points.iter().map(|p| p.t_over_tc).collect();
    let oracle: Vec<f64> = points.iter().map(|p| p.oracle_fraction).collect();
    let kinetic: Vec<f64> = points.iter().map(|p| p.kinetics_fraction).collect();
    let deviation = oracle
        .iter()
        .zip(&kinetic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    summary.insert("critical_temperature_k".into(), json!(tc));
    summary.insert(
        "apparent_transition_oracle_t_over_tc".into(),
        json!(apparent_transition(&ratio, &oracle, TRANSITION_LEVEL)),
    );
    summary.insert(
        "apparent_transition_kinetics_t_over_tc".into(),
        json!(apparent_transition(&ratio, &kinetic, TRANSITION_LEVEL)),
    );
    summary.insert("max_fraction_deviation".into(), json!(deviation));
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Run record: effective inputs, versions and output checksums. The
/// output directory, thread count and wall time are left out so that
/// identical configurations give identical manifests.
fn manifest(
    cfg: &RunConfig,
    mode: RunMode,
    out: &Path,
    products: &Products,
) -> Result<Value, CliError> {
    let inputs: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .filter(|(k, _)| *k != "output_dir" && *k != "run_mode")
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let mut outputs = Vec::new();
    for name in &products.files {
        let path = out.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        outputs.push(json!({
            "file": name,
            "bytes": bytes.len(),
            "sha256": sha256_hex(&bytes),
        }));
    }
    Ok(json!({
        "program": "condensim",
        "version": env!("CARGO_PKG_VERSION"),
        "engine_version": condensate_core::VERSION,
        "run_mode": mode.as_str(),
        "inputs": inputs,
        "outputs": outputs,
        "summary": products.summary,
    }))
}
