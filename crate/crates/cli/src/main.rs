//! `condensim`: batch driver for the condensate formation engine.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use condensate_cli::config::{parse_config, RunMode};
use condensate_cli::run::{execute, write_error_record, CliError};
use condensate_core::collision_rates::RateMode;

#[derive(Parser)]
#[command(
    name = "condensim",
    version,
    about = "Condensate formation in a trapped ideal Bose gas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// INI configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Mode sums; overrides `rate_mode` from the configuration.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Enumerate the excited trap modes.
    Spectrum,
    /// Tabulate feeding and loss rates.
    Rates,
    /// Propagate the condensate number distribution.
    Evolve,
    /// Solve for the steady state and compare with the canonical marginal.
    Steady,
    /// Canonical condensate-number marginal.
    Oracle,
    /// Condensate fraction and fluctuations over a temperature grid.
    Sweep,
    /// Use `run_mode` from the configuration.
    Run,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeArg {
    Discrete,
    Semiclassical,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            for msg in err.messages() {
                eprintln!("error: {msg}");
            }
            if let Some(out) = &cli.out {
                if let Err(e) = write_error_record(&err, out) {
                    eprintln!("error: cannot write error record: {e}");
                }
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(config_error("--config <path> is required"));
    };
    let mut cfg = parse_config(path)?;
    if let Some(mode) = cli.mode {
        cfg.rate_mode = match mode {
            ModeArg::Discrete => RateMode::Discrete,
            ModeArg::Semiclassical => RateMode::Semiclassical,
        };
    }
    let mode = match cli.command {
        Command::Spectrum => RunMode::Spectrum,
        Command::Rates => RunMode::Rates,
        Command::Evolve => RunMode::Evolve,
        Command::Steady => RunMode::Steady,
        Command::Oracle => RunMode::Oracle,
        Command::Sweep => RunMode::Sweep,
        Command::Run => cfg
            .run_mode
            .ok_or_else(|| config_error("run_mode: required by the `run` subcommand"))?,
    };
    let Some(out) = cli.out.clone().or_else(|| cfg.output_dir.clone()) else {
        return Err(config_error(
            "no output directory: pass --out or set output_dir",
        ));
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(&format!("cannot start thread pool: {e}")))?;
    }
    let manifest = execute(&cfg, mode, &out)?;
    for file in manifest["outputs"].as_array().into_iter().flatten() {
        println!(
            "{}",
            out.join(file["file"].as_str().unwrap_or_default())
                .display()
        );
    }
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn config_error(msg: &str) -> CliError {
    CliError::Config(condensate_cli::config::ConfigErrors(vec![msg.to_string()]))
}
