//! `yamada`: experiments on the Yamada laser with delayed feedback.

mod commands;
mod config;
mod output;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use commands::*;
use config::{overlay, resolve_params, ConfigFile, ParamArgs, Preset};
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "yamada", version, about = "Delayed-feedback Yamada laser experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON config file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base parameter set
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    params: ParamArgs,
    /// Absolute integrator tolerance
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Relative integrator tolerance
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Output file (default stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "args", rename_all = "kebab-case")]
enum Command {
    /// Integrate and sample (t, G, Q, I)
    Simulate(SimulateArgs),
    /// Seed a pulse and classify the response
    Excite(ExciteArgs),
    /// Follow a pulse train through increasing delays
    Sweep(SweepArgs),
    /// Characteristic roots of a steady state
    Spectrum(SpectrumArgs),
    /// Off-state Hopf curves in the (τ, κ) plane
    Hopf(HopfArgs),
    /// Floquet multipliers of a k-pulse train
    Floquet(FloquetArgs),
    /// Asymptotic continuous spectrum for k-pulse trains
    Acs(AcsArgs),
    /// Closed-form stability bounds
    Bounds(BoundsArgs),
    /// Smallest feedback strength sustaining a train
    ScanKappa(ScanKappaArgs),
    /// Print the resolved parameters
    Preset(PresetArgs),
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError { code: 3, msg: msg.into() }
    }

    pub fn io(e: impl fmt::Display) -> Self {
        CliError::numerical(format!("i/o error: {e}"))
    }
}

impl From<yamada::Error> for CliError {
    fn from(e: yamada::Error) -> Self {
        CliError {
            code: if e.is_validation() { 2 } else { 3 },
            msg: e.to_string(),
        }
    }
}

/// Merges the subcommand given on the command line with the config's
/// experiment and arguments.
fn resolve_command(cli: Option<Command>, cfg: &ConfigFile) -> Result<Command, CliError> {
    let (name, flags) = match &cli {
        Some(c) => {
            let v = serde_json::to_value(c).map_err(|e| CliError::validation(e.to_string()))?;
            let name = v["experiment"].as_str().unwrap_or_default().to_string();
            let args = v.get("args").and_then(Value::as_object).cloned().unwrap_or_default();
            (name, args)
        }
        None => match &cfg.experiment {
            Some(e) => (e.clone(), Map::new()),
            None => return Err(CliError::validation("no experiment given")),
        },
    };
    if let Some(e) = &cfg.experiment {
        if *e != name {
            return Err(CliError::validation(format!("config experiment `{e}` conflicts with `{name}`")));
        }
    }
    let mut args = cfg.args.clone();
    overlay(&mut args, flags);
    let merged = serde_json::json!({ "experiment": name, "args": Value::Object(args) });
    serde_json::from_value(merged).map_err(|e| CliError::validation(format!("bad arguments for `{name}`: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let command = resolve_command(cli.command, &cfg)?;
    let preset = cli.preset.or(cfg.preset).unwrap_or(Preset::WorkingPoint);
    let params = resolve_params(preset, &cfg.params, &cli.params)?;
    let mut opts = cfg.options.unwrap_or_default();
    if let Some(a) = cli.abs_tol {
        opts.integrator.abs_tol = a;
    }
    if let Some(r) = cli.rel_tol {
        opts.integrator.rel_tol = r;
    }
    let format = cli.format.or(cfg.format).unwrap_or_default();
    let out = cli.out.or(cfg.out.map(PathBuf::from));

    let ctx = Context { params, opts };
    let report = match command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Excite(a) => excite(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Spectrum(a) => spectrum(&ctx, a),
        Command::Hopf(a) => hopf(&ctx, a),
        Command::Floquet(a) => floquet(&ctx, a),
        Command::Acs(a) => acs(&ctx, a),
        Command::Bounds(a) => bounds(&ctx, a),
        Command::ScanKappa(a) => scan_kappa(&ctx, a),
        Command::Preset(a) => preset_doc(&ctx, a),
    }?;

    match out {
        Some(path) => {
            let file = File::create(&path).map_err(CliError::io)?;
            let mut w = BufWriter::new(file);
            report.write(format, &mut w)?;
            w.flush().map_err(CliError::io)
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            report.write(format, &mut w)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
