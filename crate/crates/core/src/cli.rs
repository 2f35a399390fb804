//! Command-line front end: `spectrum`, `map`, `dips`, `validate`,
//! `print-config`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytic::{dip_fields, multi_shell_dip_field, ShellSpec};
use crate::checks::{collective_a_zz, run_validation};
use crate::config::{Format, RunConfig};
use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::io::{
    write_spectrum_csv, write_spectrum_json, write_sweep_csv, write_sweep_json, FileMetadata, SPECTRUM_SCHEMA,
    SWEEP_SCHEMA,
};
use crate::response::Selector;
use crate::sweep::{run_sweep, spectrum_sweep, Quantity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vbmap", version, about = "Field-sensitivity and coherence maps for spin-1 defects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set sweep.n=601`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Output format; inferred from the output extension when omitted.
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(short, long)]
    pub workers: Option<usize>,
    /// Field noise standard deviation in mT.
    #[arg(long = "sigma-b-mt")]
    pub sigma_b: Option<f64>,
    /// Finite-difference step in mT.
    #[arg(long = "fd-step-mt")]
    pub fd_step: Option<f64>,
    /// Probability threshold of the max-probability selector.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Report every transition instead of the most probable one.
    #[arg(long)]
    pub all_transitions: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenenergies along the configured grid.
    Spectrum(Common),
    /// Gradient, curvature, T2, probability or eminence over the grid.
    Map {
        #[command(flatten)]
        common: Common,
        /// Quantities to compute; replaces the configured list. Repeatable.
        #[arg(short, long = "quantity", value_enum)]
        quantities: Vec<QuantityArg>,
    },
    /// Closed-form dip fields.
    Dips(Common),
    /// Analytic-versus-numeric self-test.
    Validate(Common),
    /// Print the resolved configuration as TOML.
    PrintConfig(Common),
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum QuantityArg {
    Energies,
    Transitions,
    Gradient,
    Curvature,
    T2,
    Probability,
    Eminence,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::Energies => Quantity::Energies,
            QuantityArg::Transitions => Quantity::Transitions,
            QuantityArg::Gradient => Quantity::Gradient,
            QuantityArg::Curvature => Quantity::Curvature,
            QuantityArg::T2 => Quantity::T2,
            QuantityArg::Probability => Quantity::Probability,
            QuantityArg::Eminence => Quantity::Eminence,
        }
    }
}

/// Loads the configuration and applies command-line overrides in order:
/// file, `--set`, dedicated flags.
pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(p) = &common.output {
        cfg.output.path = Some(p.clone());
        if common.format.is_none() {
            if let Some(f) = Format::from_path(p) {
                cfg.output.format = f;
            }
        }
    }
    match common.format.as_deref() {
        Some("csv") => cfg.output.format = Format::Csv,
        Some("json") => cfg.output.format = Format::Json,
        _ => {}
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = common.sigma_b {
        cfg.noise.sigma_b = s;
    }
    if let Some(s) = common.fd_step {
        cfg.numerics.fd_step = s;
    }
    if common.all_transitions {
        cfg.selector = Selector::All;
    }
    if let Some(t) = common.threshold {
        cfg.selector = Selector::MaxProbability { threshold: t };
    }
    Ok(cfg)
}

fn open_output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output.path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn metadata(schema: &str, resolved: &RunConfig) -> Result<FileMetadata> {
    Ok(FileMetadata::new(schema, serde_json::to_value(resolved.provenance())?))
}

/// Writes the eigenenergy table; returns whether any point failed.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<bool> {
    let resolved = cfg.resolved()?;
    let sys = resolved.system.resolve()?;
    let ds = spectrum_sweep(&sys, &resolved.sweep, resolved.sweep_settings().workers)?;
    let meta = metadata(SPECTRUM_SCHEMA, &resolved)?;
    let mut out = open_output(cfg)?;
    match cfg.output.format {
        Format::Csv => write_spectrum_csv(&mut out, &ds, &meta)?,
        Format::Json => write_spectrum_json(&mut out, &ds, &meta)?,
    }
    out.flush()?;
    Ok(ds.rows.iter().any(|r| r.flags.contains(Flags::SOLVER)))
}

/// Writes the sweep dataset; returns whether any point failed.
pub fn cmd_map(cfg: &RunConfig) -> Result<bool> {
    if cfg.quantities.is_empty() {
        return Err(Error::Config("map needs at least one quantity".into()));
    }
    let resolved = cfg.resolved()?;
    let sys = resolved.system.resolve()?;
    let ds = run_sweep(
        &sys,
        &resolved.sweep,
        &resolved.quantities,
        &resolved.selector,
        &resolved.sweep_settings(),
    )?;
    let meta = metadata(SWEEP_SCHEMA, &resolved)?;
    let mut out = open_output(cfg)?;
    match cfg.output.format {
        Format::Csv => write_sweep_csv(&mut out, &ds, &meta)?,
        Format::Json => write_sweep_json(&mut out, &ds, &meta)?,
    }
    out.flush()?;
    Ok(ds.rows.iter().any(|r| r.flags.contains(Flags::SOLVER)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DipRow {
    #[serde(rename = "mI")]
    pub mi: i32,
    #[serde(rename = "B_dip_mT")]
    pub field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DipTable {
    #[serde(rename = "A_zz_MHz")]
    pub a_zz: f64,
    #[serde(rename = "gamma_e_MHz_per_mT")]
    pub gamma_e: f64,
    pub dips: Vec<DipRow>,
    #[serde(rename = "multi_shell_mT", skip_serializing_if = "Option::is_none")]
    pub multi_shell: Option<f64>,
}

pub fn dip_table(cfg: &RunConfig) -> Result<DipTable> {
    let sys = cfg.system.resolve()?;
    let a_zz = collective_a_zz(&sys)?;
    let fields = dip_fields(a_zz, sys.gamma_e, &cfg.dips.mi)?;
    let multi_shell = if cfg.dips.shells.is_empty() {
        None
    } else {
        Some(multi_shell_dip_field(
            &ShellSpec {
                shells: cfg.dips.shells.clone(),
            },
            sys.gamma_e,
        )?)
    };
    Ok(DipTable {
        a_zz,
        gamma_e: sys.gamma_e,
        dips: cfg.dips.mi.iter().zip(fields).map(|(&mi, field)| DipRow { mi, field }).collect(),
        multi_shell,
    })
}

pub fn cmd_dips(cfg: &RunConfig) -> Result<()> {
    let table = dip_table(cfg)?;
    let mut out = open_output(cfg)?;
    match cfg.output.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &table)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
            w.write_record(["mI", "B_dip_mT"])?;
            for d in &table.dips {
                w.write_record([d.mi.to_string(), crate::io::format_sig(d.field, 12)])?;
            }
            if let Some(m) = table.multi_shell {
                w.write_record(["multi-shell".to_string(), crate::io::format_sig(m, 12)])?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Prints the validation report as JSON; returns whether every check passed.
pub fn cmd_validate(cfg: &RunConfig) -> Result<bool> {
    let resolved = cfg.resolved()?;
    let sys = resolved.system.resolve()?;
    let report = run_validation(&sys, &resolved.response_options())?;
    let mut out = open_output(cfg)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    for c in &report.checks {
        log::info!("{}: {} ({} <= {})", c.name, if c.passed { "pass" } else { "FAIL" }, c.value, c.tolerance);
    }
    Ok(report.passed)
}

pub fn cmd_print_config(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut out = open_output(cfg)?;
    out.write_all(cfg.to_toml()?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_VALIDATION
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Spectrum(c) => load_config(&c).and_then(|cfg| cmd_spectrum(&cfg)).map(|failed| {
            if failed {
                EXIT_NUMERIC
            } else {
                EXIT_OK
            }
        }),
        Command::Map { common, quantities } => load_config(&common)
            .and_then(|mut cfg| {
                if !quantities.is_empty() {
                    cfg.quantities = quantities.into_iter().map(Quantity::from).collect();
                }
                cmd_map(&cfg)
            })
            .map(|failed| if failed { EXIT_NUMERIC } else { EXIT_OK }),
        Command::Dips(c) => load_config(&c).and_then(|cfg| cmd_dips(&cfg)).map(|_| EXIT_OK),
        Command::Validate(c) => load_config(&c)
            .and_then(|cfg| cmd_validate(&cfg))
            .map(|ok| if ok { EXIT_OK } else { EXIT_VALIDATION }),
        Command::PrintConfig(c) => load_config(&c).and_then(|cfg| cmd_print_config(&cfg)).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => {
            if code == EXIT_NUMERIC {
                eprintln!("vbmap: one or more field points failed; see rows flagged solver_error");
            } else if code == EXIT_VALIDATION {
                eprintln!("vbmap: validation failed");
            }
            code
        }
        Err(e) => {
            eprintln!("vbmap: {e}");
            exit_code(&e)
        }
    }
}
