//! Run configuration: a single TOML file with unit-suffixed keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{default_vb_system, SpinSystem};
use crate::response::{NoiseModel, ResponseOptions, Selector, DEFAULT_STEP_MT, DEFAULT_T2_CAP_US};
use crate::sweep::{Quantity, SweepGrid, SweepSettings, DEFAULT_LINE_POINTS};

pub const DEFAULT_PRESET: &str = "default-vb";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Preset(String),
    Explicit(SpinSystem),
}

impl SystemConfig {
    pub fn resolve(&self) -> Result<SpinSystem> {
        let sys = match self {
            SystemConfig::Preset(name) if name == DEFAULT_PRESET => default_vb_system(),
            SystemConfig::Preset(name) => {
                return Err(Error::Config(format!("unknown system preset {name:?} (known: {DEFAULT_PRESET})")))
            }
            SystemConfig::Explicit(sys) => sys.clone(),
        };
        sys.validate()?;
        Ok(sys)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(rename = "fd_step_mT", default = "default_step")]
    pub fd_step: f64,
    #[serde(rename = "t2_cap_us", default = "default_cap")]
    pub t2_cap: f64,
}

fn default_step() -> f64 {
    DEFAULT_STEP_MT
}

fn default_cap() -> f64 {
    DEFAULT_T2_CAP_US
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            fd_step: DEFAULT_STEP_MT,
            t2_cap: DEFAULT_T2_CAP_US,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipConfig {
    #[serde(default = "default_dip_mi")]
    pub mi: Vec<i32>,
    /// Optional extra shells as (m_I, A_zz in MHz) for the summed dip.
    #[serde(rename = "shells_MHz", default, skip_serializing_if = "Vec::is_empty")]
    pub shells: Vec<(i32, f64)>,
}

fn default_dip_mi() -> Vec<i32> {
    (-3..=3).collect()
}

impl Default for DipConfig {
    fn default() -> Self {
        Self {
            mi: default_dip_mi(),
            shells: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub quantities: Vec<Quantity>,
    /// Worker threads; 0 uses every available core. Not part of provenance.
    #[serde(default)]
    pub workers: usize,
    pub sweep: SweepGrid,
    #[serde(default)]
    pub selector: Selector,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub dips: DipConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::Preset(DEFAULT_PRESET.into()),
            quantities: vec![Quantity::Gradient, Quantity::T2],
            workers: 0,
            sweep: SweepGrid::LineParallel {
                b_min: 0.0,
                b_max: 6.0,
                n: DEFAULT_LINE_POINTS,
            },
            selector: Selector::default(),
            noise: NoiseModel::default(),
            numerics: Numerics::default(),
            dips: DipConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Sets `dotted.key = value` inside a TOML table. The value is parsed as
/// TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override {key:?} descends into a non-table value"))),
        };
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn json_to_toml(v: serde_json::Value) -> Result<String> {
    let value = toml::Value::try_from(v).map_err(|e| Error::Config(format!("configuration is not TOML-representable: {e}")))?;
    match value {
        toml::Value::Table(t) => toml::to_string(&t).map_err(|e| Error::Config(e.to_string())),
        _ => Err(Error::Config("configuration must be a table".into())),
    }
}

/// TOML text of a configuration given as TOML, JSON, or a dataset header.
pub fn config_text(raw: &str) -> Result<String> {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('#') {
        if let Some(line) = raw.lines().find_map(|l| l.strip_prefix("# config:")) {
            return json_to_toml(serde_json::from_str(line.trim())?);
        }
    }
    if trimmed.starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(raw)?;
        let v = match v {
            serde_json::Value::Object(mut m) if m.contains_key("schema") && m.contains_key("config") => {
                m.remove("config").unwrap_or_default()
            }
            other => other,
        };
        return json_to_toml(v);
    }
    Ok(raw.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        if overrides.iter().any(|o| o.trim_start().starts_with("system.")) {
            if let Some(toml::Value::String(name)) = table.get("system") {
                let sys = SystemConfig::Preset(name.clone()).resolve()?;
                let value = toml::Value::try_from(&sys).map_err(|e| Error::Config(e.to_string()))?;
                table.insert("system".into(), value);
            }
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Defaults, then the file if given, then `overrides`. The file may be
    /// TOML, a JSON configuration, or a dataset written by this crate, in
    /// which case its embedded configuration is used.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                config_text(&raw)?
            }
            None => Self::default().to_toml()?,
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field that does not require computation.
    pub fn validate(&self) -> Result<SpinSystem> {
        let sys = self.system.resolve()?;
        self.sweep.validate()?;
        self.noise.validate()?;
        if !(self.numerics.fd_step > 0.0 && self.numerics.fd_step.is_finite()) {
            return Err(Error::Config(format!("fd_step_mT must be positive, got {}", self.numerics.fd_step)));
        }
        if !(self.numerics.t2_cap > 0.0) {
            return Err(Error::Config(format!("t2_cap_us must be positive, got {}", self.numerics.t2_cap)));
        }
        if let Selector::MaxProbability { threshold } = self.selector {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("probability threshold must lie in [0, 1], got {threshold}")));
            }
        }
        Ok(sys)
    }

    /// Validates and replaces a preset by its explicit parameters.
    pub fn resolved(&self) -> Result<Self> {
        let sys = self.validate()?;
        Ok(Self {
            system: SystemConfig::Explicit(sys),
            ..self.clone()
        })
    }

    /// The configuration as embedded in output files: execution-only
    /// fields (worker count, output path) are dropped so that the bytes do
    /// not depend on them.
    pub fn provenance(&self) -> Self {
        Self {
            workers: 0,
            output: OutputConfig {
                path: None,
                format: self.output.format,
            },
            ..self.clone()
        }
    }

    pub fn response_options(&self) -> ResponseOptions {
        ResponseOptions {
            step: self.numerics.fd_step,
            t2_cap: self.numerics.t2_cap,
            noise: self.noise,
        }
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        let workers = if self.workers == 0 {
            SweepSettings::default().workers
        } else {
            self.workers
        };
        SweepSettings {
            response: self.response_options(),
            workers,
        }
    }
}
