//! Dataset serialization.
//!
//! CSV files start with `#`-prefixed metadata lines (schema, generator,
//! resolved configuration as JSON), then a header row and one row per
//! record. Floats carry 12 significant digits; missing values are empty
//! cells. JSON files hold one object with the same metadata and a `rows`
//! array, floats stored exactly.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::sweep::{SpectrumDataset, SpectrumRow, SweepDataset, SweepRow};
use crate::hamiltonian::FieldPoint;

pub const SWEEP_SCHEMA: &str = "vbmap-sweep/1";
pub const SPECTRUM_SCHEMA: &str = "vbmap-spectrum/1";
pub const GENERATOR: &str = concat!("vbmap ", env!("CARGO_PKG_VERSION"));
pub const CSV_SIGNIFICANT_DIGITS: usize = 12;

pub const SWEEP_COLUMNS: [&str; 15] = [
    "B0_mT",
    "theta_rad",
    "phi_rad",
    "i_idx",
    "f_idx",
    "ms_i",
    "ms_f",
    "mI_f",
    "f_MHz",
    "P",
    "grad_MHz_per_mT",
    "curv_MHz_per_mT2",
    "t2_us",
    "flags",
    "eminence",
];

/// Header metadata common to every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetadata {
    pub schema: String,
    pub generator: String,
    pub config: Value,
}

impl FileMetadata {
    pub fn new(schema: &str, config: Value) -> Self {
        Self {
            schema: schema.to_string(),
            generator: GENERATOR.to_string(),
            config,
        }
    }
}

/// `x` rounded to `digits` significant digits in its shortest form.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x);
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// The value a float takes after a CSV round trip.
pub fn csv_rounded(x: f64) -> f64 {
    format_sig(x, CSV_SIGNIFICANT_DIGITS).parse().unwrap_or(x)
}

fn fmt_f(x: f64) -> String {
    format_sig(x, CSV_SIGNIFICANT_DIGITS)
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_opt_f(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn write_meta_lines<W: Write>(out: &mut W, meta: &FileMetadata) -> Result<()> {
    writeln!(out, "# schema: {}", meta.schema)?;
    writeln!(out, "# generator: {}", meta.generator)?;
    writeln!(out, "# config: {}", serde_json::to_string(&meta.config)?)?;
    Ok(())
}

/// Reads the `#` metadata lines and returns the remaining CSV text.
fn split_meta<R: BufRead>(input: R) -> Result<(FileMetadata, String)> {
    let mut schema = None;
    let mut generator = None;
    let mut config = None;
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(v) = rest.strip_prefix("schema:") {
                schema = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("generator:") {
                generator = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("config:") {
                config = Some(serde_json::from_str(v.trim())?);
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let schema = schema.ok_or_else(|| Error::Config("dataset has no schema line".into()))?;
    Ok((
        FileMetadata {
            schema,
            generator: generator.unwrap_or_default(),
            config: config.unwrap_or(Value::Null),
        },
        body,
    ))
}

fn expect_schema(meta: &FileMetadata, schema: &str) -> Result<()> {
    if meta.schema != schema {
        return Err(Error::Config(format!("schema {:?} does not match expected {schema:?}", meta.schema)));
    }
    Ok(())
}

fn check_columns(found: &[String], expected: &[String]) -> Result<()> {
    if found != expected {
        let missing: Vec<_> = expected.iter().filter(|c| !found.contains(c)).collect();
        let extra: Vec<_> = found.iter().filter(|c| !expected.contains(c)).collect();
        return Err(Error::Config(format!(
            "column mismatch: missing {missing:?}, unexpected {extra:?}"
        )));
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, ds: &SweepDataset, meta: &FileMetadata) -> Result<()> {
    let mut out = out;
    write_meta_lines(&mut out, meta)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &ds.rows {
        w.write_record([
            fmt_f(r.b0),
            fmt_f(r.theta),
            fmt_f(r.phi),
            fmt_opt(r.initial),
            fmt_opt(r.fin),
            fmt_opt(r.ms_initial),
            fmt_opt(r.ms_final),
            fmt_opt(r.mi_final),
            fmt_opt_f(r.f),
            fmt_opt_f(r.probability),
            fmt_opt_f(r.grad),
            fmt_opt_f(r.curv),
            fmt_opt_f(r.t2),
            r.flags.to_string(),
            fmt_opt_f(r.eminence),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(cell: &str, column: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("cannot parse {cell:?} in column {column}")))
}

fn required<T>(v: Option<T>, column: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("empty cell in required column {column}")))
}

fn parse_flags(cell: &str) -> Result<Flags> {
    Flags::parse(cell).ok_or_else(|| Error::Config(format!("unknown flag in {cell:?}")))
}

/// Reads rows and metadata written by [`write_sweep_csv`].
pub fn read_sweep_csv<R: BufRead>(input: R) -> Result<(FileMetadata, Vec<SweepRow>)> {
    let (meta, body) = split_meta(input)?;
    expect_schema(&meta, SWEEP_SCHEMA)?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    check_columns(&header, &SWEEP_COLUMNS.map(String::from))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let c = |k: usize| rec.get(k).unwrap_or("");
        let n = |k: usize| SWEEP_COLUMNS[k];
        rows.push(SweepRow {
            b0: required(parse_cell(c(0), n(0))?, n(0))?,
            theta: required(parse_cell(c(1), n(1))?, n(1))?,
            phi: required(parse_cell(c(2), n(2))?, n(2))?,
            initial: parse_cell(c(3), n(3))?,
            fin: parse_cell(c(4), n(4))?,
            ms_initial: parse_cell(c(5), n(5))?,
            ms_final: parse_cell(c(6), n(6))?,
            mi_final: parse_cell(c(7), n(7))?,
            f: parse_cell(c(8), n(8))?,
            probability: parse_cell(c(9), n(9))?,
            grad: parse_cell(c(10), n(10))?,
            curv: parse_cell(c(11), n(11))?,
            t2: parse_cell(c(12), n(12))?,
            flags: parse_flags(c(13))?,
            eminence: parse_cell(c(14), n(14))?,
        });
    }
    Ok((meta, rows))
}

fn json_opt<T: Into<Value>>(x: Option<T>) -> Value {
    x.map(Into::into).unwrap_or(Value::Null)
}

fn sweep_row_json(r: &SweepRow) -> Value {
    let mut m = Map::new();
    let vals = [
        Value::from(r.b0),
        Value::from(r.theta),
        Value::from(r.phi),
        json_opt(r.initial.map(|v| v as u64)),
        json_opt(r.fin.map(|v| v as u64)),
        json_opt(r.ms_initial.map(i64::from)),
        json_opt(r.ms_final.map(i64::from)),
        json_opt(r.mi_final.map(i64::from)),
        json_opt(r.f),
        json_opt(r.probability),
        json_opt(r.grad),
        json_opt(r.curv),
        json_opt(r.t2),
        Value::from(r.flags.to_string()),
        json_opt(r.eminence),
    ];
    for (k, v) in SWEEP_COLUMNS.iter().zip(vals) {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    #[serde(flatten)]
    meta: FileMetadata,
    columns: Vec<String>,
    rows: Vec<Map<String, Value>>,
}

pub fn write_sweep_json<W: Write>(mut out: W, ds: &SweepDataset, meta: &FileMetadata) -> Result<()> {
    let file = JsonFile {
        meta: meta.clone(),
        columns: SWEEP_COLUMNS.map(String::from).to_vec(),
        rows: ds
            .rows
            .iter()
            .map(|r| match sweep_row_json(r) {
                Value::Object(m) => m,
                _ => unreachable!(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut out, &file)?;
    writeln!(out)?;
    Ok(())
}

fn json_get<T: serde::de::DeserializeOwned>(m: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("column {key}: {e}"))),
    }
}

pub fn read_sweep_json<R: std::io::Read>(input: R) -> Result<(FileMetadata, Vec<SweepRow>)> {
    let file: JsonFile = serde_json::from_reader(input)?;
    expect_schema(&file.meta, SWEEP_SCHEMA)?;
    check_columns(&file.columns, &SWEEP_COLUMNS.map(String::from))?;
    let rows = file
        .rows
        .iter()
        .map(|m| {
            let flags: Option<String> = json_get(m, "flags")?;
            Ok(SweepRow {
                b0: required(json_get(m, "B0_mT")?, "B0_mT")?,
                theta: required(json_get(m, "theta_rad")?, "theta_rad")?,
                phi: required(json_get(m, "phi_rad")?, "phi_rad")?,
                initial: json_get(m, "i_idx")?,
                fin: json_get(m, "f_idx")?,
                ms_initial: json_get(m, "ms_i")?,
                ms_final: json_get(m, "ms_f")?,
                mi_final: json_get(m, "mI_f")?,
                f: json_get(m, "f_MHz")?,
                probability: json_get(m, "P")?,
                grad: json_get(m, "grad_MHz_per_mT")?,
                curv: json_get(m, "curv_MHz_per_mT2")?,
                t2: json_get(m, "t2_us")?,
                flags: parse_flags(flags.as_deref().unwrap_or(""))?,
                eminence: json_get(m, "eminence")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((file.meta, rows))
}

pub fn spectrum_columns(dim: usize) -> Vec<String> {
    let width = dim.saturating_sub(1).to_string().len().max(2);
    let mut cols = vec!["B0_mT".to_string(), "theta_rad".into(), "phi_rad".into()];
    cols.extend((0..dim).map(|k| format!("E{k:0width$}_MHz")));
    cols.push("flags".into());
    cols
}

pub fn write_spectrum_csv<W: Write>(out: W, ds: &SpectrumDataset, meta: &FileMetadata) -> Result<()> {
    let mut out = out;
    write_meta_lines(&mut out, meta)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(spectrum_columns(ds.dim))?;
    for r in &ds.rows {
        let mut rec = vec![fmt_f(r.point.b0), fmt_f(r.point.theta), fmt_f(r.point.phi)];
        match &r.energies {
            Some(e) => rec.extend(e.iter().map(|&v| fmt_f(v))),
            None => rec.extend(std::iter::repeat_n(String::new(), ds.dim)),
        }
        rec.push(r.flags.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_json<W: Write>(mut out: W, ds: &SpectrumDataset, meta: &FileMetadata) -> Result<()> {
    let cols = spectrum_columns(ds.dim);
    let rows = ds
        .rows
        .iter()
        .map(|r| {
            let mut m = Map::new();
            m.insert(cols[0].clone(), r.point.b0.into());
            m.insert(cols[1].clone(), r.point.theta.into());
            m.insert(cols[2].clone(), r.point.phi.into());
            for k in 0..ds.dim {
                m.insert(cols[3 + k].clone(), json_opt(r.energies.as_ref().map(|e| e[k])));
            }
            m.insert("flags".into(), r.flags.to_string().into());
            m
        })
        .collect();
    let file = JsonFile {
        meta: meta.clone(),
        columns: cols,
        rows,
    };
    serde_json::to_writer_pretty(&mut out, &file)?;
    writeln!(out)?;
    Ok(())
}

/// Reads a spectrum CSV; the dimension is taken from the header.
pub fn read_spectrum_csv<R: BufRead>(input: R) -> Result<(FileMetadata, Vec<SpectrumRow>)> {
    let (meta, body) = split_meta(input)?;
    expect_schema(&meta, SPECTRUM_SCHEMA)?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let dim = header.len().checked_sub(4).ok_or_else(|| Error::Config("spectrum header too short".into()))?;
    check_columns(&header, &spectrum_columns(dim))?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let c = |k: usize| rec.get(k).unwrap_or("");
        let point = FieldPoint::new(
            required(parse_cell(c(0), "B0_mT")?, "B0_mT")?,
            required(parse_cell(c(1), "theta_rad")?, "theta_rad")?,
            required(parse_cell(c(2), "phi_rad")?, "phi_rad")?,
        );
        let energies: Vec<Option<f64>> = (0..dim)
            .map(|k| parse_cell(c(3 + k), &header[3 + k]))
            .collect::<Result<_>>()?;
        let energies = energies.into_iter().collect::<Option<Vec<f64>>>();
        rows.push(SpectrumRow {
            point,
            energies,
            ms: None,
            flags: parse_flags(c(3 + dim))?,
        });
    }
    Ok((meta, rows))
}
