//! CSV and JSON serialization of curves, scans and OTOC series.
//!
//! Every file starts with (CSV) or contains (JSON) the schema version and the
//! SHA-256 of the run manifest that produced it.

use crate::error::{Error, Result};
use crate::protocols::{FidelityCurve, OtocCurve, RecoveryScan};
use crate::stats::MeanStderr;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

pub const CURVE_HEADER: &str = "t,mean,stderr";
pub const SCAN_HEADER: &str = "t1,t2,mean,stderr";
pub const OTOC_HEADER: &str = "t,re,im,re_err,im_err";

/// Description of a run. Only `schema_version`, `artifact_version`,
/// `protocol`, `seed` and `config` enter the hash; wall time does not, so
/// repeated runs produce identical data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub protocol: String,
    pub seed: u64,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Manifest {
    pub fn new(protocol: impl Into<String>, seed: u64, config: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            protocol: protocol.into(),
            seed,
            config,
            wall_time_s: None,
        }
    }

    pub fn hash(&self) -> String {
        let hashed = serde_json::json!({
            "schema_version": self.schema_version,
            "artifact_version": self.artifact_version,
            "protocol": self.protocol,
            "seed": self.seed,
            "config": self.config,
        });
        hex::encode(Sha256::digest(hashed.to_string().as_bytes()))
    }
}

/// Schema version and manifest hash read back from a file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub schema_version: Option<u32>,
    pub manifest: Option<String>,
}

fn preamble(hash: &str, header: &str) -> String {
    format!("# schema_version={SCHEMA_VERSION} manifest={hash}\n{header}\n")
}

pub fn curve_to_csv(curve: &FidelityCurve, hash: &str) -> String {
    let mut out = preamble(hash, CURVE_HEADER);
    for i in 0..curve.len() {
        let _ = writeln!(out, "{},{},{}", curve.times[i], curve.mean[i], curve.stderr[i]);
    }
    out
}

pub fn scan_to_csv(scan: &RecoveryScan, hash: &str) -> String {
    let mut out = preamble(hash, SCAN_HEADER);
    for (i, t1) in scan.t1_values.iter().enumerate() {
        for (j, t2) in scan.t2_values.iter().enumerate() {
            let _ = writeln!(out, "{t1},{t2},{},{}", scan.fidelity[i][j], scan.stderr[i][j]);
        }
    }
    out
}

pub fn otoc_to_csv(curve: &OtocCurve, hash: &str) -> String {
    let mut out = preamble(hash, OTOC_HEADER);
    for (i, t) in curve.times.iter().enumerate() {
        let (re, im) = (curve.re[i], curve.im[i]);
        let _ = writeln!(out, "{t},{},{},{},{}", re.mean, im.mean, re.stderr, im.stderr);
    }
    out
}

/// JSON document `{schema_version, manifest, data}`.
pub fn to_json<T: Serialize>(data: &T, hash: &str) -> Result<String> {
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "manifest": hash,
        "data": data,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_provenance(line: &str, line_no: usize) -> Result<Provenance> {
    let mut prov = Provenance::default();
    for field in line.trim_start_matches('#').split_whitespace() {
        let Some((key, value)) = field.split_once('=') else {
            continue;
        };
        match key {
            "schema_version" => {
                let v = value
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad schema_version {value:?}")))?;
                prov.schema_version = Some(v);
            }
            "manifest" => prov.manifest = Some(value.to_string()),
            _ => {}
        }
    }
    Ok(prov)
}

fn check_version(prov: &Provenance) -> Result<()> {
    match prov.schema_version {
        Some(found) if found != SCHEMA_VERSION => Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found,
        }),
        _ => Ok(()),
    }
}

/// Splits a CSV document into provenance and numbered data rows, checking the
/// header. Blank lines are skipped; line numbers are 1-based.
fn split_csv<'a>(text: &'a str, header: &str) -> Result<(Provenance, Vec<(usize, Vec<&'a str>)>)> {
    let mut prov = Provenance::default();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if !seen_header {
                prov = parse_provenance(line, line_no)?;
                check_version(&prov)?;
            }
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.join(",") != header {
                return Err(parse_err(line_no, format!("expected header {header:?}, found {line:?}")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = header.split(',').count();
        if fields.len() != expected {
            return Err(parse_err(
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        rows.push((line_no, fields));
    }
    if !seen_header {
        return Err(parse_err(text.lines().count().max(1), format!("missing header {header:?}")));
    }
    Ok((prov, rows))
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(line, format!("invalid {name} {s:?}")))
}

pub fn curve_from_csv(text: &str) -> Result<(Provenance, FidelityCurve)> {
    let (prov, rows) = split_csv(text, CURVE_HEADER)?;
    let (mut times, mut mean, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
    for (line, f) in rows {
        let t: usize = field(line, "t", f[0])?;
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(parse_err(line, "times must be strictly increasing"));
        }
        let m: f64 = field(line, "mean", f[1])?;
        let s: f64 = field(line, "stderr", f[2])?;
        if !m.is_finite() || !(s >= 0.0) || !s.is_finite() {
            return Err(parse_err(line, "mean must be finite and stderr finite and nonnegative"));
        }
        times.push(t);
        mean.push(m);
        stderr.push(s);
    }
    Ok((prov, FidelityCurve::new(times, mean, stderr)?))
}

pub fn scan_from_csv(text: &str) -> Result<(Provenance, RecoveryScan)> {
    let (prov, rows) = split_csv(text, SCAN_HEADER)?;
    let mut t1_values: Vec<usize> = Vec::new();
    let mut t2_values: Vec<usize> = Vec::new();
    let mut entries = Vec::with_capacity(rows.len());
    for (line, f) in &rows {
        let t1: usize = field(*line, "t1", f[0])?;
        let t2: usize = field(*line, "t2", f[1])?;
        let m: f64 = field(*line, "mean", f[2])?;
        let s: f64 = field(*line, "stderr", f[3])?;
        if !t1_values.contains(&t1) {
            t1_values.push(t1);
        }
        if !t2_values.contains(&t2) {
            t2_values.push(t2);
        }
        entries.push((*line, t1, t2, m, s));
    }
    t1_values.sort_unstable();
    t2_values.sort_unstable();
    let mut fidelity = vec![vec![f64::NAN; t2_values.len()]; t1_values.len()];
    let mut stderr = fidelity.clone();
    for (line, t1, t2, m, s) in entries {
        let i = t1_values.binary_search(&t1).expect("collected above");
        let j = t2_values.binary_search(&t2).expect("collected above");
        if !fidelity[i][j].is_nan() {
            return Err(parse_err(line, format!("duplicate entry ({t1}, {t2})")));
        }
        fidelity[i][j] = m;
        stderr[i][j] = s;
    }
    if fidelity.iter().flatten().any(|v| v.is_nan()) {
        return Err(parse_err(rows.last().map_or(1, |r| r.0), "scan grid is incomplete"));
    }
    Ok((
        prov,
        RecoveryScan {
            t1_values,
            t2_values,
            fidelity,
            stderr,
        },
    ))
}

pub fn otoc_from_csv(text: &str) -> Result<(Provenance, OtocCurve)> {
    let (prov, rows) = split_csv(text, OTOC_HEADER)?;
    let mut curve = OtocCurve {
        times: Vec::new(),
        re: Vec::new(),
        im: Vec::new(),
    };
    for (line, f) in rows {
        curve.times.push(field(line, "t", f[0])?);
        curve.re.push(MeanStderr {
            mean: field(line, "re", f[1])?,
            stderr: field(line, "re_err", f[3])?,
        });
        curve.im.push(MeanStderr {
            mean: field(line, "im", f[2])?,
            stderr: field(line, "im_err", f[4])?,
        });
    }
    Ok((prov, curve))
}

/// Reads a curve from a JSON document written by [`to_json`], or from a bare
/// curve object.
pub fn curve_from_json(text: &str) -> Result<(Provenance, FidelityCurve)> {
    let doc: Value = serde_json::from_str(text)?;
    let prov = Provenance {
        schema_version: doc.get("schema_version").and_then(Value::as_u64).map(|v| v as u32),
        manifest: doc.get("manifest").and_then(Value::as_str).map(str::to_string),
    };
    check_version(&prov)?;
    let data = doc.get("data").cloned().unwrap_or(doc);
    let curve: FidelityCurve = serde_json::from_value(data)?;
    let curve = FidelityCurve {
        meta: curve.meta,
        ..FidelityCurve::new(curve.times, curve.mean, curve.stderr)?
    };
    Ok((prov, curve))
}
