//! CSV and JSON formats.
//!
//! JSON outputs are objects carrying `"schema": 1` and the sha256 of the
//! effective configuration; they hold no wall-clock data, so reruns with
//! the same configuration and seed are byte-identical. Timings go to a
//! separate `timing.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use k2gof_core::model::{Point, SupportRect};
use k2gof_core::sim::NullDistribution;
use k2gof_core::GridField;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 60;

/// Reads an `x1,x2` CSV (header required). Rows are numbered from 1
/// after the header in error messages.
pub fn read_points(path: &Path, support: &SupportRect) -> Result<Vec<Point>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::input(path, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c1), Some(c2)) = (col("x1"), col("x2")) else {
        return Err(Error::input(path, "header must name columns x1 and x2"));
    };
    let mut points = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::input(path, format!("row {row}: {e}")))?;
        let get = |c: usize| -> Result<f64> {
            let s = record.get(c).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::input(path, format!("row {row}: '{s}' is not a finite number")))
        };
        let p = [get(c1)?, get(c2)?];
        if !support.contains(&p) {
            return Err(Error::input(path, format!("row {row}: point ({}, {}) lies outside the support", p[0], p[1])));
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::input(path, "no data rows (0 rows after the header)"));
    }
    Ok(points)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(path, format!("{other:?}")),
    }
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x1", "x2"]).map_err(csv_err(path))?;
    for p in points {
        w.serialize((p[0], p[1])).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Node coordinates and values, one row per node.
pub fn write_field(path: &Path, field: &GridField) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x1", "x2", "value"]).map_err(csv_err(path))?;
    for (node, v) in field.grid().nodes().zip(field.values()) {
        w.serialize((node[0], node[1], v)).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(path, e.to_string()))
}

/// sha256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// `{"schema": 1, "config_hash": ..., "config": ..., <payload fields>}`
pub fn envelope<C: Serialize>(config: &C, payload: Value) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("schema".into(), json!(SCHEMA_VERSION));
    obj.insert("config_hash".into(), json!(config_hash(config)));
    obj.insert("config".into(), serde_json::to_value(config).expect("serializable"));
    match payload {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    Value::Object(obj)
}

/// Stored form of a null distribution: `{meta, values}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullFile {
    pub schema: u32,
    pub config_hash: String,
    pub meta: NullFileMeta,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullFileMeta {
    pub stat_kind: k2gof_core::StatKind,
    pub replicates: usize,
    pub excluded: usize,
    pub n: usize,
    pub model: String,
    pub params_at_build: k2gof_core::ParamVector,
    pub seed: u64,
    pub method: k2gof_core::sim::NullMethod,
}

impl NullFile {
    pub fn new(dist: &NullDistribution, excluded: usize, config_hash: String) -> Self {
        NullFile {
            schema: SCHEMA_VERSION,
            config_hash,
            meta: NullFileMeta {
                stat_kind: dist.stat_kind,
                replicates: dist.replicates,
                excluded,
                n: dist.n,
                model: dist.model.clone(),
                params_at_build: dist.params_at_build.clone(),
                seed: dist.seed,
                method: dist.method,
            },
            values: dist.values.clone(),
        }
    }

    pub fn into_distribution(self) -> NullDistribution {
        let m = self.meta;
        NullDistribution::new(m.stat_kind, self.values, m.n, m.model, m.params_at_build, m.seed, m.method)
    }
}

pub fn write_null_values_csv(path: &Path, dist: &NullDistribution) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["value"]).map_err(csv_err(path))?;
    for v in &dist.values {
        w.serialize(v).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
    pub density: f64,
}

/// Equal-width bins over `[min, max]` of the values; the last bin is
/// closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len().max(1) as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_left: lo + k as f64 * width,
            bin_right: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count,
            density: count as f64 / (total * width),
        })
        .collect()
}

pub fn write_histogram(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for bin in histogram(values, HISTOGRAM_BINS) {
        w.serialize(bin).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Wall-clock record kept apart from the deterministic outputs.
pub fn write_timing(path: &Path, command: &str, seconds: f64, threads: usize) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let v = json!({"schema": SCHEMA_VERSION, "command": command, "wall_seconds": seconds, "threads": threads});
    writeln!(f, "{}", serde_json::to_string_pretty(&v).expect("serializable")).map_err(|e| Error::io(path, e))
}
