//! Dataset CSV files and model / trace JSON files.
//!
//! A dataset file starts with `#` comment lines holding the provenance
//! (`# key = value`), followed by a header `t,x1..xm,u1..ur[,true_x1..true_xm]`
//! and one row per sample. Values are written with 17 significant digits so
//! that loading a saved file reproduces every bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use argosc_core::pipeline::SelectionTrace;
use argosc_core::{Provenance, SparseModel, TimeSeriesDataset};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::Failure;

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column names of a dataset file.
pub fn dataset_header(m: usize, r: usize, with_truth: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=m).map(|j| format!("x{j}")));
    h.extend((1..=r).map(|j| format!("u{j}")));
    if with_truth {
        h.extend((1..=m).map(|j| format!("true_x{j}")));
    }
    h
}

fn meta_lines(meta: &Provenance) -> Vec<String> {
    let mut lines = vec![format!("system = {}", meta.system)];
    for (k, v) in &meta.parameters {
        lines.push(format!("param.{k} = {v}"));
    }
    if let Some(snr) = meta.snr_db {
        lines.push(format!("snr_db = {snr}"));
    }
    if let Some(seed) = meta.seed {
        lines.push(format!("seed = {seed}"));
    }
    lines
}

fn parse_meta(lines: &[&str]) -> Result<Provenance, Failure> {
    let mut meta = Provenance::default();
    for line in lines {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Validation(format!("malformed metadata line `# {line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        let number = || value.parse::<f64>().map_err(|_| Failure::Validation(format!("bad number in `# {line}`")));
        match key {
            "system" => meta.system = value.to_string(),
            "snr_db" => meta.snr_db = Some(number()?),
            "seed" => {
                meta.seed = Some(value.parse().map_err(|_| Failure::Validation(format!("bad seed in `# {line}`")))?)
            }
            _ => match key.strip_prefix("param.") {
                Some(name) => meta.parameters.push((name.to_string(), number()?)),
                None => return Err(Failure::Validation(format!("unknown metadata key `{key}`"))),
            },
        }
    }
    Ok(meta)
}

/// Writes `ds` as CSV. The file is written in full or not at all.
pub fn save_dataset(ds: &TimeSeriesDataset, path: &Path) -> Result<(), Failure> {
    let (m, r) = (ds.n_states(), ds.n_inputs());
    let all_finite = ds.states().iter().chain(ds.inputs().iter()).chain(ds.truth().into_iter().flat_map(|t| t.iter()));
    if ds.t().iter().copied().chain(all_finite.copied()).any(|v| !v.is_finite()) {
        return Err(Failure::Validation("refusing to write a dataset with non-finite values".into()));
    }
    let mut buf = Vec::new();
    for line in meta_lines(ds.meta()) {
        writeln!(buf, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(dataset_header(m, r, ds.truth().is_some()))?;
    let mut row = Vec::with_capacity(1 + 2 * m + r);
    for i in 0..ds.len() {
        row.clear();
        row.push(fmt_value(ds.t()[i]));
        row.extend(ds.states().row(i).iter().map(|&v| fmt_value(v)));
        row.extend(ds.inputs().row(i).iter().map(|&v| fmt_value(v)));
        if let Some(truth) = ds.truth() {
            row.extend(truth.row(i).iter().map(|&v| fmt_value(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);
    write_atomic(path, &buf)
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.partial"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Position of every column kind in a dataset header.
fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize, bool), Failure> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"t") {
        return Err(Failure::Validation("first column must be `t`".into()));
    }
    let count = |prefix: &str, from: usize| {
        names[from..]
            .iter()
            .enumerate()
            .take_while(|(k, n)| **n == format!("{prefix}{}", k + 1))
            .count()
    };
    let m = count("x", 1);
    let r = count("u", 1 + m);
    let truth = count("true_x", 1 + m + r);
    if m == 0 {
        return Err(Failure::Validation("header declares no state columns".into()));
    }
    if truth != 0 && truth != m {
        return Err(Failure::Validation(format!("{truth} truth columns for {m} states")));
    }
    if names.len() != 1 + m + r + truth {
        return Err(Failure::Validation(format!("unexpected column `{}`", names[1 + m + r + truth])));
    }
    Ok((m, r, truth > 0))
}

pub fn load_dataset(path: &Path) -> Result<TimeSeriesDataset, Failure> {
    let text = fs::read_to_string(path)?;
    let meta_lines: Vec<&str> =
        text.lines().take_while(|l| l.starts_with('#')).map(|l| l.trim_start_matches('#').trim()).collect();
    let meta = parse_meta(&meta_lines)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let (m, r, has_truth) = parse_header(reader.headers()?)?;
    let width = 1 + m + r + if has_truth { m } else { 0 };
    let mut t = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Failure::Validation(format!("row {} has {} fields, expected {width}", i + 1, record.len())));
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Failure::Validation(format!("row {}: cannot parse `{field}` as a number", i + 1)))?;
            if k == 0 {
                t.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = t.len();
    let cols = width - 1;
    let block = |from: usize, count: usize| DMatrix::from_fn(n, count, |i, j| values[i * cols + from + j]);
    let truth = has_truth.then(|| block(m + r, m));
    Ok(TimeSeriesDataset::new(t, block(0, m), block(m, r), truth, meta)?)
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: String,
    pub names: Vec<String>,
    pub equations: Vec<String>,
    pub model: SparseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl ModelFile {
    pub fn new(method: &str, model: &SparseModel, threshold: Option<f64>) -> Self {
        let names = model.default_names();
        let equations = model.to_string().lines().map(String::from).collect();
        Self { method: method.to_string(), names, equations, model: model.clone(), threshold }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<(), Failure> {
    write_atomic(path, &to_json(file)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile, Failure> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_trace(trace: &SelectionTrace, path: &Path) -> Result<(), Failure> {
    write_atomic(path, &to_json(trace)?)
}
