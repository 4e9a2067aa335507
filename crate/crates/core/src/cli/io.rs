//! CSV ingestion and artifact writers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::Columns;
use crate::error::{Error, Result};
use crate::models::glmm::SubjectRows;
use crate::models::{GlmmData, GlmmFamily, SvmData};

const INTERCEPT: &str = "(Intercept)";

fn parse_error(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        column,
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Vec<String>)> {
    let file = File::open(path)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, 1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    Ok((reader, headers))
}

fn column_index(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_error(path, 1, 1, format!("missing column '{name}'")))
}

fn parse_number(path: &Path, record: &csv::StringRecord, col: usize) -> Result<f64> {
    let line = record.position().map_or(0, |p| p.line());
    let field = record.get(col).unwrap_or("");
    let value: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, col + 1, format!("'{field}' is not a number")))?;
    if !value.is_finite() {
        return Err(parse_error(path, line, col + 1, format!("'{field}' is not finite")));
    }
    Ok(value)
}

/// Reads a long-format GLMM file: one row per observation.
///
/// The design matrix is `[1, covariates…]` with the intercept named
/// `(Intercept)`; subjects appear in order of first occurrence.
pub fn load_glmm_csv(path: &Path, columns: &Columns, family: GlmmFamily) -> Result<GlmmData> {
    let (mut reader, headers) = open_csv(path)?;
    let subject_col = column_index(path, &headers, &columns.subject)?;
    let response_col = column_index(path, &headers, &columns.response)?;
    let covariates: Vec<String> = match &columns.covariates {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .filter(|h| **h != columns.subject && **h != columns.response)
            .cloned()
            .collect(),
    };
    let cov_idx: Vec<usize> = covariates
        .iter()
        .map(|c| column_index(path, &headers, c))
        .collect::<Result<_>>()?;

    let mut names = vec![INTERCEPT.to_string()];
    names.extend(covariates.iter().cloned());
    let design_index = |name: &str| -> Result<usize> {
        if name == INTERCEPT {
            return Ok(0);
        }
        covariates
            .iter()
            .position(|c| c == name)
            .map(|i| i + 1)
            .ok_or_else(|| Error::Config(format!("'{name}' is not a covariate")))
    };
    let mut random = vec![0];
    for name in &columns.random {
        let idx = design_index(name)?;
        if !random.contains(&idx) {
            random.push(idx);
        }
    }
    let subject_specific: Vec<usize> = columns
        .subject_specific
        .iter()
        .map(|n| design_index(n))
        .collect::<Result<_>>()?;

    let p = names.len();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, SubjectRows> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, 1, e.to_string())
        })?;
        let id = record.get(subject_col).unwrap_or("").to_string();
        if id.is_empty() {
            let line = record.position().map_or(0, |p| p.line());
            return Err(parse_error(path, line, subject_col + 1, "empty subject id"));
        }
        let y = parse_number(path, &record, response_col)?;
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            SubjectRows {
                id,
                y: Vec::new(),
                x: Vec::new(),
            }
        });
        entry.y.push(y);
        entry.x.reserve(p);
        entry.x.push(1.0);
        for &c in &cov_idx {
            entry.x.push(parse_number(path, &record, c)?);
        }
    }
    let subjects = order
        .iter()
        .map(|id| groups.remove(id).expect("grouped subject"))
        .collect();
    GlmmData::new(family, names, random, subject_specific, subjects)
}

/// Reads a single-column series for the SVM, mean-correcting raw rates when
/// `columns.mean_correct` is set.
pub fn load_svm_csv(path: &Path, columns: &Columns) -> Result<SvmData> {
    let (mut reader, headers) = open_csv(path)?;
    let col = match &columns.series {
        Some(name) => column_index(path, &headers, name)?,
        None if !headers.is_empty() => 0,
        None => return Err(parse_error(path, 1, 1, "no columns")),
    };
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, 1, e.to_string())
        })?;
        values.push(parse_number(path, &record, col)?);
    }
    if columns.mean_correct {
        SvmData::from_rates(&values)
    } else {
        SvmData::new(values)
    }
}

/// Writes `serde_json` output followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a two-column CSV of `(index, value)` with indices from 1.
pub fn write_series_csv(path: &Path, header: [&str; 2], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `parameter,mean,sd` rows.
pub fn write_summary_csv(path: &Path, rows: &[super::ParamSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["parameter", "mean", "sd"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.label.clone(), r.mean.to_string(), r.sd.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes posterior draws, one row per draw, columns labelled.
pub fn write_samples_csv(path: &Path, labels: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(labels).map_err(csv_error)?;
    for row in samples {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidData(format!("{other:?}")),
    }
}
