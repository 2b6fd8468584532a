//! CSV interchange.
//!
//! Three table shapes, all UTF-8 with a header row and shortest-round-trip
//! float formatting:
//!
//! - dataset:     `id,group_id,label,l0..l{Dl-1},g0..g{Dg-1}`
//! - embeddings:  `id,group_id,label,e0..e{E-1}`
//! - predictions: `id,true_label,pred_label,score_0..score_{C-1}`

use std::collections::HashSet;
use std::path::Path;

use crate::data::dataset::{Dataset, Embedding, EmbeddingRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
            }
            _ => parse_err(path, 1, e.to_string()),
        })
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn map_csv_error(path: &Path, e: csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, .. } => {
            pos.as_ref().map(|p| p.line() as usize).unwrap_or(0)
        }
        _ => e.position().map(|p| p.line() as usize).unwrap_or(0),
    };
    parse_err(path, line, e.to_string())
}

/// Validates a run of columns named `{prefix}0..{prefix}{n-1}` starting at
/// `start`, returning `n`.
fn count_indexed_columns(
    path: &Path,
    headers: &csv::StringRecord,
    start: usize,
    prefix: &str,
) -> Result<usize> {
    let mut n = 0;
    for field in headers.iter().skip(start) {
        let expected = format!("{prefix}{n}");
        if field == expected {
            n += 1;
        } else {
            break;
        }
    }
    if n == 0 {
        return Err(parse_err(
            path,
            1,
            format!("expected column {prefix}0 at position {start}"),
        ));
    }
    Ok(n)
}

fn parse_feature(path: &Path, line: usize, column: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("non-numeric value {raw:?} in column {column}")))?;
    if !value.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite value {raw:?} in column {column}"),
        ));
    }
    Ok(value)
}

/// Resolves a label string to a class index. Without a manifest, classes are
/// numbered by first appearance; with one, unknown labels are an error.
struct LabelMapper {
    names: Vec<String>,
    fixed: bool,
}

impl LabelMapper {
    fn new(manifest: Option<&[String]>) -> Self {
        match manifest {
            Some(names) => LabelMapper {
                names: names.to_vec(),
                fixed: true,
            },
            None => LabelMapper {
                names: Vec::new(),
                fixed: false,
            },
        }
    }

    fn resolve(&mut self, path: &Path, line: usize, label: &str) -> Result<usize> {
        if let Some(idx) = self.names.iter().position(|n| n == label) {
            return Ok(idx);
        }
        if self.fixed {
            return Err(parse_err(
                path,
                line,
                format!("label {label:?} is not in the class manifest"),
            ));
        }
        self.names.push(label.to_string());
        Ok(self.names.len() - 1)
    }
}

/// Reads a dataset CSV, inferring both context dimensions from the header.
pub fn read_dataset_csv(path: &Path, manifest: Option<&[String]>) -> Result<Dataset> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| map_csv_error(path, e))?
        .clone();
    for (idx, expected) in ["id", "group_id", "label"].iter().enumerate() {
        if headers.get(idx) != Some(expected) {
            return Err(parse_err(
                path,
                1,
                format!("expected header column {idx} to be {expected:?}"),
            ));
        }
    }
    let d_local = count_indexed_columns(path, &headers, 3, "l")?;
    let d_global = count_indexed_columns(path, &headers, 3 + d_local, "g")?;
    if headers.len() != 3 + d_local + d_global {
        return Err(parse_err(
            path,
            1,
            format!(
                "unexpected trailing column {:?}",
                headers.get(3 + d_local + d_global).unwrap_or("")
            ),
        ));
    }

    let mut labels = LabelMapper::new(manifest);
    let mut ids = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| map_csv_error(path, e))?;
        let line = record_line(&row);
        let id = row[0].to_string();
        if !ids.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate id {id:?}")));
        }
        let class = labels.resolve(path, line, &row[2])?;
        let mut local = Vec::with_capacity(d_local);
        for i in 0..d_local {
            local.push(parse_feature(path, line, &format!("l{i}"), &row[3 + i])?);
        }
        let mut global = Vec::with_capacity(d_global);
        for i in 0..d_global {
            global.push(parse_feature(
                path,
                line,
                &format!("g{i}"),
                &row[3 + d_local + i],
            )?);
        }
        records.push(EmbeddingRecord {
            id,
            group_id: row[1].to_string(),
            class,
            local: Tensor::vector(local),
            global: Tensor::vector(global),
        });
    }
    Ok(Dataset {
        records,
        class_names: labels.names,
        d_local,
        d_global,
    })
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    let mut header = vec!["id".to_string(), "group_id".into(), "label".into()];
    header.extend((0..ds.d_local).map(|i| format!("l{i}")));
    header.extend((0..ds.d_global).map(|i| format!("g{i}")));
    writer
        .write_record(&header)
        .map_err(|e| map_csv_error(path, e))?;
    for rec in &ds.records {
        let mut row = vec![
            rec.id.clone(),
            rec.group_id.clone(),
            ds.class_names[rec.class].clone(),
        ];
        row.extend(rec.local.data().iter().map(|v| v.to_string()));
        row.extend(rec.global.data().iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(|e| map_csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an embeddings CSV (`e0..e{E-1}` feature columns).
pub fn read_embeddings_csv(path: &Path, manifest: Option<&[String]>) -> Result<EmbeddingSet> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| map_csv_error(path, e))?
        .clone();
    for (idx, expected) in ["id", "group_id", "label"].iter().enumerate() {
        if headers.get(idx) != Some(expected) {
            return Err(parse_err(
                path,
                1,
                format!("expected header column {idx} to be {expected:?}"),
            ));
        }
    }
    let dim = count_indexed_columns(path, &headers, 3, "e")?;
    if headers.len() != 3 + dim {
        return Err(parse_err(path, 1, "unexpected trailing column".to_string()));
    }

    let mut labels = LabelMapper::new(manifest);
    let mut ids = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| map_csv_error(path, e))?;
        let line = record_line(&row);
        let id = row[0].to_string();
        if !ids.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate id {id:?}")));
        }
        let class = labels.resolve(path, line, &row[2])?;
        let mut vector = Vec::with_capacity(dim);
        for i in 0..dim {
            vector.push(parse_feature(path, line, &format!("e{i}"), &row[3 + i])?);
        }
        records.push(Embedding {
            id,
            group_id: row[1].to_string(),
            class,
            vector: Tensor::vector(vector),
        });
    }
    Ok(EmbeddingSet {
        records,
        class_names: labels.names,
        dim,
    })
}

pub fn write_embeddings_csv(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    let mut header = vec!["id".to_string(), "group_id".into(), "label".into()];
    header.extend((0..set.dim).map(|i| format!("e{i}")));
    writer
        .write_record(&header)
        .map_err(|e| map_csv_error(path, e))?;
    for rec in &set.records {
        let mut row = vec![
            rec.id.clone(),
            rec.group_id.clone(),
            set.class_names[rec.class].clone(),
        ];
        row.extend(rec.vector.data().iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(|e| map_csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub true_class: usize,
    pub pred_class: usize,
    pub scores: Vec<f64>,
}

pub fn write_predictions_csv(
    rows: &[PredictionRow],
    class_names: &[String],
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
    })?;
    let mut header = vec!["id".to_string(), "true_label".into(), "pred_label".into()];
    header.extend((0..class_names.len()).map(|i| format!("score_{i}")));
    writer
        .write_record(&header)
        .map_err(|e| map_csv_error(path, e))?;
    for row in rows {
        let mut fields = vec![
            row.id.clone(),
            class_names[row.true_class].clone(),
            class_names[row.pred_class].clone(),
        ];
        fields.extend(row.scores.iter().map(|v| v.to_string()));
        writer
            .write_record(&fields)
            .map_err(|e| map_csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path, class_names: &[String]) -> Result<Vec<PredictionRow>> {
    let mut reader = open_reader(path)?;
    let n_scores = class_names.len();
    let mut rows = Vec::new();
    let resolve = |path: &Path, line: usize, label: &str| -> Result<usize> {
        class_names
            .iter()
            .position(|n| n == label)
            .ok_or_else(|| parse_err(path, line, format!("unknown label {label:?}")))
    };
    for row in reader.records() {
        let row = row.map_err(|e| map_csv_error(path, e))?;
        let line = record_line(&row);
        if row.len() != 3 + n_scores {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, got {}", 3 + n_scores, row.len()),
            ));
        }
        let mut scores = Vec::with_capacity(n_scores);
        for i in 0..n_scores {
            scores.push(parse_feature(path, line, &format!("score_{i}"), &row[3 + i])?);
        }
        rows.push(PredictionRow {
            id: row[0].to_string(),
            true_class: resolve(path, line, &row[1])?,
            pred_class: resolve(path, line, &row[2])?,
            scores,
        });
    }
    Ok(rows)
}

/// Class manifest: one class name per line, index order.
pub fn write_class_manifest(names: &[String], path: &Path) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_class_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}
