//! Tabular dataset format: a header row, feature columns `f0..f{d-1}` and an
//! optional integer label column. Ids follow row order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Instance, LabelRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    /// Class count; inferred as `max(label) + 1` (at least 2) when unset.
    pub num_classes: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "label".to_string(),
            num_classes: None,
        }
    }
}

pub fn read_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, opts)
}

pub fn read_csv_from<R: Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers.iter().position(|h| h.trim() == opts.label_column);
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| Some(i) != label_idx).collect();
    for (k, &col) in feature_cols.iter().enumerate() {
        let name = headers[col].trim();
        if name != format!("f{k}") {
            return Err(Error::CsvFormat {
                line: 1,
                message: format!("expected feature column `f{k}`, found `{name}`"),
            });
        }
    }
    if feature_cols.is_empty() {
        return Err(Error::CsvFormat {
            line: 1,
            message: "no feature columns".into(),
        });
    }

    let mut instances = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while rdr.read_record(&mut record)? {
        let line = row + 2;
        if record.len() != headers.len() {
            return Err(Error::CsvFormat {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let raw = record[col].trim();
            let v: f64 = raw.parse().map_err(|_| Error::CsvFormat {
                line,
                message: format!("column {} is not a number: `{raw}`", headers[col].trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvFormat {
                    line,
                    message: format!("non-finite value `{raw}` in column {}", headers[col].trim()),
                });
            }
            features.push(v);
        }
        let label = match label_idx {
            Some(i) if !record[i].trim().is_empty() => {
                let raw = record[i].trim();
                let class: usize = raw.parse().map_err(|_| Error::CsvFormat {
                    line,
                    message: format!("label `{raw}` is not a non-negative integer"),
                })?;
                if let Some(c) = opts.num_classes {
                    if class >= c {
                        return Err(Error::CsvFormat {
                            line,
                            message: format!("unknown label {class} (expected < {c})"),
                        });
                    }
                }
                Some(class)
            }
            _ => None,
        };
        instances.push(Instance::new(row as u64, features));
        labels.push(match label {
            Some(c) => LabelRecord::provided(c),
            None => LabelRecord::unlabeled(None),
        });
        row += 1;
    }
    let num_classes = opts.num_classes.unwrap_or_else(|| {
        labels
            .iter()
            .filter_map(LabelRecord::visible)
            .max()
            .map_or(2, |m| (m + 1).max(2))
    });
    Dataset::new(instances, labels, num_classes)
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv_to(dataset, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `f0..f{d-1}` plus a `label` column holding the visible label (or
/// the truth for unlabeled rows that have one). Floats use the shortest
/// representation that round-trips.
pub fn write_csv_to<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let d = dataset.dim().unwrap_or(0);
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(d + 1);
    for (inst, rec) in dataset.iter() {
        fields.clear();
        fields.extend(inst.features.iter().map(|v| v.to_string()));
        fields.push(
            rec.visible()
                .or(rec.truth)
                .map(|c| c.to_string())
                .unwrap_or_default(),
        );
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
