//! Context sources: the synthetic generator and CSV datasets.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledContext;
use crate::error::{Result, UssError};

/// Label rule of the synthetic problem: 1 iff `x1 + x1·x2 + x3² ≥ 0`.
pub fn synthetic_label(x: &[f64]) -> bool {
    x[0] + x[0] * x[1] + x[2] * x[2] >= 0.0
}

/// `n` contexts uniform on `(-1, 1)³`, labelled by [`synthetic_label`].
pub fn generate_synthetic(n: usize, seed: u64) -> Result<Vec<LabeledContext>> {
    if n == 0 {
        return Err(UssError::Precondition(
            "synthetic generator needs n >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = synthetic_label(&x);
            LabeledContext { x, y }
        })
        .collect())
}

/// Which CSV columns are features and which holds the 0/1 label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<String>,
    pub label: String,
}

/// Affine map `v ↦ 2(v − min)/(max − min) − 1` applied to one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnScaling {
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            (2.0 * (v - self.min) / (self.max - self.min) - 1.0).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub contexts: Vec<LabeledContext>,
    pub feature_names: Vec<String>,
    pub scaling: Vec<ColumnScaling>,
}

/// Reads a header-bearing CSV, keeps the schema's columns, and rescales each
/// feature column to `[-1, 1]` by its min and max. Rows keep file order.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    if schema.features.is_empty() {
        return Err(UssError::Config(
            "dataset schema lists no feature columns".into(),
        ));
    }
    let file = std::fs::File::open(path).map_err(|e| UssError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| UssError::Parse {
                row: 0,
                column: name.to_string(),
                message: "column missing from header".into(),
            })
    };
    let feature_idx: Vec<usize> = schema
        .features
        .iter()
        .map(|f| find(f))
        .collect::<Result<_>>()?;
    let label_idx = find(&schema.label)?;

    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let text = record.get(idx).map(str::trim).unwrap_or("");
            if text.is_empty() {
                return Err(UssError::Parse {
                    row,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| UssError::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("'{text}' is not a finite number"),
                })
        };
        let x = feature_idx
            .iter()
            .zip(&schema.features)
            .map(|(&i, name)| cell(i, name))
            .collect::<Result<Vec<f64>>>()?;
        let y = cell(label_idx, &schema.label)?;
        let y = if y == 1.0 {
            true
        } else if y == 0.0 {
            false
        } else {
            return Err(UssError::Parse {
                row,
                column: schema.label.clone(),
                message: format!("label must be 0 or 1, got {y}"),
            });
        };
        raw.push(x);
        labels.push(y);
    }
    if raw.is_empty() {
        return Err(UssError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{} has no data rows", path.display()),
        });
    }

    let scaling: Vec<ColumnScaling> = schema
        .features
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let (min, max) = raw
                .iter()
                .map(|x| x[c])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            ColumnScaling {
                name: name.clone(),
                min,
                max,
            }
        })
        .collect();
    let contexts = raw
        .into_iter()
        .zip(labels)
        .map(|(x, y)| LabeledContext {
            x: x.iter().zip(&scaling).map(|(v, s)| s.apply(*v)).collect(),
            y,
        })
        .collect();
    Ok(Dataset {
        contexts,
        feature_names: schema.features.clone(),
        scaling,
    })
}

/// Writes contexts as `x1,…,xd,label`.
pub fn write_contexts_csv(path: &Path, contexts: &[LabeledContext]) -> Result<()> {
    let d = contexts.first().map_or(0, |c| c.x.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => UssError::io(path, io),
        other => UssError::Data(format!("{other:?}")),
    })?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for c in contexts {
        let mut rec: Vec<String> = c.x.iter().map(|v| v.to_string()).collect();
        rec.push(if c.y { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| UssError::io(path, e))
}

/// Reads a file produced by [`write_contexts_csv`] without rescaling.
pub fn read_contexts_csv(path: &Path) -> Result<Vec<LabeledContext>> {
    let file = std::fs::File::open(path).map_err(|e| UssError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    let mut out = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut vals = Vec::with_capacity(d + 1);
        for (c, text) in record.iter().enumerate() {
            let v: f64 = text.trim().parse().map_err(|_| UssError::Parse {
                row: r + 1,
                column: headers.get(c).unwrap_or("").to_string(),
                message: format!("'{text}' is not a number"),
            })?;
            vals.push(v);
        }
        let y = vals.pop().ok_or_else(|| UssError::Parse {
            row: r + 1,
            column: "label".into(),
            message: "empty row".into(),
        })?;
        out.push(LabeledContext {
            x: vals,
            y: y == 1.0,
        });
    }
    Ok(out)
}
