//! Dataset ingestion: IDX image files, UCR-style CSV series, and the
//! normalization records that make ingestion invertible.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// How raw values were mapped into model range, kept so the mapping can be
/// inverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Values already in range; nothing was done.
    Identity,
    /// `x = raw * scale + offset`, the same affine map for every feature.
    Affine { scale: f64, offset: f64 },
    /// Per-series standardization: `x = (raw - mean[i]) / std[i]` for row `i`,
    /// followed by a clamp to `[-1, 1]`. Zero-variance rows map to zeros
    /// (their recorded std is 1).
    PerSeriesZ { mean: Vec<f64>, std: Vec<f64> },
}

impl Normalization {
    /// Invert the affine part of the normalization for one row. Values that
    /// were clamped cannot be recovered.
    pub fn denormalize(&self, row_index: usize, value: f64) -> f64 {
        match self {
            Normalization::Identity => value,
            Normalization::Affine { scale, offset } => (value - offset) / scale,
            Normalization::PerSeriesZ { mean, std } => value * std[row_index] + mean[row_index],
        }
    }

    pub fn normalize(&self, row_index: usize, raw: f64) -> f64 {
        match self {
            Normalization::Identity => raw,
            Normalization::Affine { scale, offset } => raw * scale + offset,
            Normalization::PerSeriesZ { mean, std } => (raw - mean[row_index]) / std[row_index],
        }
    }
}

/// Labeled samples plus the record of how they were normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Dataset::with_normalization(samples, labels, num_classes, Normalization::Identity)
    }

    pub fn with_normalization(
        samples: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::shape("Dataset", samples.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset { samples, labels, num_classes, normalization })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }
}

/// Decoded content of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `[n, d]` samples scaled affinely from u8 to `[-1, 1]`.
    Images { samples: Tensor, normalization: Normalization },
    Labels(Vec<usize>),
}

const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Parse an IDX byte buffer (big-endian header, u8 payload). Image payloads
/// are flattened row-major and scaled so pixel 0 maps to -1 and 255 to +1.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 4 {
        return Err(Error::Parse {
            offset: 0,
            message: format!("file too short for an IDX magic: {} bytes", bytes.len()),
        });
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let ndims = match magic {
        IDX_LABEL_MAGIC => 1,
        IDX_IMAGE_MAGIC => 3,
        other => {
            return Err(Error::Parse {
                offset: 0,
                message: format!(
                    "bad IDX magic {other:#010x}, expected {IDX_LABEL_MAGIC:#010x} (labels) or {IDX_IMAGE_MAGIC:#010x} (images)"
                ),
            })
        }
    };
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated IDX header: need {header_len} bytes, have {}", bytes.len()),
        });
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        })
        .collect();
    let payload_len: usize = dims.iter().product();
    let expected = header_len + payload_len;
    if bytes.len() != expected {
        return Err(Error::Parse {
            offset: bytes.len().min(expected),
            message: format!(
                "payload length mismatch: expected {payload_len} bytes after header ({expected} total), file has {} ({} missing)",
                bytes.len(),
                expected.saturating_sub(bytes.len())
            ),
        });
    }
    let payload = &bytes[header_len..];
    match magic {
        IDX_LABEL_MAGIC => Ok(IdxData::Labels(payload.iter().map(|&b| b as usize).collect())),
        _ => {
            let n = dims[0];
            let d: usize = dims[1] * dims[2];
            let scale = 2.0 / 255.0;
            let offset = -1.0;
            let data: Vec<f64> = payload.iter().map(|&b| b as f64 * scale + offset).collect();
            Ok(IdxData::Images {
                samples: Tensor::matrix(n, d, data)?,
                normalization: Normalization::Affine { scale, offset },
            })
        }
    }
}

/// Load an image/label IDX pair into a dataset.
pub fn load_idx_dataset(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (samples, normalization) = match parse_idx(images)? {
        IdxData::Images { samples, normalization } => (samples, normalization),
        IdxData::Labels(_) => {
            return Err(Error::Data("expected an image IDX file, found labels".into()))
        }
    };
    let labels = match parse_idx(labels)? {
        IdxData::Labels(l) => l,
        IdxData::Images { .. } => {
            return Err(Error::Data("expected a label IDX file, found images".into()))
        }
    };
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::with_normalization(samples, labels, num_classes, normalization)
}

/// Parse UCR-style CSV text: one series per line, `label,v1,...,vd`.
///
/// Each series is z-normalized on its own mean and standard deviation, then
/// clamped to `[-1, 1]`; constant series become all zeros. Labels are
/// remapped to contiguous `0..K` in ascending numeric order.
pub fn parse_ucr_csv(text: &str) -> Result<Dataset> {
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("");
        let label: i64 = label_field.trim().parse().map_err(|_| {
            Error::Data(format!(
                "line {}: non-numeric label field {label_field:?}",
                lineno + 1
            ))
        })?;
        let mut values = Vec::new();
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::Data(format!("line {}: non-numeric field {f:?}", lineno + 1))
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Data(format!("line {}: no series values", lineno + 1)));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Data(format!(
                    "line {}: ragged row, expected {w} values, got {}",
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        raw_labels.push(label);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows in CSV input".into()));
    }

    let d = width.unwrap();
    let mut means = Vec::with_capacity(rows.len());
    let mut stds = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * d);
    for row in &rows {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let std = var.sqrt();
        let std = if std > 0.0 { std } else { 1.0 };
        means.push(mean);
        stds.push(std);
        for v in row {
            data.push(((v - mean) / std).clamp(-1.0, 1.0));
        }
    }

    let mut distinct: Vec<i64> = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap())
        .collect();

    Dataset::with_normalization(
        Tensor::matrix(rows.len(), d, data)?,
        labels,
        distinct.len(),
        Normalization::PerSeriesZ { mean: means, std: stds },
    )
}
