//! Reader for the LIBSVM sparse text format (`label idx:val idx:val ...`).

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense sample matrix (one row per sample) with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Param(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|b| **b > 0.0).count()
    }

    /// `max_j ‖a_j‖²`.
    pub fn max_row_norm_sq(&self) -> f64 {
        self.features
            .row_iter()
            .map(|r| r.norm_squared())
            .fold(0.0, f64::max)
    }
}

/// Which raw labels count as positive and which as negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl Default for LabelMap {
    fn default() -> Self {
        Self { positive: vec![1.0], negative: vec![-1.0, 0.0, 2.0] }
    }
}

impl LabelMap {
    fn map(&self, raw: f64) -> Option<f64> {
        if self.positive.contains(&raw) {
            Some(1.0)
        } else if self.negative.contains(&raw) {
            Some(-1.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LibsvmOptions {
    /// Fixed feature dimension; indices beyond it are an error. When absent
    /// the dimension is the largest index seen.
    pub dim: Option<usize>,
    pub labels: LabelMap,
}

pub fn parse_libsvm<R: Read>(reader: R, options: &LibsvmOptions) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let raw: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad label `{label_tok}`"),
        })?;
        let label = options.labels.map(raw).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("label {raw} is not in the label map"),
        })?;

        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected idx:val, got `{tok}`"),
            })?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse { line: lineno, message: "indices are 1-based".into() });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad value `{val}`"),
            })?;
            if let Some(dim) = options.dim {
                if idx > dim {
                    return Err(Error::Dimension { index: idx, dim, line: lineno });
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }

    let n = options.dim.unwrap_or(max_index);
    let mut features = DMatrix::zeros(rows.len(), n);
    for (j, row) in rows.iter().enumerate() {
        for &(k, v) in row {
            features[(j, k)] = v;
        }
    }
    Dataset::new(features, labels)
}

pub fn load_libsvm(path: impl AsRef<Path>, options: &LibsvmOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_libsvm(file, options)
}
