//! Sparse labelled samples in the plain-text `label idx:val idx:val …` format.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether feature indices in the text format start at 0 or at 1 (LIBSVM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexBase {
    #[default]
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    /// `-1.0` or `+1.0`.
    pub label: f64,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&j, v)| v * w[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    pub rows: Vec<SparseRow>,
    pub n_features: usize,
}

impl SparseDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.indices.len()).sum()
    }

    pub fn parse<R: BufRead>(reader: R, base: IndexBase) -> Result<Self> {
        let mut rows = Vec::new();
        let mut n_features = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let mut fields = line.split_whitespace();
            let label_s = fields.next().unwrap_or_default();
            let label: f64 = label_s
                .parse()
                .map_err(|_| err(format!("bad label {label_s:?}")))?;
            if label != 1.0 && label != -1.0 {
                return Err(err(format!("label must be -1 or +1, got {label_s}")));
            }
            let mut indices = Vec::new();
            let mut values = Vec::new();
            for tok in fields {
                let (i, v) = tok
                    .split_once(':')
                    .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
                let mut idx: usize = i.parse().map_err(|_| err(format!("bad index {i:?}")))?;
                if base == IndexBase::One {
                    idx = idx
                        .checked_sub(1)
                        .ok_or_else(|| err("index 0 in 1-based input".into()))?;
                }
                let val: f64 = v.parse().map_err(|_| err(format!("bad value {v:?}")))?;
                if !val.is_finite() {
                    return Err(err(format!("non-finite value {v}")));
                }
                if indices.last().is_some_and(|&last| idx <= last) {
                    return Err(err("indices must be strictly increasing".into()));
                }
                n_features = n_features.max(idx + 1);
                indices.push(idx);
                values.push(val);
            }
            rows.push(SparseRow {
                label,
                indices,
                values,
            });
        }
        Ok(Self { rows, n_features })
    }

    pub fn from_path(path: impl AsRef<Path>, base: IndexBase) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f), base)
    }

    /// Two-class Gaussian samples: labels from the sign of a planted linear
    /// model plus flip noise; each feature is kept with probability `density`.
    pub fn synthetic(samples: usize, features: usize, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
        let rows = (0..samples)
            .map(|_| {
                let mut indices = Vec::new();
                let mut values = Vec::new();
                for j in 0..features {
                    if rng.random::<f64>() < density {
                        indices.push(j);
                        values.push(rng.sample::<f64, _>(StandardNormal) / (features as f64 * density).sqrt());
                    }
                }
                let margin: f64 = indices.iter().zip(&values).map(|(&j, v)| v * planted[j]).sum();
                let noisy = margin + 0.5 * rng.sample::<f64, _>(StandardNormal);
                SparseRow {
                    label: if noisy >= 0.0 { 1.0 } else { -1.0 },
                    indices,
                    values,
                }
            })
            .collect();
        Self {
            rows,
            n_features: features,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_zero_and_one_based() {
        let text = "+1 0:1.5 3:-2\n# comment\n\n-1 1:0.25\n";
        let d = SparseDataset::parse(text.as_bytes(), IndexBase::Zero).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_features, 4);
        assert_eq!(d.rows[0].indices, vec![0, 3]);
        assert_eq!(d.rows[1].label, -1.0);

        let d1 = SparseDataset::parse("1 1:2 4:1\n".as_bytes(), IndexBase::One).unwrap();
        assert_eq!(d1.rows[0].indices, vec![0, 3]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "+1 0:1\n0 1:1\n";
        match SparseDataset::parse(bad.as_bytes(), IndexBase::Zero) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SparseDataset::parse("1 0:1 0:2".as_bytes(), IndexBase::Zero).is_err());
        assert!(SparseDataset::parse("1 x".as_bytes(), IndexBase::Zero).is_err());
        assert!(SparseDataset::parse("1 0:2".as_bytes(), IndexBase::One).is_err());
        assert!(SparseDataset::parse("1 0:nan".as_bytes(), IndexBase::Zero).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = SparseDataset::synthetic(20, 5, 0.6, 3);
        let b = SparseDataset::synthetic(20, 5, 0.6, 3);
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.label.abs() == 1.0));
    }
}
