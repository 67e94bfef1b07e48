use crate::embedstore::Dataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::sampler::SupportSets;

/// Labeled feature rows: the `(embedding, class)` pairs of a support set.
///
/// A multi-label record selected for several classes appears once per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub x: DenseMatrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl TrainingSet {
    pub fn new(x: DenseMatrix, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: n_classes,
            });
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite training value".into()));
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn from_support(dataset: &Dataset, support: &SupportSets) -> Result<Self> {
        let dim = dataset.dim();
        let total: usize = support.iter().map(|(_, r)| r.len()).sum();
        let mut data = Vec::with_capacity(total * dim);
        let mut y = Vec::with_capacity(total);
        for (c, rows) in support.iter() {
            for &p in rows {
                data.extend(dataset.embedding(p).iter().map(|&v| v as f64));
                y.push(c);
            }
        }
        Self::new(
            DenseMatrix::from_vec(total, dim, data)?,
            y,
            dataset.vocab().len(),
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn classes_present(&self) -> usize {
        self.class_counts().iter().filter(|&&n| n > 0).count()
    }
}
