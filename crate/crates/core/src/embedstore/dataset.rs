use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use super::format::EmbeddingMatrix;
use super::manifest::{Manifest, Record, Split, TaskType};
use crate::error::{Error, Result};

/// Lexicographically sorted, duplicate-free class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassVocab {
    classes: Vec<String>,
}

impl ClassVocab {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        Self {
            classes: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }
}

#[derive(Debug)]
struct Shared {
    matrix: EmbeddingMatrix,
    manifest: Manifest,
    vocab: ClassVocab,
    /// Class indices per base record, ascending.
    labels: Vec<Vec<usize>>,
}

/// Row-selection criteria for [`Dataset::subset`]. All present criteria must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    pub split: Option<Split>,
    pub fold: Option<u32>,
    /// Positions within the current view.
    pub indices: Option<Vec<usize>>,
}

impl Selector {
    pub fn split(split: Split) -> Self {
        Self {
            split: Some(split),
            ..Self::default()
        }
    }

    pub fn fold(fold: u32) -> Self {
        Self {
            fold: Some(fold),
            ..Self::default()
        }
    }

    pub fn indices(indices: Vec<usize>) -> Self {
        Self {
            indices: Some(indices),
            ..Self::default()
        }
    }
}

/// An embedding matrix bound to its manifest and class vocabulary.
///
/// Cloning and subsetting are cheap: a dataset is a view (a list of base-row
/// positions) over shared, immutable storage.
#[derive(Debug, Clone)]
pub struct Dataset {
    shared: Arc<Shared>,
    rows: Arc<[usize]>,
}

pub fn bind(matrix: EmbeddingMatrix, manifest: Manifest) -> Result<Dataset> {
    if matrix.n() != manifest.len() {
        return Err(Error::Bind(format!(
            "embedding matrix has {} rows but manifest has {} records",
            matrix.n(),
            manifest.len()
        )));
    }
    let vocab = ClassVocab::from_names(
        manifest
            .records()
            .iter()
            .flat_map(|r| r.labels.iter().cloned()),
    );
    let labels = manifest
        .records()
        .iter()
        .map(|r| {
            let mut idx: Vec<usize> = r
                .labels
                .iter()
                .map(|l| vocab.index(l).expect("label present in vocab"))
                .collect();
            idx.sort_unstable();
            idx
        })
        .collect();
    let rows: Arc<[usize]> = (0..matrix.n()).collect();
    Ok(Dataset {
        shared: Arc::new(Shared {
            matrix,
            manifest,
            vocab,
            labels,
        }),
        rows,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shared.matrix.l()
    }

    pub fn vocab(&self) -> &ClassVocab {
        &self.shared.vocab
    }

    pub fn task(&self) -> TaskType {
        self.shared.manifest.task()
    }

    pub fn manifest(&self) -> &Manifest {
        &self.shared.manifest
    }

    /// The full underlying matrix, including rows outside this view.
    pub fn base_matrix(&self) -> &EmbeddingMatrix {
        &self.shared.matrix
    }

    /// Base-row index of view position `pos`.
    pub fn base_index(&self, pos: usize) -> usize {
        self.rows[pos]
    }

    pub fn base_indices(&self) -> &[usize] {
        &self.rows
    }

    pub fn embedding(&self, pos: usize) -> &[f32] {
        self.shared.matrix.row(self.rows[pos])
    }

    pub fn record(&self, pos: usize) -> &Record {
        &self.shared.manifest.records()[self.rows[pos]]
    }

    pub fn labels(&self, pos: usize) -> &[usize] {
        &self.shared.labels[self.rows[pos]]
    }

    pub fn has_label(&self, pos: usize, class: usize) -> bool {
        self.labels(pos).binary_search(&class).is_ok()
    }

    /// Materialize the view's embeddings as a standalone matrix.
    pub fn matrix(&self) -> EmbeddingMatrix {
        let l = self.dim();
        let mut data = Vec::with_capacity(self.len() * l);
        for pos in 0..self.len() {
            data.extend_from_slice(self.embedding(pos));
        }
        EmbeddingMatrix::new(self.len(), l, data).expect("rows of a valid matrix")
    }

    pub fn subset(&self, selector: &Selector) -> Result<Dataset> {
        let mut keep = vec![selector.indices.is_none(); self.len()];
        if let Some(indices) = &selector.indices {
            for &i in indices {
                if i >= self.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        len: self.len(),
                    });
                }
                keep[i] = true;
            }
        }
        let rows: Arc<[usize]> = (0..self.len())
            .filter(|&pos| {
                let r = self.record(pos);
                keep[pos]
                    && selector.split.is_none_or(|s| r.split == s)
                    && selector.fold.is_none_or(|f| r.fold == Some(f))
            })
            .map(|pos| self.rows[pos])
            .collect();
        Ok(Dataset {
            shared: Arc::clone(&self.shared),
            rows,
        })
    }

    /// Positions in this view matching `split`.
    pub fn positions_in_split(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&p| self.record(p).split == split)
            .collect()
    }

    /// A copy of this dataset whose underlying matrix is replaced, keeping
    /// the manifest, vocabulary and view. Used for column-masked pipelines.
    pub fn with_matrix(&self, matrix: EmbeddingMatrix) -> Result<Dataset> {
        if matrix.n() != self.shared.matrix.n() {
            return Err(Error::Bind(format!(
                "replacement matrix has {} rows, expected {}",
                matrix.n(),
                self.shared.matrix.n()
            )));
        }
        Ok(Dataset {
            shared: Arc::new(Shared {
                matrix,
                manifest: self.shared.manifest.clone(),
                vocab: self.shared.vocab.clone(),
                labels: self.shared.labels.clone(),
            }),
            rows: Arc::clone(&self.rows),
        })
    }
}
