//! Per-class reference embeddings and minimum-distance classification.
//!
//! A prototype for class `c` is the weighted sum `e_c = Σ w_i e_i` over the
//! class's support embeddings, with either uniform weights `1/k` or
//! norm-compensating weights `1/(k·‖e_i‖₂)`. Queries are assigned to the class
//! whose prototype is nearest under the chosen metric.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedstore::{read_embeddings, write_embeddings, ClassVocab, Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::sampler::SupportSets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    #[default]
    Uniform,
    NormWeighted,
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "norm-weighted" | "normalized" => Ok(WeightScheme::NormWeighted),
            other => Err(format!("unknown weight scheme '{other}'")),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::NormWeighted => "norm-weighted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Mse,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "mse" => Ok(Metric::Mse),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Mse => "mse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Averaged {
        scheme: WeightScheme,
        support_digest: String,
    },
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    vectors: Vec<f64>,
    dim: usize,
    vocab: ClassVocab,
    provenance: Provenance,
    sum_sq: Vec<f64>,
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl PrototypeSet {
    pub fn new(
        vectors: Vec<f64>,
        dim: usize,
        vocab: ClassVocab,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format(
                "prototype dimension must be at least 1".into(),
            ));
        }
        if vectors.len() != vocab.len() * dim {
            return Err(Error::Format(format!(
                "expected {} prototype rows of dimension {dim}, got {} values",
                vocab.len(),
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite prototype value".into()));
        }
        let sum_sq = vectors.chunks_exact(dim).map(sum_sq).collect();
        Ok(Self {
            vectors,
            dim,
            vocab,
            provenance,
            sum_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &ClassVocab {
        &self.vocab
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn vector(&self, c: usize) -> &[f64] {
        &self.vectors[c * self.dim..(c + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Restrict every prototype to the given columns (in the given order).
    pub fn select_columns(&self, columns: &[usize]) -> Result<PrototypeSet> {
        if let Some(&bad) = columns.iter().find(|&&j| j >= self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: bad + 1,
            });
        }
        let vectors = self
            .vectors
            .chunks_exact(self.dim)
            .flat_map(|row| columns.iter().map(move |&j| row[j]))
            .collect();
        PrototypeSet::new(
            vectors,
            columns.len(),
            self.vocab.clone(),
            self.provenance.clone(),
        )
    }

    /// Distance from `e` to every prototype; lower is closer.
    pub fn score(&self, e: &[f32], metric: Metric) -> Result<Vec<f64>> {
        if e.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: e.len(),
            });
        }
        match metric {
            Metric::Mse => Ok(self
                .vectors
                .chunks_exact(self.dim)
                .map(|p| {
                    p.iter()
                        .zip(e)
                        .map(|(a, &b)| {
                            let d = a - b as f64;
                            d * d
                        })
                        .sum::<f64>()
                        / self.dim as f64
                })
                .collect()),
            Metric::Cosine => {
                let q_sq: f64 = e.iter().map(|&x| x as f64 * x as f64).sum();
                if q_sq == 0.0 {
                    return Err(Error::DegenerateEmbedding(
                        "query embedding has zero norm under cosine distance".into(),
                    ));
                }
                if let Some(c) = self.sum_sq.iter().position(|&s| s == 0.0) {
                    return Err(Error::DegenerateEmbedding(format!(
                        "prototype for class '{}' has zero norm under cosine distance",
                        self.vocab.name(c)
                    )));
                }
                Ok(self
                    .vectors
                    .chunks_exact(self.dim)
                    .zip(&self.sum_sq)
                    .map(|(p, &p_sq)| {
                        let dot: f64 = p.iter().zip(e).map(|(a, &b)| a * b as f64).sum();
                        cosine_distance(dot, p_sq, q_sq)
                    })
                    .collect())
            }
        }
    }

    /// Index of the nearest prototype; ties go to the lowest class index.
    pub fn classify(&self, e: &[f32], metric: Metric) -> Result<usize> {
        Ok(argmin(&self.score(e, metric)?))
    }
}

/// `1 - dot / sqrt(|a|² |b|²)`, clamped to `[0, 2]`.
///
/// Taking the root of the product keeps `d(x, x) == 0` exact.
fn cosine_distance(dot: f64, a_sq: f64, b_sq: f64) -> f64 {
    (1.0 - dot / (a_sq * b_sq).sqrt()).clamp(0.0, 2.0)
}

pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn build_prototypes(
    dataset: &Dataset,
    support: &SupportSets,
    scheme: WeightScheme,
) -> Result<PrototypeSet> {
    let n_classes = dataset.vocab().len();
    if support.n_classes() != n_classes {
        return Err(Error::Config(format!(
            "support covers {} classes, dataset vocabulary has {n_classes}",
            support.n_classes()
        )));
    }
    let dim = dataset.dim();
    let mut vectors = vec![0.0f64; n_classes * dim];
    for (c, rows) in support.iter() {
        if rows.is_empty() {
            return Err(Error::EmptyClass {
                class: dataset.vocab().name(c).to_string(),
            });
        }
        let acc = &mut vectors[c * dim..(c + 1) * dim];
        for &p in rows {
            let e = dataset.embedding(p);
            match scheme {
                WeightScheme::Uniform => {
                    for (a, &x) in acc.iter_mut().zip(e) {
                        *a += x as f64;
                    }
                }
                WeightScheme::NormWeighted => {
                    let norm = e.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        return Err(Error::DegenerateEmbedding(format!(
                            "support embedding '{}' has zero norm under the norm-weighted scheme",
                            dataset.record(p).id
                        )));
                    }
                    for (a, &x) in acc.iter_mut().zip(e) {
                        *a += x as f64 / norm;
                    }
                }
            }
        }
        let k = rows.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
    }
    PrototypeSet::new(
        vectors,
        dim,
        dataset.vocab().clone(),
        Provenance::Averaged {
            scheme,
            support_digest: support.digest(dataset),
        },
    )
}

/// Sidecar holding the class order of a prototype file: `<path>.classes`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".classes");
    PathBuf::from(s)
}

/// Write prototypes as EMB1 (values narrowed to f32) plus a class-order sidecar.
pub fn save_prototypes(protos: &PrototypeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data = protos.vectors.iter().map(|&v| v as f32).collect();
    let matrix = EmbeddingMatrix::new(protos.n_classes(), protos.dim, data)?;
    write_embeddings(&matrix, path)?;
    let mut names = protos.vocab.classes().join("\n");
    names.push('\n');
    let side = sidecar_path(path);
    crate::fsutil::write_atomic(side, names.as_bytes())
}

/// Load externally produced prototypes, reordering rows to `vocab` order.
pub fn load_prototypes(path: impl AsRef<Path>, vocab: &ClassVocab) -> Result<PrototypeSet> {
    let path = path.as_ref();
    load_prototypes_with_sidecar(path, sidecar_path(path), vocab)
}

pub fn load_prototypes_with_sidecar(
    path: impl AsRef<Path>,
    sidecar: impl AsRef<Path>,
    vocab: &ClassVocab,
) -> Result<PrototypeSet> {
    let matrix = read_embeddings(path)?;
    let sidecar = sidecar.as_ref();
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let names: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if names.len() != matrix.n() || names.len() != vocab.len() {
        return Err(Error::Format(format!(
            "prototype file has {} rows and sidecar lists {} classes, vocabulary has {}",
            matrix.n(),
            names.len(),
            vocab.len()
        )));
    }
    let mut row_of_class = vec![usize::MAX; vocab.len()];
    for (row, name) in names.iter().enumerate() {
        let c = vocab
            .index(name)
            .ok_or_else(|| Error::Format(format!("sidecar class '{name}' not in vocabulary")))?;
        if row_of_class[c] != usize::MAX {
            return Err(Error::Format(format!("sidecar lists class '{name}' twice")));
        }
        row_of_class[c] = row;
    }
    let vectors = row_of_class
        .iter()
        .flat_map(|&r| matrix.row(r).iter().map(|&v| v as f64))
        .collect();
    PrototypeSet::new(vectors, matrix.l(), vocab.clone(), Provenance::External)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::{bind, Manifest, Record, Split, TaskType};

    fn toy(rows: &[(&str, [f32; 2])]) -> Dataset {
        let recs = rows
            .iter()
            .enumerate()
            .map(|(i, (l, _))| Record::new(format!("r{i}"), &[l], Split::Dev, None))
            .collect();
        let data = rows.iter().flat_map(|(_, v)| *v).collect();
        bind(
            EmbeddingMatrix::new(rows.len(), 2, data).unwrap(),
            Manifest::new(TaskType::SingleLabel, recs).unwrap(),
        )
        .unwrap()
    }

    fn all_rows(ds: &Dataset) -> SupportSets {
        SupportSets::from_lists(
            (0..ds.vocab().len())
                .map(|c| (0..ds.len()).filter(|&p| ds.has_label(p, c)).collect())
                .collect(),
        )
    }

    fn external(rows: &[[f64; 2]]) -> PrototypeSet {
        let vocab = ClassVocab::from_names((0..rows.len()).map(|i| format!("c{i}")));
        PrototypeSet::new(
            rows.iter().flatten().copied().collect(),
            2,
            vocab,
            Provenance::External,
        )
        .unwrap()
    }

    #[test]
    fn uniform_mean() {
        let ds = toy(&[("a", [1.0, 0.0]), ("a", [0.0, 1.0])]);
        let p = build_prototypes(&ds, &all_rows(&ds), WeightScheme::Uniform).unwrap();
        assert_eq!(p.vector(0), &[0.5, 0.5]);
    }

    #[test]
    fn norm_weighted_mean() {
        let ds = toy(&[("a", [2.0, 0.0]), ("a", [0.0, 4.0])]);
        let p = build_prototypes(&ds, &all_rows(&ds), WeightScheme::NormWeighted).unwrap();
        assert_eq!(p.vector(0), &[0.5, 0.5]);
    }

    #[test]
    fn single_unit_support_is_identity() {
        let ds = toy(&[("a", [0.0, 1.0]), ("b", [-1.0, 0.0])]);
        for scheme in [WeightScheme::Uniform, WeightScheme::NormWeighted] {
            let p = build_prototypes(&ds, &all_rows(&ds), scheme).unwrap();
            assert_eq!(p.vector(0), &[0.0, 1.0]);
            assert_eq!(p.vector(1), &[-1.0, 0.0]);
        }
    }

    #[test]
    fn k_copies_average_to_the_copy() {
        let v = [0.1f32, -3.7];
        let ds = toy(&[
            ("a", v),
            ("a", v),
            ("a", v),
            ("a", v),
            ("a", v),
            ("a", v),
            ("a", v),
        ]);
        let p = build_prototypes(&ds, &all_rows(&ds), WeightScheme::Uniform).unwrap();
        assert_eq!(p.vector(0), &[v[0] as f64, v[1] as f64]);
    }

    #[test]
    fn zero_norm_support_rejected_under_norm_weighting() {
        let ds = toy(&[("a", [0.0, 0.0]), ("a", [1.0, 0.0])]);
        let err = build_prototypes(&ds, &all_rows(&ds), WeightScheme::NormWeighted).unwrap_err();
        assert!(matches!(err, Error::DegenerateEmbedding(ref m) if m.contains("r0")));
        assert!(build_prototypes(&ds, &all_rows(&ds), WeightScheme::Uniform).is_ok());
    }

    #[test]
    fn cosine_distance_of_self_and_orthogonal() {
        let p = external(&[[0.25, -1.5], [1.5, 0.25]]);
        let d = p.score(&[0.25, -1.5], Metric::Cosine).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
        let d = p.score(&[0.75, -4.5], Metric::Cosine).unwrap();
        assert!(d[0].abs() < 1e-15);
        let d = external(&[[1.0, 0.0]])
            .score(&[0.0, 2.0], Metric::Cosine)
            .unwrap();
        assert_eq!(d[0], 1.0);
    }

    #[test]
    fn mse_hand_case() {
        let p = external(&[[3.0, 4.0]]);
        assert_eq!(p.score(&[1.0, 2.0], Metric::Mse).unwrap(), vec![4.0]);
    }

    #[test]
    fn cosine_rejects_zero_norms() {
        let p = external(&[[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            p.score(&[1.0, 1.0], Metric::Cosine),
            Err(Error::DegenerateEmbedding(_))
        ));
        assert!(p.score(&[1.0, 1.0], Metric::Mse).is_ok());
        let q = external(&[[1.0, 0.0]]);
        assert!(matches!(
            q.score(&[0.0, 0.0], Metric::Cosine),
            Err(Error::DegenerateEmbedding(_))
        ));
    }

    #[test]
    fn classify_ties_and_single_class() {
        let single = external(&[[5.0, 5.0]]);
        assert_eq!(single.classify(&[-1.0, 3.0], Metric::Mse).unwrap(), 0);
        let tied = external(&[[1.0, 0.0], [0.0, 1.0]]);
        for m in [Metric::Cosine, Metric::Mse] {
            assert_eq!(tied.classify(&[1.0, 1.0], m).unwrap(), 0);
            assert_eq!(tied.classify(&[0.0, 1.0], m).unwrap(), 1);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = external(&[[1.0, 0.0]]);
        assert!(matches!(
            p.score(&[1.0], Metric::Mse),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn save_and_load_reorders_by_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("protos.emb");
        let m = EmbeddingMatrix::new(3, 2, vec![3.0, 3.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        write_embeddings(&m, &path).unwrap();
        fs::write(sidecar_path(&path), "c\na\nb\n").unwrap();
        let vocab = ClassVocab::from_names(["a", "b", "c"]);
        let p = load_prototypes(&path, &vocab).unwrap();
        assert_eq!(p.vector(0), &[1.0, 1.0]);
        assert_eq!(p.vector(2), &[3.0, 3.0]);
        assert_eq!(p.provenance(), &Provenance::External);

        save_prototypes(&p, &path).unwrap();
        assert_eq!(
            fs::read_to_string(sidecar_path(&path)).unwrap(),
            "a\nb\nc\n"
        );
        assert_eq!(
            load_prototypes(&path, &vocab).unwrap().vectors(),
            p.vectors()
        );

        fs::write(sidecar_path(&path), "a\nb\n").unwrap();
        assert!(matches!(
            load_prototypes(&path, &vocab),
            Err(Error::Format(_))
        ));
        fs::write(sidecar_path(&path), "a\nb\nz\n").unwrap();
        assert!(matches!(
            load_prototypes(&path, &vocab),
            Err(Error::Format(_))
        ));
    }
}
