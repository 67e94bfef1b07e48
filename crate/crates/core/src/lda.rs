//! Shared-covariance Gaussian discriminant (LDA) classifier.
//!
//! Fitting computes per-class means and the pooled within-class covariance
//! `S = Σ_c Σ_i (x_i − μ_c)(x_i − μ_c)ᵀ / max(1, n − |C|)`, then ridge-regularizes
//! it as `P = S + λ·(tr S / m)·I` (or `P = I` when `tr S = 0`). The discriminant
//! for class `c` is `δ_c(x) = xᵀP⁻¹μ_c − ½ μ_cᵀP⁻¹μ_c + ln π_c`.
//!
//! Rows are summed in a canonical order (per class, lexicographic by value),
//! so the fitted model does not depend on the order of the training rows.
//!
//! # Model file (`LDA1`)
//!
//! Little-endian: magic `LDA1`, u32 version (1), u32 class count `C`,
//! u32 dimension `m`, f64 λ, `C` f64 priors, then two EMB1 blocks: the
//! `C×m` class means and the `m×m` lower Cholesky factor of `P`. EMB1 stores
//! f32, so a reloaded model is the f32-rounded version of the fitted one.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::embedstore::{EmbeddingMatrix, HEADER_LEN};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::prototypes::argmax;
use crate::training::TrainingSet;

pub const DEFAULT_LAMBDA: f64 = 1e-4;
const MODEL_MAGIC: &[u8; 4] = b"LDA1";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    means: DenseMatrix,
    pooled: Cholesky,
    priors: Vec<f64>,
    lambda: f64,
    coef: DenseMatrix,
    intercept: Vec<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl LdaModel {
    pub fn fit(train: &TrainingSet, lambda: f64) -> Result<LdaModel> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        let n_classes = train.n_classes;
        let present = train.classes_present();
        if n_classes < 2 || present < 2 {
            return Err(Error::NotEnoughClasses { found: present });
        }
        if present < n_classes {
            let missing = train.class_counts().iter().position(|&k| k == 0).unwrap();
            return Err(Error::EmptyClass {
                class: format!("#{missing}"),
            });
        }
        let m = train.dim();
        let x = &train.x;

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &c) in train.y.iter().enumerate() {
            by_class[c].push(i);
        }
        for rows in &mut by_class {
            rows.sort_by(|&a, &b| lexicographic(x.row(a), x.row(b)).then(a.cmp(&b)));
        }

        let mut means = DenseMatrix::zeros(n_classes, m);
        for (c, rows) in by_class.iter().enumerate() {
            let mu = means.row_mut(c);
            for &i in rows {
                for (a, v) in mu.iter_mut().zip(x.row(i)) {
                    *a += v;
                }
            }
            let k = rows.len() as f64;
            mu.iter_mut().for_each(|a| *a /= k);
        }

        // Lower triangle of the within-class scatter.
        let mut scatter = DenseMatrix::zeros(m, m);
        let mut z = vec![0.0; m];
        for (c, rows) in by_class.iter().enumerate() {
            let mu = means.row(c);
            for &i in rows {
                for ((zj, v), u) in z.iter_mut().zip(x.row(i)).zip(mu) {
                    *zj = v - u;
                }
                for a in 0..m {
                    let za = z[a];
                    let row = &mut scatter.row_mut(a)[..=a];
                    for (s, zb) in row.iter_mut().zip(&z[..=a]) {
                        *s += za * zb;
                    }
                }
            }
        }
        let divisor = (train.len() as f64 - n_classes as f64).max(1.0);
        let trace = scatter.trace() / divisor;
        let mut pooled = DenseMatrix::zeros(m, m);
        if trace == 0.0 {
            pooled = DenseMatrix::identity(m);
        } else {
            let ridge = lambda * trace / m as f64;
            for a in 0..m {
                for b in 0..=a {
                    let v = scatter[(a, b)] / divisor;
                    pooled[(a, b)] = v;
                    pooled[(b, a)] = v;
                }
                pooled[(a, a)] += ridge;
            }
        }
        let chol = Cholesky::factor(&pooled)?;
        let priors = vec![1.0 / n_classes as f64; n_classes];
        Ok(Self::from_parts(means, chol, priors, lambda))
    }

    fn from_parts(means: DenseMatrix, pooled: Cholesky, priors: Vec<f64>, lambda: f64) -> LdaModel {
        let n_classes = means.rows();
        let m = means.cols();
        let mut coef = DenseMatrix::zeros(n_classes, m);
        let mut intercept = Vec::with_capacity(n_classes);
        for (c, prior) in priors.iter().enumerate() {
            let mu = means.row(c);
            let a = pooled.solve(mu);
            let quad: f64 = mu.iter().zip(&a).map(|(x, y)| x * y).sum();
            intercept.push(-0.5 * quad + prior.ln());
            coef.row_mut(c).copy_from_slice(&a);
        }
        LdaModel {
            means,
            pooled,
            priors,
            lambda,
            coef,
            intercept,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.means.rows()
    }

    pub fn means(&self) -> &DenseMatrix {
        &self.means
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The regularized pooled covariance, reconstructed from its factor.
    pub fn pooled(&self) -> DenseMatrix {
        let l = self.pooled.lower();
        let m = self.dim();
        let mut p = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v: f64 = l.row(i)[..=j]
                    .iter()
                    .zip(&l.row(j)[..=j])
                    .map(|(a, b)| a * b)
                    .sum();
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        p
    }

    /// Per-class discriminant values; higher is better.
    pub fn discriminants(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok((0..self.n_classes())
            .map(|c| {
                let dot: f64 = self.coef.row(c).iter().zip(x).map(|(a, b)| a * b).sum();
                dot + self.intercept[c]
            })
            .collect())
    }

    pub fn discriminants_f32(&self, x: &[f32]) -> Result<Vec<f64>> {
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.discriminants(&x)
    }

    /// Argmax of the discriminants; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.discriminants(x)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        for p in &self.priors {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let narrow = |m: &DenseMatrix| {
            EmbeddingMatrix::new(
                m.rows(),
                m.cols(),
                m.data().iter().map(|&v| v as f32).collect(),
            )
            .expect("finite model values")
            .to_bytes()
        };
        out.extend(narrow(&self.means));
        out.extend(narrow(self.pooled.lower()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<LdaModel> {
        let truncated = || Error::Truncation("LDA model file is truncated".into());
        if bytes.len() < 24 {
            return Err(truncated());
        }
        if &bytes[0..4] != MODEL_MAGIC {
            return Err(Error::Format("bad LDA model magic".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let f64_at = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        if u32_at(4) != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported LDA model version {}",
                u32_at(4)
            )));
        }
        let n_classes = u32_at(8) as usize;
        let m = u32_at(12) as usize;
        let lambda = f64_at(16);
        let mut at = 24;
        if bytes.len() < at + 8 * n_classes {
            return Err(truncated());
        }
        let priors: Vec<f64> = (0..n_classes).map(|c| f64_at(at + 8 * c)).collect();
        at += 8 * n_classes;
        let means_len = HEADER_LEN + 4 * n_classes * m;
        let lower_len = HEADER_LEN + 4 * m * m;
        if bytes.len() != at + means_len + lower_len {
            return Err(truncated());
        }
        let widen = |block: &[u8], rows: usize, cols: usize| -> Result<DenseMatrix> {
            let e = EmbeddingMatrix::from_bytes(block)?;
            if e.n() != rows || e.l() != cols {
                return Err(Error::Format("LDA model block shape mismatch".into()));
            }
            DenseMatrix::from_vec(rows, cols, e.data().iter().map(|&v| v as f64).collect())
        };
        let means = widen(&bytes[at..at + means_len], n_classes, m)?;
        let lower = widen(&bytes[at + means_len..], m, m)?;
        Ok(Self::from_parts(
            means,
            Cholesky::from_lower(lower)?,
            priors,
            lambda,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LdaModel> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], y: &[usize], n_classes: usize) -> TrainingSet {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TrainingSet::new(
            DenseMatrix::from_rows(&rows).unwrap(),
            y.to_vec(),
            n_classes,
        )
        .unwrap()
    }

    #[test]
    fn one_row_per_class_is_nearest_mean() {
        let t = set(&[&[0.0, 0.0], &[4.0, 0.0], &[0.0, 3.0]], &[0, 1, 2], 3);
        let model = LdaModel::fit(&t, DEFAULT_LAMBDA).unwrap();
        assert_eq!(model.pooled(), DenseMatrix::identity(2));
        assert_eq!(model.means().row(1), &[4.0, 0.0]);
        assert_eq!(model.predict(&[2.5, 0.2]).unwrap(), 1);
        assert_eq!(model.predict(&[0.3, 1.4]).unwrap(), 0);
        assert_eq!(model.predict(&[0.3, 1.6]).unwrap(), 2);
    }

    #[test]
    fn priors_sum_to_one_and_pooled_symmetric() {
        let t = set(
            &[
                &[1.0, 2.0],
                &[1.5, 1.0],
                &[0.2, 2.2],
                &[5.0, 1.0],
                &[6.0, 0.5],
                &[5.5, 2.0],
            ],
            &[0, 0, 0, 1, 1, 1],
            2,
        );
        let model = LdaModel::fit(&t, 0.1).unwrap();
        assert!((model.priors().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let p = model.pooled();
        assert!((p[(0, 1)] - p[(1, 0)]).abs() == 0.0);
        assert_eq!(model.dim(), 2);
    }

    #[test]
    fn identical_means_tie_to_lowest_index() {
        let t = set(&[&[1.0, 1.0], &[1.0, 1.0]], &[0, 1], 2);
        let model = LdaModel::fit(&t, DEFAULT_LAMBDA).unwrap();
        assert_eq!(model.predict(&[1.0, 1.0]).unwrap(), 0);
        assert_eq!(model.predict(&[-7.0, 3.0]).unwrap(), 0);
    }

    #[test]
    fn translation_leaves_argmax_unchanged() {
        let base: [&[f64]; 6] = [
            &[1.0, 2.0],
            &[1.5, 1.0],
            &[0.2, 2.2],
            &[5.0, 1.0],
            &[6.0, 0.5],
            &[5.5, 2.0],
        ];
        let shift = [10.0, -3.0];
        let shifted: Vec<Vec<f64>> = base
            .iter()
            .map(|r| vec![r[0] + shift[0], r[1] + shift[1]])
            .collect();
        let shifted_refs: Vec<&[f64]> = shifted.iter().map(|r| r.as_slice()).collect();
        let y = [0, 0, 0, 1, 1, 1];
        let a = LdaModel::fit(&set(&base, &y, 2), 0.01).unwrap();
        let b = LdaModel::fit(&set(&shifted_refs, &y, 2), 0.01).unwrap();
        for q in [[3.0, 1.5], [2.0, 1.0], [4.0, 2.0], [3.2, 0.0]] {
            let qs = [q[0] + shift[0], q[1] + shift[1]];
            assert_eq!(a.predict(&q).unwrap(), b.predict(&qs).unwrap());
        }
    }

    #[test]
    fn row_permutation_gives_identical_model() {
        let rows: [&[f64]; 6] = [
            &[1.0, 2.0],
            &[1.5, 1.0],
            &[0.2, 2.2],
            &[5.0, 1.0],
            &[6.0, 0.5],
            &[5.5, 2.0],
        ];
        let y = [0, 0, 0, 1, 1, 1];
        let perm = [4, 0, 5, 2, 1, 3];
        let prow: Vec<&[f64]> = perm.iter().map(|&i| rows[i]).collect();
        let py: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        assert_eq!(
            LdaModel::fit(&set(&rows, &y, 2), 0.1).unwrap(),
            LdaModel::fit(&set(&prow, &py, 2), 0.1).unwrap()
        );
    }

    #[test]
    fn errors() {
        let t = set(&[&[1.0], &[2.0]], &[0, 0], 1);
        assert!(matches!(
            LdaModel::fit(&t, 0.1),
            Err(Error::NotEnoughClasses { .. })
        ));
        let t = set(&[&[1.0], &[2.0]], &[0, 1], 3);
        assert!(matches!(
            LdaModel::fit(&t, 0.1),
            Err(Error::EmptyClass { .. })
        ));
        let t = set(&[&[1.0], &[2.0]], &[0, 1], 2);
        let model = LdaModel::fit(&t, 0.1).unwrap();
        assert!(matches!(
            model.discriminants(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LdaModel::fit(&t, -1.0).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let t = set(
            &[
                &[1.0, 2.0],
                &[1.5, 1.0],
                &[0.2, 2.2],
                &[5.0, 1.0],
                &[6.0, 0.5],
                &[5.5, 2.0],
            ],
            &[0, 0, 0, 1, 1, 1],
            2,
        );
        let model = LdaModel::fit(&t, 0.1).unwrap();
        let bytes = model.to_bytes();
        let back = LdaModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.lambda(), 0.1);
        assert_eq!(back.priors(), model.priors());
        for q in [[3.0, 1.5], [0.0, 0.0], [6.0, 2.0]] {
            assert_eq!(back.predict(&q).unwrap(), model.predict(&q).unwrap());
        }
        assert!(LdaModel::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(LdaModel::from_bytes(&bad), Err(Error::Format(_))));
    }
}
