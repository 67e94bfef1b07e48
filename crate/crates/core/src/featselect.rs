//! Mutual-information feature ranking and top-`|C|·K` selection.
//!
//! Each feature is discretized into equal-frequency bins over the training
//! rows and scored with the plug-in estimator
//! `I = Σ p(b,c) ln(p(b,c) / (p(b) p(c)))` in nats.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::embedstore::{Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::prototypes::PrototypeSet;
use crate::training::TrainingSet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiScores {
    pub scores: Vec<f64>,
    pub bins: usize,
}

/// `min(8, ⌊√rows_per_class⌋)`, at least 2.
pub fn default_bins(rows_per_class: usize) -> usize {
    ((rows_per_class as f64).sqrt().floor() as usize).clamp(2, 8)
}

/// Rank-based equal-frequency binning.
///
/// A value's bin is `⌊bins · #(values strictly below it) / n⌋`, so equal
/// values always share a bin and edges only fall between distinct values.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut below = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[i] != values[order[rank - 1]] {
            below = rank;
        }
        out[i] = (bins * below / n).min(bins - 1);
    }
    out
}

/// Plug-in MI between a discrete feature and the class label.
pub fn plugin_mi(bin_of: &[usize], y: &[usize], bins: usize, n_classes: usize) -> f64 {
    let n = y.len();
    let mut joint = vec![0usize; bins * n_classes];
    let mut per_bin = vec![0usize; bins];
    let mut per_class = vec![0usize; n_classes];
    for (&b, &c) in bin_of.iter().zip(y) {
        joint[b * n_classes + c] += 1;
        per_bin[b] += 1;
        per_class[c] += 1;
    }
    if per_bin.iter().filter(|&&k| k > 0).count() <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for b in 0..bins {
        for c in 0..n_classes {
            let k = joint[b * n_classes + c];
            if k == 0 {
                continue;
            }
            let ratio = (k as f64 * nf) / (per_bin[b] as f64 * per_class[c] as f64);
            mi += (k as f64 / nf) * ratio.ln();
        }
    }
    mi.max(0.0)
}

pub fn mi_scores(train: &TrainingSet, bins: usize) -> Result<MiScores> {
    if bins < 2 {
        return Err(Error::Config(format!(
            "bins must be at least 2, got {bins}"
        )));
    }
    let present = train.classes_present();
    if present < 2 {
        return Err(Error::NotEnoughClasses { found: present });
    }
    let rows = train.len();
    let scores = (0..train.dim())
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = (0..rows).map(|i| train.x[(i, j)]).collect();
            let bin_of = quantile_bins(&column, bins);
            plugin_mi(&bin_of, &train.y, bins, train.n_classes)
        })
        .collect();
    Ok(MiScores { scores, bins })
}

/// The `K` multiplier: `round(|C|·K)` features are kept.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct KRatio(f64);

impl KRatio {
    /// Default K values for ratio sweeps.
    pub const PROTOCOL: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("K ratio must be positive, got {k}")));
        }
        Ok(Self(k))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `min(dim, round_half_up(|C|·K))`, at least 1.
    pub fn feature_count(self, vocab_size: usize, dim: usize) -> usize {
        let target = (vocab_size as f64 * self.0 + 0.5).floor() as usize;
        target.clamp(1, dim)
    }
}

impl FromStr for KRatio {
    type Err = String;

    /// Accepts decimals (`0.5`) and simple fractions (`1/2`).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let value = match s.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad K ratio '{s}'"))?;
                let den: f64 = den
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad K ratio '{s}'"))?;
                num / den
            }
            None => s.parse().map_err(|_| format!("bad K ratio '{s}'"))?,
        };
        KRatio::new(value).map_err(|e| e.to_string())
    }
}

impl fmt::Display for KRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMask {
    /// Strictly increasing.
    pub indices: Vec<usize>,
    /// Dimension of the unmasked space.
    pub dim: usize,
    pub bins: Option<usize>,
    pub ratio: Option<f64>,
}

impl FeatureMask {
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Config(
                "feature mask must select at least one feature".into(),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= dim) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: dim,
            });
        }
        Ok(Self {
            indices,
            dim,
            bins: None,
            ratio: None,
        })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            indices: (0..dim).collect(),
            dim,
            bins: None,
            ratio: None,
        }
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.dim
    }

    /// Header line `# dim=.. m=.. bins=.. K=..`, then the comma-separated indices.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let idx: Vec<String> = self.indices.iter().map(usize::to_string).collect();
        format!(
            "# dim={} m={} bins={} K={}\n{}\n",
            self.dim,
            self.m(),
            opt(self.bins.map(|b| b.to_string())),
            opt(self.ratio.map(|k| k.to_string())),
            idx.join(",")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |m: &str| Error::Format(format!("feature mask: {m}"));
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing header"))?;
        let (mut dim, mut bins, mut ratio) = (None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad("malformed header field"))?;
            match (key, value) {
                (_, "-") => {}
                ("dim", v) => dim = Some(v.parse().map_err(|_| bad("bad dim"))?),
                ("bins", v) => bins = Some(v.parse().map_err(|_| bad("bad bins"))?),
                ("K", v) => ratio = Some(v.parse().map_err(|_| bad("bad K"))?),
                _ => {}
            }
        }
        let dim = dim.ok_or_else(|| bad("header lacks dim"))?;
        let body = lines.next().ok_or_else(|| bad("missing index line"))?;
        let indices = body
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad("bad index")))
            .collect::<Result<Vec<_>>>()?;
        let mut mask = FeatureMask::new(indices, dim)?;
        mask.bins = bins;
        mask.ratio = ratio;
        Ok(mask)
    }
}

/// Keep the `round(|C|·K)` highest-scoring features; ties go to the lower index.
pub fn select_top(scores: &MiScores, vocab_size: usize, ratio: KRatio) -> Result<FeatureMask> {
    let dim = scores.scores.len();
    if dim == 0 {
        return Err(Error::EmptyInput("no feature scores".into()));
    }
    let m = ratio.feature_count(vocab_size, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(a.cmp(&b))
    });
    order.truncate(m);
    let mut mask = FeatureMask::new(order, dim)?;
    mask.bins = Some(scores.bins);
    mask.ratio = Some(ratio.value());
    Ok(mask)
}

/// Column restriction by a [`FeatureMask`].
pub trait ApplyMask {
    type Output;

    fn apply_mask(&self, mask: &FeatureMask) -> Result<Self::Output>;
}

fn check_dim(mask: &FeatureMask, dim: usize) -> Result<()> {
    if mask.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: mask.dim,
            got: dim,
        });
    }
    Ok(())
}

impl ApplyMask for EmbeddingMatrix {
    type Output = EmbeddingMatrix;

    fn apply_mask(&self, mask: &FeatureMask) -> Result<EmbeddingMatrix> {
        check_dim(mask, self.l())?;
        if mask.is_full() {
            return Ok(self.clone());
        }
        let data = self
            .rows()
            .flat_map(|r| mask.indices.iter().map(move |&j| r[j]))
            .collect();
        EmbeddingMatrix::new(self.n(), mask.m(), data)
    }
}

impl ApplyMask for PrototypeSet {
    type Output = PrototypeSet;

    fn apply_mask(&self, mask: &FeatureMask) -> Result<PrototypeSet> {
        check_dim(mask, self.dim())?;
        self.select_columns(&mask.indices)
    }
}

impl ApplyMask for DenseMatrix {
    type Output = DenseMatrix;

    fn apply_mask(&self, mask: &FeatureMask) -> Result<DenseMatrix> {
        check_dim(mask, self.cols())?;
        Ok(self.select_columns(&mask.indices))
    }
}

impl ApplyMask for Dataset {
    type Output = Dataset;

    fn apply_mask(&self, mask: &FeatureMask) -> Result<Dataset> {
        check_dim(mask, self.dim())?;
        if mask.is_full() {
            return Ok(self.clone());
        }
        self.with_matrix(self.base_matrix().apply_mask(mask)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(columns: &[Vec<f64>], y: Vec<usize>, n_classes: usize) -> TrainingSet {
        let rows = y.len();
        let mut data = Vec::new();
        for i in 0..rows {
            for col in columns {
                data.push(col[i]);
            }
        }
        TrainingSet::new(
            DenseMatrix::from_vec(rows, columns.len(), data).unwrap(),
            y,
            n_classes,
        )
        .unwrap()
    }

    #[test]
    fn constant_feature_scores_zero() {
        let t = train(&[vec![3.0; 6]], vec![0, 0, 0, 1, 1, 1], 2);
        assert_eq!(mi_scores(&t, 4).unwrap().scores, vec![0.0]);
    }

    #[test]
    fn informative_binary_feature_scores_ln2() {
        let y = vec![0, 1, 0, 1, 1, 0, 0, 1];
        let x: Vec<f64> = y.iter().map(|&c| c as f64).collect();
        let s = mi_scores(&train(&[x], y, 2), 2).unwrap();
        assert!((s.scores[0] - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let t = train(&[vec![1.0, 2.0]], vec![1, 1], 3);
        assert!(matches!(
            mi_scores(&t, 2),
            Err(Error::NotEnoughClasses { found: 1 })
        ));
        let t = train(&[vec![1.0, 2.0]], vec![0, 1], 2);
        assert!(mi_scores(&t, 1).is_err());
    }

    #[test]
    fn quantile_bins_share_ties() {
        assert_eq!(quantile_bins(&[5.0, 1.0, 3.0, 7.0], 2), vec![1, 0, 0, 1]);
        assert_eq!(quantile_bins(&[1.0, 1.0, 1.0, 2.0], 2), vec![0, 0, 0, 1]);
        assert_eq!(quantile_bins(&[2.0, 1.0, 1.0, 1.0], 4), vec![3, 0, 0, 0]);
    }

    #[test]
    fn default_bin_policy() {
        assert_eq!(default_bins(1), 2);
        assert_eq!(default_bins(10), 3);
        assert_eq!(default_bins(50), 7);
        assert_eq!(default_bins(1000), 8);
    }

    #[test]
    fn select_top_sizes() {
        let scores = MiScores {
            scores: vec![0.0; 1024],
            bins: 4,
        };
        assert_eq!(
            select_top(&scores, 24, KRatio::new(32.0).unwrap())
                .unwrap()
                .m(),
            768
        );
        assert_eq!(
            select_top(&scores, 50, KRatio::new(32.0).unwrap())
                .unwrap()
                .m(),
            1024
        );
        assert_eq!(
            select_top(&scores, 3, KRatio::new(0.5).unwrap())
                .unwrap()
                .m(),
            2
        );
        assert!(select_top(&scores, 50, KRatio::new(32.0).unwrap())
            .unwrap()
            .is_full());
    }

    #[test]
    fn select_top_tie_breaks_on_lower_index() {
        let mut v = vec![0.1; 10];
        v[3] = 0.9;
        v[7] = 0.9;
        let s = MiScores { scores: v, bins: 2 };
        let mask = select_top(&s, 1, KRatio::new(1.0).unwrap()).unwrap();
        assert_eq!(mask.indices, vec![3]);
        let mask = select_top(&s, 3, KRatio::new(1.0).unwrap()).unwrap();
        assert_eq!(mask.indices, vec![0, 3, 7]);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("1/2".parse::<KRatio>().unwrap().value(), 0.5);
        assert_eq!("16".parse::<KRatio>().unwrap().value(), 16.0);
        assert!("0".parse::<KRatio>().is_err());
        assert!("x".parse::<KRatio>().is_err());
    }

    #[test]
    fn mask_on_matrix() {
        let m = EmbeddingMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = FeatureMask::new(vec![1], 2).unwrap();
        assert_eq!(m.apply_mask(&mask).unwrap().data(), &[2.0, 4.0]);
        assert_eq!(m.apply_mask(&FeatureMask::full(2)).unwrap(), m);
        assert!(m.apply_mask(&FeatureMask::full(3)).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let mut mask = FeatureMask::new(vec![9, 0, 4], 12).unwrap();
        mask.bins = Some(5);
        mask.ratio = Some(0.5);
        let text = mask.to_text();
        assert_eq!(text, "# dim=12 m=3 bins=5 K=0.5\n0,4,9\n");
        assert_eq!(FeatureMask::from_text(&text).unwrap(), mask);
        assert!(FeatureMask::from_text("0,1\n").is_err());
    }
}
