use serde::Serialize;

use crate::embedstore::ClassVocab;
use crate::error::{Error, Result};

pub fn accuracy(preds: &[usize], truths: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), truths.len())?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    if a == 0 {
        return Err(Error::EmptyInput("no items to evaluate".into()));
    }
    Ok(())
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// CSV with class names as the header row and first column.
    pub fn to_csv(&self, vocab: &ClassVocab) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\pred".to_string()];
        header.extend(vocab.classes().iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (c, row) in self.counts.iter().enumerate() {
            let mut rec = vec![vocab.name(c).to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

pub fn confusion(preds: &[usize], truths: &[usize], vocab: &ClassVocab) -> Result<ConfusionMatrix> {
    check_lengths(preds.len(), truths.len())?;
    let n = vocab.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= n || t >= n {
            return Err(Error::IndexOutOfRange {
                index: p.max(t),
                len: n,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Non-interpolated average precision.
///
/// Items are ranked by descending score with ties kept in original order;
/// AP is the mean of precision@rank over the ranks of relevant items.
pub fn average_precision(scores: &[f64], relevance: &[bool]) -> Result<f64> {
    if scores.len() != relevance.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: relevance.len(),
        });
    }
    let positives = relevance.iter().filter(|&&r| r).count();
    if positives == 0 {
        return Err(Error::UndefinedAp);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevance[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    /// `None` for classes without any positive item.
    pub per_class_ap: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

/// Mean AP over classes (columns) with at least one positive item.
pub fn map_score(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MapResult> {
    check_lengths(scores.len(), labels.len())?;
    let n_classes = scores[0].len();
    for (s, l) in scores.iter().zip(labels) {
        if s.len() != n_classes || l.len() != n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes,
                got: s.len().min(l.len()),
            });
        }
    }
    let mut per_class_ap = Vec::with_capacity(n_classes);
    let mut excluded = Vec::new();
    for c in 0..n_classes {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let rel: Vec<bool> = labels.iter().map(|l| l[c]).collect();
        match average_precision(&col, &rel) {
            Ok(ap) => per_class_ap.push(Some(ap)),
            Err(Error::UndefinedAp) => {
                per_class_ap.push(None);
                excluded.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedAp);
    }
    let map = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MapResult {
        map,
        per_class_ap,
        excluded,
    })
}
