#![allow(dead_code)]

use fewshot::embedstore::{bind, Dataset, EmbeddingMatrix, Manifest, Record, Split, TaskType};
use fewshot::SupportSets;

pub fn class_name(c: usize) -> String {
    format!("c{c}")
}

/// Single-label dataset; row `i` gets class `classes[i]` and split `splits[i]`.
pub fn single_label(rows: &[Vec<f32>], classes: &[usize], splits: &[Split]) -> Dataset {
    let l = rows.first().map_or(1, Vec::len);
    let matrix = EmbeddingMatrix::from_rows(rows, l).unwrap();
    let records = classes
        .iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (&c, &s))| Record::new(format!("r{i:05}"), &[class_name(c).as_str()], s, None))
        .collect();
    bind(
        matrix,
        Manifest::new(TaskType::SingleLabel, records).unwrap(),
    )
    .unwrap()
}

pub fn multi_label(rows: &[Vec<f32>], labels: &[Vec<usize>], splits: &[Split]) -> Dataset {
    let l = rows.first().map_or(1, Vec::len);
    let matrix = EmbeddingMatrix::from_rows(rows, l).unwrap();
    let records = labels
        .iter()
        .zip(splits)
        .enumerate()
        .map(|(i, (ls, &s))| {
            let names: Vec<String> = ls.iter().map(|&c| class_name(c)).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            Record::new(format!("r{i:05}"), &refs, s, None)
        })
        .collect();
    bind(
        matrix,
        Manifest::new(TaskType::MultiLabel, records).unwrap(),
    )
    .unwrap()
}

/// Every row of each class as its support.
pub fn all_rows(ds: &Dataset) -> SupportSets {
    let lists = (0..ds.vocab().len())
        .map(|c| (0..ds.len()).filter(|&p| ds.has_label(p, c)).collect())
        .collect();
    SupportSets::from_lists(lists)
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[col][j];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Average precision straight from its definition, quadratic in the item count.
pub fn brute_ap(scores: &[f64], relevant: &[bool]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| {
        1 + (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let positives: Vec<usize> = (0..n).filter(|&i| relevant[i]).collect();
    let mut total = 0.0;
    for &i in &positives {
        let ri = rank(i);
        let hits = positives.iter().filter(|&&j| rank(j) <= ri).count();
        total += hits as f64 / ri as f64;
    }
    total / positives.len() as f64
}

/// Norm-wise relative error `‖a − b‖ / ‖b‖` (zero when both are zero).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm
    }
}
