//! Per-class support-set selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedstore::{Dataset, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    UniformRandom,
    LeastOverlap,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" | "uniform-random" => Ok(Strategy::UniformRandom),
            "least-overlap" => Ok(Strategy::LeastOverlap),
            other => Err(format!("unknown sampling strategy '{other}'")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::UniformRandom => "uniform-random",
            Strategy::LeastOverlap => "least-overlap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportSpec {
    pub k: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

impl SupportSpec {
    pub fn new(k: usize, strategy: Strategy, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("support size k must be at least 1".into()));
        }
        Ok(Self { k, strategy, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Shortfall {
    pub class: usize,
    pub available: usize,
}

/// Per-class support lists: positions into the dataset the sets were drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSets {
    per_class: Vec<Vec<usize>>,
    shortfalls: Vec<Shortfall>,
}

impl SupportSets {
    pub fn from_lists(per_class: Vec<Vec<usize>>) -> Self {
        Self {
            per_class,
            shortfalls: Vec::new(),
        }
    }

    pub fn class(&self, c: usize) -> &[usize] {
        &self.per_class[c]
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.per_class
            .iter()
            .enumerate()
            .map(|(c, v)| (c, v.as_slice()))
    }

    /// Classes that had fewer than `k` candidates and took all of them.
    pub fn shortfalls(&self) -> &[Shortfall] {
        &self.shortfalls
    }

    pub fn min_size(&self) -> usize {
        self.per_class.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// SHA-256 over the class-tagged record ids, hex encoded.
    pub fn digest(&self, dataset: &Dataset) -> String {
        let mut h = Sha256::new();
        for (c, rows) in self.iter() {
            h.update(dataset.vocab().name(c).as_bytes());
            h.update([0u8]);
            for &p in rows {
                h.update(dataset.record(p).id.as_bytes());
                h.update([0u8]);
            }
            h.update([0xffu8]);
        }
        hex::encode(h.finalize())
    }

    /// One line per class: `{"class": name, "ids": [...]}`.
    pub fn to_jsonl(&self, dataset: &Dataset) -> String {
        let mut out = String::new();
        for (c, rows) in self.iter() {
            let ids: Vec<&str> = rows
                .iter()
                .map(|&p| dataset.record(p).id.as_str())
                .collect();
            let line = serde_json::json!({ "class": dataset.vocab().name(c), "ids": ids });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Candidate positions for class `c` within `pool` (ascending).
fn candidates(dataset: &Dataset, pool: &[usize], c: usize) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&p| dataset.has_label(p, c))
        .collect()
}

fn per_class<F>(
    dataset: &Dataset,
    pool: &[usize],
    spec: &SupportSpec,
    mut pick: F,
) -> Result<SupportSets>
where
    F: FnMut(usize, Vec<usize>) -> Vec<usize>,
{
    let mut per_class = Vec::with_capacity(dataset.vocab().len());
    let mut shortfalls = Vec::new();
    for c in 0..dataset.vocab().len() {
        let cands = candidates(dataset, pool, c);
        if cands.is_empty() {
            return Err(Error::EmptyClass {
                class: dataset.vocab().name(c).to_string(),
            });
        }
        if cands.len() < spec.k {
            log::warn!(
                "class '{}' has {} candidates, fewer than k={}; using all",
                dataset.vocab().name(c),
                cands.len(),
                spec.k
            );
            shortfalls.push(Shortfall {
                class: c,
                available: cands.len(),
            });
        }
        let mut chosen = pick(c, cands);
        chosen.sort_unstable();
        per_class.push(chosen);
    }
    Ok(SupportSets {
        per_class,
        shortfalls,
    })
}

/// Uniform sampling without replacement from the dataset's dev rows.
pub fn sample_uniform(dataset: &Dataset, spec: &SupportSpec) -> Result<SupportSets> {
    sample_uniform_in(dataset, &dataset.positions_in_split(Split::Dev), spec)
}

/// Uniform sampling restricted to `pool` (positions into `dataset`, ascending).
///
/// Each class draws from its own stream seeded by `(spec.seed, class index)`,
/// so the result for one class never depends on any other class.
pub fn sample_uniform_in(
    dataset: &Dataset,
    pool: &[usize],
    spec: &SupportSpec,
) -> Result<SupportSets> {
    per_class(dataset, pool, spec, |c, cands| {
        if cands.len() <= spec.k {
            return cands;
        }
        let mut rng = seed::rng(seed::class_seed(spec.seed, c));
        index::sample(&mut rng, cands.len(), spec.k)
            .into_iter()
            .map(|i| cands[i])
            .collect()
    })
}

/// Least-class-overlap selection from the dataset's dev rows.
pub fn sample_least_overlap(dataset: &Dataset, spec: &SupportSpec) -> Result<SupportSets> {
    sample_least_overlap_in(dataset, &dataset.positions_in_split(Split::Dev), spec)
}

/// Candidates carrying class `c` are ordered by label-set size, then id; the first `k` win.
pub fn sample_least_overlap_in(
    dataset: &Dataset,
    pool: &[usize],
    spec: &SupportSpec,
) -> Result<SupportSets> {
    per_class(dataset, pool, spec, |_, mut cands| {
        cands.sort_by(|&a, &b| {
            dataset
                .labels(a)
                .len()
                .cmp(&dataset.labels(b).len())
                .then_with(|| dataset.record(a).id.cmp(&dataset.record(b).id))
        });
        cands.truncate(spec.k);
        cands
    })
}

pub fn sample(dataset: &Dataset, pool: &[usize], spec: &SupportSpec) -> Result<SupportSets> {
    match spec.strategy {
        Strategy::UniformRandom => sample_uniform_in(dataset, pool, spec),
        Strategy::LeastOverlap => sample_least_overlap_in(dataset, pool, spec),
    }
}
