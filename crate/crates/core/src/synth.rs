//! Synthetic Gaussian embedding datasets with known generating parameters.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedstore::{
    bind, write_embeddings, write_manifest, Dataset, EmbeddingMatrix, Manifest, Record, Split,
    TaskType,
};
use crate::error::{Error, Result};
use crate::seed::{rng, splitmix64};

const MEANS_STREAM: u64 = 0x4d45_414e_5300_0001;
const ROWS_STREAM: u64 = 0x524f_5753_0000_0002;
const GAINS_STREAM: u64 = 0x4741_494e_5300_0003;
const MC_STREAM: u64 = 0x4d43_0000_0000_0004;

/// Per-row multiplicative gain drawn log-uniformly from `[lo, hi]`.
///
/// With `dyadic` set the gain is a power of two (uniform over the integer
/// exponents inside the range), so scaling is exact in floating point and
/// row directions are preserved bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainJitter {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_true")]
    pub dyadic: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub dev_per_class: usize,
    pub eval_per_class: usize,
    pub mean_scale: f64,
    pub sigma: f64,
    #[serde(default)]
    pub gain_jitter: Option<GainJitter>,
    /// Trailing dimensions whose values do not depend on the class.
    #[serde(default)]
    pub noise_dims: usize,
    #[serde(default)]
    pub folds: Option<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 64,
            dev_per_class: 50,
            eval_per_class: 50,
            mean_scale: 1.0,
            sigma: 1.0,
            gain_jitter: None,
            noise_dims: 0,
            folds: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.classes == 0 || self.dim == 0 || self.dev_per_class == 0 || self.eval_per_class == 0
        {
            return bad("classes, dim and per-class row counts must be at least 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive and finite");
        }
        if !(self.mean_scale >= 0.0 && self.mean_scale.is_finite()) {
            return bad("mean_scale must be non-negative and finite");
        }
        if self.noise_dims > self.dim {
            return bad("noise_dims cannot exceed dim");
        }
        if self.folds == Some(0) {
            return bad("folds must be at least 1");
        }
        if let Some(g) = self.gain_jitter {
            if !(g.lo > 0.0 && g.lo <= g.hi && g.hi.is_finite()) {
                return bad("gain_jitter needs 0 < lo <= hi");
            }
            if g.dyadic && g.lo.log2().ceil() > g.hi.log2().floor() {
                return bad("gain_jitter range contains no power of two");
            }
        }
        Ok(())
    }

    pub fn informative_dims(&self) -> usize {
        self.dim - self.noise_dims
    }

    pub fn class_name(c: usize) -> String {
        format!("class{c:03}")
    }

    /// True class means, `classes × dim`, zero on the noise dimensions.
    pub fn means(&self) -> Vec<Vec<f64>> {
        let mut r = rng(splitmix64(self.seed ^ MEANS_STREAM));
        let informative = self.informative_dims();
        (0..self.classes)
            .map(|_| {
                let mut m = vec![0.0; self.dim];
                for v in &mut m[..informative] {
                    let z: f64 = r.sample(StandardNormal);
                    *v = self.mean_scale * z;
                }
                m
            })
            .collect()
    }
}

/// Map a uniform draw `u` in `[0, 1)` to a gain.
fn gain_from_uniform(jitter: &GainJitter, u: f64) -> f64 {
    if jitter.dyadic {
        let lo = jitter.lo.log2().ceil() as i32;
        let hi = jitter.hi.log2().floor() as i32;
        let e = lo + ((u * f64::from(hi - lo + 1)) as i32).min(hi - lo);
        2f64.powi(e)
    } else {
        let (a, b) = (jitter.lo.ln(), jitter.hi.ln());
        (a + (b - a) * u).exp()
    }
}

/// Generate a single-label dataset. Rows are grouped by class, dev rows first.
pub fn gen_gaussian(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let means = spec.means();
    let mut rows_rng = rng(splitmix64(spec.seed ^ ROWS_STREAM));
    let mut gains_rng = rng(splitmix64(spec.seed ^ GAINS_STREAM));
    let per_class = spec.dev_per_class + spec.eval_per_class;
    let mut data = Vec::with_capacity(spec.classes * per_class * spec.dim);
    let mut records = Vec::with_capacity(spec.classes * per_class);

    for (c, mean) in means.iter().enumerate() {
        let name = SynthSpec::class_name(c);
        for i in 0..per_class {
            // Always consume a gain so the base rows do not depend on jitter settings.
            let u: f64 = gains_rng.random();
            let gain = match &spec.gain_jitter {
                Some(j) => gain_from_uniform(j, u),
                None => 1.0,
            };
            for &m in mean {
                let z: f64 = rows_rng.sample(StandardNormal);
                data.push((gain * (m + spec.sigma * z)) as f32);
            }
            let (split, j) = if i < spec.dev_per_class {
                (Split::Dev, i)
            } else {
                (Split::Eval, i - spec.dev_per_class)
            };
            let id = format!("{name}-{split}-{j:04}");
            let fold = spec.folds.map(|f| (i as u32) % f);
            records.push(Record::new(id, &[name.as_str()], split, fold));
        }
    }
    let matrix = EmbeddingMatrix::new(records.len(), spec.dim, data)?;
    let header = serde_json::json!({ "synth": spec });
    let manifest = Manifest::new(TaskType::SingleLabel, records)?.with_header(header);
    bind(matrix, manifest)
}

/// Monte-Carlo estimate of the Bayes-optimal accuracy for `spec`.
///
/// Classes are equiprobable with shared isotropic covariance, so the optimal
/// rule is the nearest true mean in Euclidean distance.
pub fn bayes_accuracy(spec: &SynthSpec, n_mc: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if spec.gain_jitter.is_some() {
        return Err(Error::Config(
            "Bayes accuracy is only defined without gain jitter".into(),
        ));
    }
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let means = spec.means();
    let mut r = rng(splitmix64(seed ^ MC_STREAM));
    let mut x = vec![0.0; spec.dim];
    let mut hits = 0usize;
    for i in 0..n_mc {
        let c = i % spec.classes;
        for (v, &m) in x.iter_mut().zip(&means[c]) {
            let z: f64 = r.sample(StandardNormal);
            *v = m + spec.sigma * z;
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, mu) in means.iter().enumerate() {
            let d: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        hits += usize::from(best == c);
    }
    Ok(hits as f64 / n_mc as f64)
}

/// Paths of a dataset written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub embeddings: PathBuf,
    pub manifest: PathBuf,
}

pub fn write_synth(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<SynthFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ds = gen_gaussian(spec)?;
    let files = SynthFiles {
        embeddings: dir.join("embeddings.emb"),
        manifest: dir.join("manifest.jsonl"),
    };
    write_embeddings(ds.base_matrix(), &files.embeddings)?;
    write_manifest(ds.manifest(), &files.manifest)?;
    Ok(files)
}
