//! Experiment protocols: single runs, k-fold cross-validation, repeated runs
//! and parameter sweeps.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, confusion, map_score, ConfusionMatrix};
use crate::embedstore::{Dataset, Split, TaskType};
use crate::error::{Error, Result};
use crate::featselect::{default_bins, mi_scores, select_top, ApplyMask, FeatureMask, KRatio};
use crate::lda::{LdaModel, DEFAULT_LAMBDA};
use crate::prototypes::{argmax, argmin, build_prototypes, Metric, PrototypeSet, WeightScheme};
use crate::sampler::{self, Strategy, SupportSets, SupportSpec};
use crate::seed;
use crate::training::TrainingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Method {
    #[default]
    #[serde(rename = "AVG")]
    Avg,
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "MI+AVG")]
    MiAvg,
    #[serde(rename = "MI+LDA")]
    MiLda,
    #[serde(rename = "ZS-external")]
    ZeroShot,
}

impl Method {
    pub fn uses_mi(self) -> bool {
        matches!(self, Method::MiAvg | Method::MiLda)
    }

    pub fn uses_lda(self) -> bool {
        matches!(self, Method::Lda | Method::MiLda)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Avg => "AVG",
            Method::Lda => "LDA",
            Method::MiAvg => "MI+AVG",
            Method::MiLda => "MI+LDA",
            Method::ZeroShot => "ZS-external",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "AVG" => Ok(Method::Avg),
            "LDA" => Ok(Method::Lda),
            "MI+AVG" | "MI-AVG" => Ok(Method::MiAvg),
            "MI+LDA" | "MI-LDA" => Ok(Method::MiLda),
            "ZS" | "ZS-EXTERNAL" | "ZERO-SHOT" => Ok(Method::ZeroShot),
            _ => Err(format!("unknown method '{s}'")),
        }
    }
}

/// Parameters of one few-shot (or zero-shot) evaluation. Missing keys take their defaults when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub scheme: WeightScheme,
    pub metric: Metric,
    /// Support size per class.
    pub k: usize,
    /// MI feature ratio `K`; required by the MI methods and rejected otherwise.
    pub ratio: Option<f64>,
    /// MI histogram bins; `None` selects the default for the support size.
    pub bins: Option<usize>,
    pub lambda: f64,
    pub seed: u64,
    /// `None` picks uniform sampling for single-label data and least-overlap for multi-label.
    pub strategy: Option<Strategy>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Avg,
            scheme: WeightScheme::Uniform,
            metric: Metric::Cosine,
            k: 10,
            ratio: None,
            bins: None,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            strategy: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        match (self.method.uses_mi(), self.ratio) {
            (true, None) => {
                return Err(Error::Config(format!(
                    "method {} requires a K ratio",
                    self.method
                )));
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!(
                    "K ratio only applies to MI methods, not {}",
                    self.method
                )));
            }
            (true, Some(k)) => {
                KRatio::new(k)?;
            }
            _ => {}
        }
        if self.bins.is_some_and(|b| b < 2) {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }

    pub fn strategy_for(&self, task: TaskType) -> Strategy {
        self.strategy.unwrap_or(match task {
            TaskType::SingleLabel => Strategy::UniformRandom,
            TaskType::MultiLabel => Strategy::LeastOverlap,
        })
    }
}

/// Metric outputs of a run, independent of how the run was configured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub task: TaskType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_ap: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub excluded_classes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    pub n_eval: usize,
    pub n_support: usize,
    pub features: usize,
    pub support_digest: String,
}

impl Outcome {
    /// Accuracy for single-label tasks, mAP for multi-label ones.
    pub fn metric(&self) -> f64 {
        self.accuracy
            .or(self.map)
            .expect("one metric is always present")
    }

    pub fn metric_name(&self) -> &'static str {
        match self.task {
            TaskType::SingleLabel => "accuracy",
            TaskType::MultiLabel => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: RunConfig,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl EvalReport {
    pub fn metric(&self) -> f64 {
        self.outcome.metric()
    }
}

/// A report together with the intermediate state needed to audit it.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: EvalReport,
    pub support: Option<SupportSets>,
    pub mask: Option<FeatureMask>,
}

enum Scorer {
    Prototypes(PrototypeSet, Metric),
    Lda(LdaModel),
}

impl Scorer {
    /// Ranking scores (higher is better) and the predicted class.
    fn evaluate(&self, e: &[f32]) -> Result<(Vec<f64>, usize)> {
        match self {
            Scorer::Prototypes(p, metric) => {
                let d = p.score(e, *metric)?;
                let pred = argmin(&d);
                Ok((d.into_iter().map(|v| -v).collect(), pred))
            }
            Scorer::Lda(model) => {
                let s = model.discriminants_f32(e)?;
                let pred = argmax(&s);
                Ok((s, pred))
            }
        }
    }
}

/// Sample support from the dev split, fit the configured pipeline and score the eval split.
pub fn run_once(
    dataset: &Dataset,
    config: &RunConfig,
    external: Option<&PrototypeSet>,
) -> Result<EvalReport> {
    let pool = dataset.positions_in_split(Split::Dev);
    let eval = dataset.positions_in_split(Split::Eval);
    run_split(dataset, &pool, &eval, config, external).map(|a| a.report)
}

/// Like [`run_once`] with explicit support-pool and evaluation positions.
pub fn run_split(
    dataset: &Dataset,
    pool: &[usize],
    eval: &[usize],
    config: &RunConfig,
    external: Option<&PrototypeSet>,
) -> Result<RunArtifacts> {
    config.validate()?;
    if eval.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let task = dataset.task();
    let fitted = if config.method == Method::ZeroShot {
        zero_shot(dataset, config, external)?
    } else {
        few_shot(dataset, pool, config)?
    };

    let scored: Vec<(Vec<f64>, usize)> = eval
        .par_iter()
        .map(|&p| fitted.scorer.evaluate(fitted.view.embedding(p)))
        .collect::<Result<_>>()?;
    let (n_support, digest) = match &fitted.support {
        Some(s) => (s.iter().map(|(_, r)| r.len()).sum(), s.digest(dataset)),
        None => (0, String::new()),
    };
    let outcome = finish(
        dataset,
        eval,
        scored,
        task,
        fitted.view.dim(),
        n_support,
        digest,
    )?;
    Ok(RunArtifacts {
        report: EvalReport {
            config: RunConfig {
                strategy: Some(config.strategy_for(task)),
                ..config.clone()
            },
            outcome,
        },
        support: fitted.support,
        mask: fitted.mask,
    })
}

struct Fitted {
    /// The dataset as the scorer sees it (column-reduced under MI).
    view: Dataset,
    scorer: Scorer,
    support: Option<SupportSets>,
    mask: Option<FeatureMask>,
}

fn zero_shot(
    dataset: &Dataset,
    config: &RunConfig,
    external: Option<&PrototypeSet>,
) -> Result<Fitted> {
    let protos = external.ok_or_else(|| {
        Error::Config("zero-shot method requires externally supplied prototypes".into())
    })?;
    if protos.vocab() != dataset.vocab() {
        return Err(Error::Config(
            "prototype vocabulary differs from the dataset's".into(),
        ));
    }
    if protos.dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: protos.dim(),
        });
    }
    Ok(Fitted {
        view: dataset.clone(),
        scorer: Scorer::Prototypes(protos.clone(), config.metric),
        support: None,
        mask: None,
    })
}

fn few_shot(dataset: &Dataset, pool: &[usize], config: &RunConfig) -> Result<Fitted> {
    let spec = SupportSpec::new(config.k, config.strategy_for(dataset.task()), config.seed)?;
    let support = sampler::sample(dataset, pool, &spec)?;

    let (view, mask) = if config.method.uses_mi() {
        let train = TrainingSet::from_support(dataset, &support)?;
        let bins = config
            .bins
            .unwrap_or_else(|| default_bins(support.min_size()));
        let scores = mi_scores(&train, bins)?;
        let ratio = KRatio::new(config.ratio.expect("validated"))?;
        let mask = select_top(&scores, dataset.vocab().len(), ratio)?;
        (dataset.apply_mask(&mask)?, Some(mask))
    } else {
        (dataset.clone(), None)
    };

    let scorer = if config.method.uses_lda() {
        let train = TrainingSet::from_support(&view, &support)?;
        Scorer::Lda(LdaModel::fit(&train, config.lambda)?)
    } else {
        Scorer::Prototypes(
            build_prototypes(&view, &support, config.scheme)?,
            config.metric,
        )
    };
    Ok(Fitted {
        view,
        scorer,
        support: Some(support),
        mask,
    })
}

fn finish(
    dataset: &Dataset,
    eval: &[usize],
    scored: Vec<(Vec<f64>, usize)>,
    task: TaskType,
    features: usize,
    n_support: usize,
    support_digest: String,
) -> Result<Outcome> {
    let mut outcome = Outcome {
        task,
        accuracy: None,
        map: None,
        per_class_ap: None,
        excluded_classes: Vec::new(),
        confusion: None,
        n_eval: eval.len(),
        n_support,
        features,
        support_digest,
    };
    match task {
        TaskType::SingleLabel => {
            let preds: Vec<usize> = scored.iter().map(|(_, p)| *p).collect();
            let truths: Vec<usize> = eval.iter().map(|&p| dataset.labels(p)[0]).collect();
            outcome.accuracy = Some(accuracy(&preds, &truths)?);
            outcome.confusion = Some(confusion(&preds, &truths, dataset.vocab())?);
        }
        TaskType::MultiLabel => {
            let n_classes = dataset.vocab().len();
            let labels: Vec<Vec<bool>> = eval
                .iter()
                .map(|&p| (0..n_classes).map(|c| dataset.has_label(p, c)).collect())
                .collect();
            let scores: Vec<Vec<f64>> = scored.into_iter().map(|(s, _)| s).collect();
            let r = map_score(&scores, &labels)?;
            if !r.excluded.is_empty() {
                log::info!(
                    "{} classes without eval positives excluded from mAP",
                    r.excluded.len()
                );
            }
            outcome.excluded_classes = r
                .excluded
                .iter()
                .map(|&c| dataset.vocab().name(c).to_string())
                .collect();
            outcome.map = Some(r.map);
            outcome.per_class_ap = Some(r.per_class_ap);
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: u32,
    pub artifacts: RunArtifacts,
}

#[derive(Debug, Clone)]
pub struct KfoldResult {
    pub folds: Vec<FoldRun>,
    pub mean: f64,
}

/// Cross-validation over the manifest's folds: each fold is evaluated with
/// support drawn from all other folds (regardless of dev/eval split).
pub fn kfold_run(
    dataset: &Dataset,
    config: &RunConfig,
    external: Option<&PrototypeSet>,
) -> Result<KfoldResult> {
    let mut folds = BTreeSet::new();
    for p in 0..dataset.len() {
        let r = dataset.record(p);
        match r.fold {
            Some(f) => {
                folds.insert(f);
            }
            None => return Err(Error::MissingFold { id: r.id.clone() }),
        }
    }
    if folds.is_empty() {
        return Err(Error::EmptyInput("dataset has no records".into()));
    }
    let folds: Vec<u32> = folds.into_iter().collect();
    let runs: Vec<FoldRun> = folds
        .par_iter()
        .map(|&f| {
            let (eval, pool): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&p| dataset.record(p).fold == Some(f));
            run_split(dataset, &pool, &eval, config, external)
                .map(|artifacts| FoldRun { fold: f, artifacts })
        })
        .collect::<Result<_>>()?;
    let mean = runs
        .iter()
        .map(|r| r.artifacts.report.metric())
        .sum::<f64>()
        / runs.len() as f64;
    Ok(KfoldResult { folds: runs, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Swept parameter value; `None` for a bare repeated-runs call.
    pub value: Option<f64>,
    pub mean: f64,
    /// Sample standard deviation (divisor `R − 1`); absent when `R = 1`.
    pub std: Option<f64>,
    pub runs: Vec<RunRecord>,
}

/// Mean and sample standard deviation over `values`.
///
/// The spread is accumulated relative to the first value, so identical
/// values always give a deviation of exactly zero.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        let v0 = values[0];
        let (s, ss) = values.iter().fold((0.0, 0.0), |(s, ss), v| {
            (s + (v - v0), ss + (v - v0) * (v - v0))
        });
        ((ss - s * s / n) / (n - 1.0)).max(0.0).sqrt()
    });
    (mean, std)
}

/// `runs` independent evaluations; run `r` uses seed [`seed::run_seed`]`(master_seed, r)`.
pub fn repeated_runs(
    dataset: &Dataset,
    config: &RunConfig,
    runs: usize,
    master_seed: u64,
    external: Option<&PrototypeSet>,
) -> Result<SweepPoint> {
    if runs == 0 {
        return Err(Error::Config("number of runs must be at least 1".into()));
    }
    let records: Vec<RunRecord> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = seed::run_seed(master_seed, r);
            let cfg = RunConfig {
                seed,
                ..config.clone()
            };
            run_once(dataset, &cfg, external).map(|rep| RunRecord {
                run: r,
                seed,
                metric: rep.metric(),
            })
        })
        .collect::<Result<_>>()?;
    let metrics: Vec<f64> = records.iter().map(|r| r.metric).collect();
    let (mean, std) = mean_std(&metrics);
    Ok(SweepPoint {
        value: None,
        mean,
        std,
        runs: records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum SweepAxis {
    SupportSize(Vec<usize>),
    Ratio(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SupportSize(_) => "support_size",
            SweepAxis::Ratio(_) => "K",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::SupportSize(v) => v.len(),
            SweepAxis::Ratio(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn configs(&self, base: &RunConfig) -> Vec<(f64, RunConfig)> {
        match self {
            SweepAxis::SupportSize(v) => v
                .iter()
                .map(|&k| (k as f64, RunConfig { k, ..base.clone() }))
                .collect(),
            SweepAxis::Ratio(v) => v
                .iter()
                .map(|&r| {
                    (
                        r,
                        RunConfig {
                            ratio: Some(r),
                            ..base.clone()
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: String,
    pub runs: usize,
    pub master_seed: u64,
    pub config: RunConfig,
    pub points: Vec<SweepPoint>,
}

/// [`repeated_runs`] at each axis value, all sharing `master_seed`.
pub fn sweep(
    dataset: &Dataset,
    config: &RunConfig,
    axis: &SweepAxis,
    runs: usize,
    master_seed: u64,
    external: Option<&PrototypeSet>,
) -> Result<SweepResult> {
    if axis.is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    let configs = axis.configs(config);
    for (_, c) in &configs {
        c.validate()?;
    }
    let points = configs
        .par_iter()
        .map(|(value, cfg)| {
            repeated_runs(dataset, cfg, runs, master_seed, external).map(|mut p| {
                p.value = Some(*value);
                p
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        axis: axis.name().to_string(),
        runs,
        master_seed,
        config: config.clone(),
        points,
    })
}
