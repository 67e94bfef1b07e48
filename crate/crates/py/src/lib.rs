//! Python bindings. Configurations go in and reports come out as JSON strings,
//! so the Python side needs nothing beyond the `json` module.

use std::path::PathBuf;

use fewshot::eval::report::report_jsonl;
use fewshot::eval::{average_precision as ap, kfold_run, run_once, sweep as run_sweep};
use fewshot::prototypes::{build_prototypes, load_prototypes, save_prototypes};
use fewshot::synth::{bayes_accuracy as bayes, gen_gaussian, write_synth as write_files};
use fewshot::{
    KRatio, Metric, RunConfig, SupportSpec, SweepAxis, SynthSpec, TaskType, WeightScheme,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: fewshot::Error) -> PyErr {
    match e {
        fewshot::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn config(json: Option<&str>) -> PyResult<RunConfig> {
    match json {
        None => Ok(RunConfig::default()),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("bad run config: {e}"))),
    }
}

fn synth_spec(json: &str) -> PyResult<SynthSpec> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("bad synth spec: {e}")))
}

/// Embeddings bound to a manifest.
#[pyclass(frozen)]
struct Dataset {
    inner: fewshot::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (embeddings, manifest, task = "single-label"))]
    fn load(embeddings: PathBuf, manifest: PathBuf, task: &str) -> PyResult<Self> {
        let task: TaskType = parse(task)?;
        let inner = fewshot::load_dataset(embeddings, manifest, task).map_err(err)?;
        Ok(Self { inner })
    }

    /// Generate a Gaussian dataset from a JSON spec.
    #[staticmethod]
    fn synth(spec: &str) -> PyResult<Self> {
        let inner = gen_gaussian(&synth_spec(spec)?).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.vocab().classes().to_vec()
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task().to_string()
    }

    fn embedding(&self, pos: usize) -> PyResult<Vec<f32>> {
        if pos >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {pos} out of range")));
        }
        Ok(self.inner.embedding(pos).to_vec())
    }
}

/// Class prototypes, in the vocabulary order of the dataset they belong to.
#[pyclass(frozen)]
struct Prototypes {
    inner: fewshot::PrototypeSet,
}

#[pymethods]
impl Prototypes {
    /// Average a random support of `k` rows per class from the dev split.
    #[staticmethod]
    #[pyo3(signature = (dataset, k, scheme = "uniform", seed = 0))]
    fn build(dataset: &Dataset, k: usize, scheme: &str, seed: u64) -> PyResult<Self> {
        let ds = &dataset.inner;
        let scheme: WeightScheme = parse(scheme)?;
        let strategy = RunConfig::default().strategy_for(ds.task());
        let spec = SupportSpec::new(k, strategy, seed).map_err(err)?;
        let pool = ds.positions_in_split(fewshot::Split::Dev);
        let support = fewshot::sampler::sample(ds, &pool, &spec).map_err(err)?;
        let inner = build_prototypes(ds, &support, scheme).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf, dataset: &Dataset) -> PyResult<Self> {
        let inner = load_prototypes(path, dataset.inner.vocab()).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_prototypes(&self.inner, path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.n_classes()
    }

    fn vector(&self, class: usize) -> PyResult<Vec<f64>> {
        if class >= self.inner.n_classes() {
            return Err(PyValueError::new_err(format!("class {class} out of range")));
        }
        Ok(self.inner.vector(class).to_vec())
    }

    /// Distance from `query` to every prototype.
    #[pyo3(signature = (query, metric = "cosine"))]
    fn distances(&self, query: Vec<f32>, metric: &str) -> PyResult<Vec<f64>> {
        let metric: Metric = parse(metric)?;
        self.inner.score(&query, metric).map_err(err)
    }

    /// Index of the nearest prototype; ties go to the lower index.
    #[pyo3(signature = (query, metric = "cosine"))]
    fn classify(&self, query: Vec<f32>, metric: &str) -> PyResult<usize> {
        let metric: Metric = parse(metric)?;
        self.inner.classify(&query, metric).map_err(err)
    }
}

/// One evaluation; returns the report as a JSON line.
#[pyfunction]
#[pyo3(signature = (dataset, config = None, prototypes = None))]
fn run(
    dataset: &Dataset,
    config: Option<&str>,
    prototypes: Option<&Prototypes>,
) -> PyResult<String> {
    let cfg = self::config(config)?;
    let report = run_once(&dataset.inner, &cfg, prototypes.map(|p| &p.inner)).map_err(err)?;
    Ok(report_jsonl(&report, None))
}

/// Repeated runs over an axis (`"support_size"` or `"K"`); returns the sweep as one JSON document.
#[pyfunction]
#[pyo3(signature = (dataset, axis, values, runs, master_seed = 0, config = None, prototypes = None))]
fn sweep(
    dataset: &Dataset,
    axis: &str,
    values: Vec<f64>,
    runs: usize,
    master_seed: u64,
    config: Option<&str>,
    prototypes: Option<&Prototypes>,
) -> PyResult<String> {
    let axis = match axis {
        "support_size" | "support-size" | "k" => {
            let sizes = values
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(PyValueError::new_err(format!(
                            "support size must be a positive integer, got {v}"
                        )))
                    }
                })
                .collect::<PyResult<Vec<usize>>>()?;
            SweepAxis::SupportSize(sizes)
        }
        "K" | "ratio" => {
            for &v in &values {
                KRatio::new(v).map_err(err)?;
            }
            SweepAxis::Ratio(values)
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown sweep axis '{other}'"
            )))
        }
    };
    let cfg = self::config(config)?;
    let result = run_sweep(
        &dataset.inner,
        &cfg,
        &axis,
        runs,
        master_seed,
        prototypes.map(|p| &p.inner),
    )
    .map_err(err)?;
    serde_json::to_string(&result).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Leave-one-fold-out evaluation; returns `{"folds": [report...], "mean": x}` as JSON.
#[pyfunction]
#[pyo3(signature = (dataset, config = None))]
fn kfold(dataset: &Dataset, config: Option<&str>) -> PyResult<String> {
    let cfg = self::config(config)?;
    let result = kfold_run(&dataset.inner, &cfg, None).map_err(err)?;
    let folds: Vec<serde_json::Value> = result
        .folds
        .iter()
        .map(|f| {
            let mut v = serde_json::to_value(&f.artifacts.report).expect("report serializes");
            v["fold"] = f.fold.into();
            v
        })
        .collect();
    Ok(serde_json::json!({ "folds": folds, "mean": result.mean }).to_string())
}

#[pyfunction]
fn average_precision(scores: Vec<f64>, relevance: Vec<bool>) -> PyResult<f64> {
    ap(&scores, &relevance).map_err(err)
}

/// Monte Carlo accuracy of the nearest-true-mean rule.
#[pyfunction]
#[pyo3(signature = (spec, n_mc = 100_000, seed = 0))]
fn bayes_accuracy(spec: &str, n_mc: usize, seed: u64) -> PyResult<f64> {
    bayes(&synth_spec(spec)?, n_mc, seed).map_err(err)
}

/// Write a synthetic dataset; returns `(embeddings, manifest)` paths.
#[pyfunction]
fn write_synth(spec: &str, dir: PathBuf) -> PyResult<(PathBuf, PathBuf)> {
    let files = write_files(&synth_spec(spec)?, dir).map_err(err)?;
    Ok((files.embeddings, files.manifest))
}

#[pymodule]
fn pyfewshot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Prototypes>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(kfold, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(write_synth, m)?)?;
    Ok(())
}
