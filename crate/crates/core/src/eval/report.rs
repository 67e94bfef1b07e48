//! Serialization of reports to line-delimited JSON and CSV, and atomic file output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::harness::{EvalReport, KfoldResult, SweepResult};
use crate::embedstore::ClassVocab;
use crate::error::{Error, Result};
pub use crate::fsutil::write_atomic;

/// An output directory; every file is written atomically.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.root.join(name);
        write_atomic(&path, contents.as_ref())?;
        Ok(path)
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Attach `inputs` (dataset paths and the like) under an `inputs` key.
fn with_inputs(mut value: Value, inputs: Option<&Value>) -> Value {
    if let (Some(inputs), Value::Object(map)) = (inputs, &mut value) {
        map.insert("inputs".into(), inputs.clone());
    }
    value
}

pub fn report_jsonl(report: &EvalReport, inputs: Option<&Value>) -> String {
    let v = serde_json::to_value(report).expect("report serializes");
    json_line(&with_inputs(v, inputs))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const RUN_HEADER: [&str; 13] = [
    "run", "method", "scheme", "metric", "k", "K", "bins", "lambda", "seed", "measure", "value",
    "n_eval", "features",
];

fn run_row(run: String, r: &EvalReport) -> Vec<String> {
    let c = &r.config;
    vec![
        run,
        c.method.to_string(),
        c.scheme.to_string(),
        c.metric.to_string(),
        c.k.to_string(),
        opt(c.ratio),
        opt(c.bins),
        c.lambda.to_string(),
        c.seed.to_string(),
        r.outcome.metric_name().to_string(),
        r.metric().to_string(),
        r.outcome.n_eval.to_string(),
        r.outcome.features.to_string(),
    ]
}

/// One row per report.
pub fn runs_csv(reports: &[EvalReport]) -> String {
    csv_string(
        &RUN_HEADER,
        reports
            .iter()
            .enumerate()
            .map(|(i, r)| run_row(i.to_string(), r)),
    )
}

/// `class,ap` with an empty cell for classes excluded from the mean.
pub fn per_class_ap_csv(report: &EvalReport, vocab: &ClassVocab) -> Option<String> {
    let aps = report.outcome.per_class_ap.as_ref()?;
    Some(csv_string(
        &["class", "ap"],
        aps.iter()
            .enumerate()
            .map(|(c, ap)| vec![vocab.name(c).to_string(), opt(*ap)]),
    ))
}

/// Plot-ready table: one row per swept value.
pub fn sweep_csv(result: &SweepResult) -> String {
    csv_string(
        &["value", "mean", "std_sample", "runs"],
        result.points.iter().map(|p| {
            vec![
                opt(p.value),
                p.mean.to_string(),
                opt(p.std),
                p.runs.len().to_string(),
            ]
        }),
    )
}

/// Every individual run of a sweep with its derived seed.
pub fn sweep_runs_csv(result: &SweepResult) -> String {
    csv_string(
        &["value", "run", "seed", "metric"],
        result.points.iter().flat_map(|p| {
            p.runs.iter().map(move |r| {
                vec![
                    opt(p.value),
                    r.run.to_string(),
                    r.seed.to_string(),
                    r.metric.to_string(),
                ]
            })
        }),
    )
}

pub fn sweep_jsonl(result: &SweepResult, inputs: Option<&Value>) -> String {
    let head = json!({
        "axis": result.axis,
        "runs": result.runs,
        "master_seed": result.master_seed,
        "config": result.config,
    });
    let mut out = json_line(&with_inputs(head, inputs));
    for p in &result.points {
        out.push_str(&json_line(p));
    }
    out
}

pub fn kfold_csv(result: &KfoldResult) -> String {
    let mut rows: Vec<Vec<String>> = result
        .folds
        .iter()
        .map(|f| {
            let o = &f.artifacts.report.outcome;
            vec![
                f.fold.to_string(),
                o.metric().to_string(),
                o.n_eval.to_string(),
                o.n_support.to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        result.mean.to_string(),
        String::new(),
        String::new(),
    ]);
    csv_string(&["fold", "metric", "n_eval", "n_support"], rows)
}

pub fn kfold_jsonl(result: &KfoldResult, inputs: Option<&Value>) -> String {
    let mut out = String::new();
    for f in &result.folds {
        let mut v = serde_json::to_value(&f.artifacts.report).expect("report serializes");
        if let Value::Object(map) = &mut v {
            map.insert("fold".into(), json!(f.fold));
        }
        out.push_str(&json_line(&with_inputs(v, inputs)));
    }
    out.push_str(&json_line(
        &json!({ "folds": result.folds.len(), "mean": result.mean }),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path().join("nested")).unwrap();
        out.write("a.txt", "first").unwrap();
        let p = out.write("a.txt", "second").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "second");
        let names: Vec<_> = std::fs::read_dir(out.path()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn csv_quotes_awkward_class_names() {
        let s = csv_string(
            &["class", "ap"],
            vec![vec!["a,b".to_string(), "0.5".to_string()]],
        );
        assert_eq!(s, "class,ap\n\"a,b\",0.5\n");
    }
}
