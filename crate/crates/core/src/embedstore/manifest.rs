//! Line-delimited record manifest.
//!
//! One JSON object per line: `{"id": ..., "labels": [...], "split": "dev"|"eval", "fold": n}`.
//! `fold` is optional and blank lines are ignored. The first non-blank line
//! may instead be a metadata object of the form `{"header": {...}}`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            other => Err(format!("unknown split '{other}', expected 'dev' or 'eval'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskType {
    #[default]
    SingleLabel,
    MultiLabel,
}

impl FromStr for TaskType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "single-label" | "single" => Ok(TaskType::SingleLabel),
            "multi-label" | "multi" => Ok(TaskType::MultiLabel),
            other => Err(format!("unknown task type '{other}'")),
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskType::SingleLabel => "single-label",
            TaskType::MultiLabel => "multi-label",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Record {
    pub id: String,
    /// Sorted, duplicate-free.
    pub labels: Vec<String>,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
}

impl Record {
    pub fn new(id: impl Into<String>, labels: &[&str], split: Split, fold: Option<u32>) -> Self {
        let mut labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        labels.sort();
        labels.dedup();
        Self {
            id: id.into(),
            labels,
            split,
            fold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    task: TaskType,
    header: Option<serde_json::Value>,
    records: Vec<Record>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    labels: Vec<String>,
    split: String,
    #[serde(default)]
    fold: Option<u32>,
}

impl Manifest {
    pub fn new(task: TaskType, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = i + 1;
            validate_record(r, task).map_err(|message| Error::Manifest { line, message })?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest {
                    line,
                    message: format!("duplicate id '{}'", r.id),
                });
            }
        }
        Ok(Self {
            task,
            header: None,
            records,
        })
    }

    pub fn with_header(mut self, header: serde_json::Value) -> Self {
        self.header = Some(header);
        self
    }

    pub fn task(&self) -> TaskType {
        self.task
    }

    pub fn header(&self) -> Option<&serde_json::Value> {
        self.header.as_ref()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parse(text: &str, task: TaskType) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut header = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let err = |message: String| Error::Manifest { line, message };
            let value: serde_json::Value =
                serde_json::from_str(trimmed).map_err(|e| err(format!("invalid JSON: {e}")))?;
            if let Some(h) = value.get("header") {
                if records.is_empty()
                    && header.is_none()
                    && value.as_object().map(|o| o.len()) == Some(1)
                {
                    header = Some(h.clone());
                    continue;
                }
                return Err(err("header object only allowed as the first line".into()));
            }
            let raw: RawRecord =
                serde_json::from_value(value).map_err(|e| err(format!("invalid record: {e}")))?;
            let split = raw.split.parse::<Split>().map_err(err)?;
            let mut labels = raw.labels;
            labels.sort();
            labels.dedup();
            let record = Record {
                id: raw.id,
                labels,
                split,
                fold: raw.fold,
            };
            validate_record(&record, task).map_err(err)?;
            if !seen.insert(record.id.clone()) {
                return Err(err(format!("duplicate id '{}'", record.id)));
            }
            records.push(record);
        }
        Ok(Self {
            task,
            header,
            records,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&serde_json::json!({ "header": h }).to_string());
            out.push('\n');
        }
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

fn validate_record(r: &Record, task: TaskType) -> std::result::Result<(), String> {
    if r.id.is_empty() {
        return Err("empty id".into());
    }
    if r.labels.is_empty() {
        return Err(format!("record '{}' has an empty label set", r.id));
    }
    if task == TaskType::SingleLabel && r.labels.len() != 1 {
        return Err(format!(
            "record '{}' has {} labels but the manifest is single-label",
            r.id,
            r.labels.len()
        ));
    }
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>, task: TaskType) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, task)
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::fsutil::write_atomic(path, manifest.to_jsonl().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, labels: &str, split: &str) -> String {
        format!(r#"{{"id":"{id}","labels":{labels},"split":"{split}"}}"#)
    }

    #[test]
    fn parses_single_record() {
        let m = Manifest::parse(&line("a", r#"["dog"]"#, "dev"), TaskType::SingleLabel).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.records()[0].labels, vec!["dog"]);
        assert_eq!(m.records()[0].split, Split::Dev);
        assert_eq!(m.records()[0].fold, None);
    }

    #[test]
    fn duplicate_id_reports_second_line() {
        let mut lines: Vec<String> = (0..7)
            .map(|i| line(&format!("r{i}"), r#"["x"]"#, "dev"))
            .collect();
        lines[2] = line("dup", r#"["x"]"#, "dev");
        lines[6] = line("dup", r#"["x"]"#, "eval");
        let err = Manifest::parse(&lines.join("\n"), TaskType::SingleLabel).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 7, .. }), "{err}");
    }

    #[test]
    fn multi_label_mode_accepts_label_sets() {
        let text = line("a", r#"["dog","bark"]"#, "dev");
        let m = Manifest::parse(&text, TaskType::MultiLabel).unwrap();
        assert_eq!(m.records()[0].labels, vec!["bark", "dog"]);
        assert!(Manifest::parse(&text, TaskType::SingleLabel).is_err());
    }

    #[test]
    fn rejects_empty_labels_and_unknown_split() {
        let err = Manifest::parse(&line("a", "[]", "dev"), TaskType::MultiLabel).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 1, .. }));
        let text = format!("\n{}", line("a", r#"["x"]"#, "train"));
        let err = Manifest::parse(&text, TaskType::SingleLabel).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 2, .. }), "{err}");
    }

    #[test]
    fn blank_lines_and_folds() {
        let text = format!(
            "\n{}\n\n{}\n",
            r#"{"id":"a","labels":["x"],"split":"dev","fold":3}"#,
            line("b", r#"["y"]"#, "eval")
        );
        let m = Manifest::parse(&text, TaskType::SingleLabel).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[0].fold, Some(3));
        assert!(Manifest::parse(
            r#"{"id":"a","labels":["x"],"split":"dev","fold":-1}"#,
            TaskType::SingleLabel
        )
        .is_err());
    }

    #[test]
    fn header_line_round_trips() {
        let m = Manifest::new(
            TaskType::SingleLabel,
            vec![Record::new("a", &["x"], Split::Dev, Some(0))],
        )
        .unwrap()
        .with_header(serde_json::json!({"encoder": "test", "version": 2}));
        let text = m.to_jsonl();
        let back = Manifest::parse(&text, TaskType::SingleLabel).unwrap();
        assert_eq!(back, m);
        let misplaced = format!("{}\n{}", line("a", r#"["x"]"#, "dev"), r#"{"header":{}}"#);
        assert!(Manifest::parse(&misplaced, TaskType::SingleLabel).is_err());
    }
}
