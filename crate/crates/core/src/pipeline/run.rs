//! On-disk layout of one run: `manifest.json`, one JSON-lines artifact per
//! stage, `report.json` and `errors.jsonl`, all under `runs/<run_id>/`.
//!
//! Artifact lines carry the run id next to the record fields. Every file is
//! written in question-id order and replaced atomically, so rerunning a stage
//! from a warm cache reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ErrorEntry, SelectionResult, Stage};
use crate::model::QuestionId;
use crate::prompts::{ChoiceList, Rationale};

pub const MANIFEST: &str = "manifest.json";
pub const CHOICES: &str = "choices.jsonl";
pub const COTS: &str = "cots.jsonl";
pub const SELECTIONS: &str = "selections.jsonl";
pub const REPORT: &str = "report.json";
pub const ERRORS: &str = "errors.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: question {question_id} appears twice")]
    Duplicate { path: PathBuf, question_id: QuestionId },
    #[error("invalid run id `{0}`: use letters, digits, '-', '_' or '.'")]
    InvalidRunId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a stage did, as recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Free-form stage inputs, e.g. the split or the runs being ensembled.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub flagged: usize,
    pub requests: usize,
}

/// Everything needed to reproduce a run besides the dataset files and the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub template_version: String,
    /// SHA-256 of the rationale prompt preamble.
    pub cot_digest: String,
    /// Resolved run configuration.
    pub config: serde_json::Value,
    #[serde(default)]
    pub stages: BTreeMap<String, StageSummary>,
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    run_id: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    run_id: String,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl RunDir {
    /// Creates (or reuses) `<runs_root>/<run_id>`.
    pub fn create(runs_root: &Path, run_id: &str) -> Result<Self, RunError> {
        if !valid_run_id(run_id) {
            return Err(RunError::InvalidRunId(run_id.to_string()));
        }
        let root = runs_root.join(run_id);
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            run_id: run_id.to_string(),
        })
    }

    /// Opens an existing run directory; the run id is its final component.
    pub fn open(path: &Path) -> Result<Self, RunError> {
        if !path.is_dir() {
            return Err(RunError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such run directory"),
            });
        }
        let run_id = path
            .file_name()
            .and_then(|n| n.to_str())
            .filter(|n| valid_run_id(n))
            .ok_or_else(|| RunError::InvalidRunId(path.display().to_string()))?;
        Ok(Self {
            run_id: run_id.to_string(),
            root: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_atomic(&self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.file(name);
        let tmp = self.file(&format!(".{name}.tmp"));
        fs::write(&tmp, contents).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn write_jsonl<'r, T: Serialize + 'r>(
        &self,
        name: &str,
        records: impl IntoIterator<Item = &'r T>,
    ) -> Result<(), RunError> {
        let mut out = String::new();
        for record in records {
            let line = serde_json::to_string(&Stamped {
                run_id: &self.run_id,
                record,
            })
            .expect("run records serialize");
            out.push_str(&line);
            out.push('\n');
        }
        self.write_atomic(name, &out)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("run files serialize");
        text.push('\n');
        self.write_atomic(name, &text)
    }

    pub fn read_manifest(&self) -> Result<Option<RunManifest>, RunError> {
        read_json_opt(&self.file(MANIFEST))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), RunError> {
        self.write_json(MANIFEST, manifest)
    }

    pub fn write_choices(&self, choices: &BTreeMap<QuestionId, ChoiceList>) -> Result<(), RunError> {
        self.write_jsonl(CHOICES, choices.values())
    }

    pub fn write_cots(&self, cots: &BTreeMap<QuestionId, Rationale>) -> Result<(), RunError> {
        self.write_jsonl(COTS, cots.values())
    }

    pub fn write_selections(
        &self,
        selections: &BTreeMap<QuestionId, SelectionResult>,
    ) -> Result<(), RunError> {
        self.write_jsonl(SELECTIONS, selections.values())
    }

    /// Replaces this stage's entries in `errors.jsonl`, keeping other stages'.
    pub fn record_errors(&self, stage: Stage, errors: &[ErrorEntry]) -> Result<(), RunError> {
        let path = self.file(ERRORS);
        let mut all: Vec<ErrorEntry> = if path.exists() {
            read_jsonl::<ErrorEntry>(&path)?
                .into_iter()
                .filter(|e| e.stage != stage)
                .collect()
        } else {
            Vec::new()
        };
        all.extend_from_slice(errors);
        all.sort();
        self.write_jsonl(ERRORS, &all)
    }

    /// Sets `key` in `report.json`, keeping other keys.
    pub fn update_report(&self, key: &str, value: serde_json::Value) -> Result<(), RunError> {
        let path = self.file(REPORT);
        let mut report: BTreeMap<String, serde_json::Value> =
            read_json_opt(&path)?.unwrap_or_default();
        report.insert("run_id".into(), self.run_id.clone().into());
        report.insert(key.into(), value);
        self.write_json(REPORT, &report)
    }
}

fn read_json_opt<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, RunError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| RunError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RunError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn read_keyed<T: DeserializeOwned>(
    path: &Path,
    key: impl Fn(&T) -> QuestionId,
) -> Result<BTreeMap<QuestionId, T>, RunError> {
    let mut map = BTreeMap::new();
    for record in read_jsonl::<T>(path)? {
        let question_id = key(&record);
        if map.insert(question_id, record).is_some() {
            return Err(RunError::Duplicate {
                path: path.to_path_buf(),
                question_id,
            });
        }
    }
    Ok(map)
}

/// Reads a `choices.jsonl` artifact.
pub fn read_choices(path: &Path) -> Result<BTreeMap<QuestionId, ChoiceList>, RunError> {
    read_keyed(path, |c: &ChoiceList| c.question_id)
}

pub fn read_rationales(path: &Path) -> Result<BTreeMap<QuestionId, Rationale>, RunError> {
    read_keyed(path, |r: &Rationale| r.question_id)
}

pub fn read_selections(path: &Path) -> Result<BTreeMap<QuestionId, SelectionResult>, RunError> {
    read_keyed(path, |s: &SelectionResult| s.question_id)
}

pub fn read_errors(path: &Path) -> Result<Vec<ErrorEntry>, RunError> {
    read_jsonl(path)
}
