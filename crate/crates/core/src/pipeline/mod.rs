//! Generate-then-select orchestration.
//!
//! Each stage treats questions as independent work items executed on a
//! bounded thread pool; results are always assembled in question-id order so
//! outputs do not depend on completion order. Per-question failures are
//! recorded and skipped, and a stage aborts once more than
//! [`PipelineConfig::failure_threshold`] of its questions fail.

mod ensemble;
mod generate;
mod run;
mod select;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ensemble::ensemble_choices;
pub use run::{
    read_choices, read_errors, read_rationales, read_selections, RunDir, RunError, RunManifest,
    StageSummary, CHOICES, COTS, ERRORS, MANIFEST, REPORT, SELECTIONS,
};
pub use select::{match_selection, MatchKind, SelectionResult, Selector, ShotSources};

use crate::backend::{BackendError, RequestParams};
use crate::metric::{mean_accuracy, vqa_credit, MetricError};
use crate::model::{Dataset, QaInstance, QuestionId, Split};
use crate::prompts::{PromptError, PromptKind, TemplateSet};
use crate::retriever::{
    RetrievalError, Retriever, RetrieverConfig, SELECT_SHOTS, TEST_SHOTS, TRAIN_SHOTS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub shots_test: usize,
    pub shots_train: usize,
    pub select_shots: usize,
    pub generation: RequestParams,
    pub cot: RequestParams,
    pub select: RequestParams,
    /// Include rationales in the selection prompt.
    pub select_with_rationale: bool,
    pub parallel: usize,
    pub failure_threshold: f64,
    pub retriever: RetrieverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shots_test: TEST_SHOTS,
            shots_train: TRAIN_SHOTS,
            select_shots: SELECT_SHOTS,
            generation: PromptKind::Qc.default_params(),
            cot: PromptKind::Cot.default_params(),
            select: PromptKind::Select.default_params(),
            select_with_rationale: true,
            parallel: 8,
            failure_threshold: 0.10,
            retriever: RetrieverConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn shots_for(&self, split: Split) -> usize {
        match split {
            Split::Train => self.shots_train,
            Split::Test => self.shots_test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Choices,
    Cots,
    Select,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Choices => "choices",
            Stage::Cots => "cots",
            Stage::Select => "select",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The question was dropped from the stage output.
    Failure,
    /// The question was kept but something needs a look.
    Flag,
}

/// One line of a run's error ledger.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub stage: Stage,
    pub question_id: QuestionId,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput<T> {
    pub results: BTreeMap<QuestionId, T>,
    pub errors: Vec<ErrorEntry>,
    /// Completion requests issued (cache hits included).
    pub requests: usize,
    pub attempted: usize,
}

impl<T> StageOutput<T> {
    pub fn failures(&self) -> usize {
        self.errors
            .iter()
            .filter(|e| e.kind == ErrorKind::Failure)
            .count()
    }

    pub fn flags(&self) -> usize {
        self.errors.iter().filter(|e| e.kind == ErrorKind::Flag).count()
    }
}

/// Requests a stage would issue, without issuing them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StagePlan {
    pub questions: usize,
    pub prompts: usize,
    pub cached: usize,
    pub wire_calls: usize,
    /// Questions whose prompts cannot be built (missing inputs).
    pub unbuildable: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage} aborted: {failed} of {attempted} questions failed")]
    Aborted {
        stage: Stage,
        failed: usize,
        attempted: usize,
        errors: Vec<ErrorEntry>,
    },
    #[error("no {0} questions to process")]
    NoQuestions(Split),
    #[error("selector `{0}` requires a trained model and is not supported")]
    SelectorNotSupported(Selector),
    #[error("selector `{0}` needs a backend")]
    MissingBackend(Selector),
    #[error("question {0} is not in the dataset")]
    UnknownQuestion(QuestionId),
    #[error("choice run is empty")]
    EmptyChoiceRun,
    #[error("rationales are required when selecting with rationales")]
    MissingRationales,
    #[error("ensembling needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("runs cover different questions; symmetric difference: {0:?}")]
    QuestionSetMismatch(Vec<QuestionId>),
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Why a single question failed inside a stage.
#[derive(Debug, thiserror::Error)]
pub(crate) enum ItemError {
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Input(String),
}

/// Per-question success: the result plus any flags and the requests issued.
pub(crate) struct ItemOutput<T> {
    pub value: T,
    pub flags: Vec<String>,
    pub requests: usize,
}

impl<T> ItemOutput<T> {
    pub fn new(value: T, requests: usize) -> Self {
        Self {
            value,
            flags: Vec::new(),
            requests,
        }
    }
}

pub struct Pipeline<'a> {
    dataset: &'a Dataset,
    templates: &'a TemplateSet,
    config: PipelineConfig,
    retriever: Retriever,
    pool: rayon::ThreadPool,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        dataset: &'a Dataset,
        templates: &'a TemplateSet,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel.max(1))
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
        Ok(Self {
            dataset,
            templates,
            retriever: Retriever::new(config.retriever),
            config,
            pool,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn templates(&self) -> &TemplateSet {
        self.templates
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn questions(&self, split: Split) -> Result<Vec<&'a QaInstance>, PipelineError> {
        let items: Vec<_> = self.dataset.split(split).collect();
        if items.is_empty() {
            return Err(PipelineError::NoQuestions(split));
        }
        Ok(items)
    }

    /// Runs `work` over `items` on the pool and assembles results by question id.
    fn run_stage<T, F>(
        &self,
        stage: Stage,
        items: &[&'a QaInstance],
        work: F,
    ) -> Result<StageOutput<T>, PipelineError>
    where
        T: Send,
        F: Fn(&'a QaInstance) -> Result<ItemOutput<T>, ItemError> + Sync,
    {
        let outcomes: Vec<_> = self
            .pool
            .install(|| items.par_iter().map(|inst| (inst.question_id, work(inst))).collect());

        let mut out = StageOutput {
            results: BTreeMap::new(),
            errors: Vec::new(),
            requests: 0,
            attempted: items.len(),
        };
        for (question_id, outcome) in outcomes {
            match outcome {
                Ok(item) => {
                    out.requests += item.requests;
                    out.errors.extend(item.flags.into_iter().map(|message| ErrorEntry {
                        stage,
                        question_id,
                        kind: ErrorKind::Flag,
                        message,
                    }));
                    out.results.insert(question_id, item.value);
                }
                Err(e) => out.errors.push(ErrorEntry {
                    stage,
                    question_id,
                    kind: ErrorKind::Failure,
                    message: e.to_string(),
                }),
            }
        }
        out.errors.sort();

        let failed = out.failures();
        if failed as f64 > self.config.failure_threshold * out.attempted as f64 {
            return Err(PipelineError::Aborted {
                stage,
                failed,
                attempted: out.attempted,
                errors: out.errors,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub n: usize,
}

/// Mean VQA accuracy of the selected answers.
pub fn evaluate_run(
    selections: &BTreeMap<QuestionId, SelectionResult>,
    dataset: &Dataset,
) -> Result<Evaluation, MetricError> {
    if selections.is_empty() {
        return Err(MetricError::EmptyRun);
    }
    let mut total = 0u64;
    for (&qid, sel) in selections {
        let inst = dataset
            .instance(qid)
            .ok_or(MetricError::UnknownQuestion(qid))?;
        total += u64::from(vqa_credit(&sel.selected_answer, &inst.gold_answers)?);
    }
    Ok(Evaluation {
        accuracy: mean_accuracy(total, selections.len()),
        n: selections.len(),
    })
}
