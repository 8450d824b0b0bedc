//! Generate-then-select pipeline for knowledge-based visual question answering.
//!
//! A frozen language model is prompted twice per question (question only, and
//! caption/tags plus question) with retrieved in-context examples to list every
//! plausible answer. The outputs are pooled into a ranked choice list, a
//! chain-of-thought rationale is generated, and a selector picks the final
//! answer from the list. Runs are scored with the VQA-challenge accuracy
//! metric and with Top-k knowledge coverage of the choice pools.

pub mod backend;
pub mod metric;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod retriever;

pub use backend::{Backend, BackendRegistry, BackendSpec, CompletionRecord, CompletionRequest};
pub use metric::{coverage, normalize, topk_accuracy, vqa_accuracy, CoverageReport, NormalizedAnswer, TopK};
pub use model::{load_dataset, Dataset, ImageContext, QaInstance, QuestionId, Split};
pub use pipeline::{
    ensemble_choices, evaluate_run, Pipeline, PipelineConfig, PipelineError, RunDir, RunManifest,
    SelectionResult, Selector,
};
pub use prompts::{ChoiceList, PromptKind, PromptText, Rationale, TemplateSet};
pub use retriever::{cosine, retrieve_examples, Retriever};
