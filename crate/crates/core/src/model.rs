//! Dataset-level domain types and their on-disk loaders.
//!
//! Questions and annotations use the VQA-challenge two-file JSON schema, so
//! OK-VQA downloads load unchanged. Image contexts and embeddings are
//! JSON-lines files, one record per line:
//!
//! ```text
//! {"image_id": 42, "caption": "a man riding a wave", "tags": ["surfboard", "wave"]}
//! {"owner_id": 42, "kind": "image", "vector": [0.1, 0.2, ...]}
//! ```
//!
//! A loaded [`Dataset`] is immutable and iterates in ascending question id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type QuestionId = u64;
pub type ImageId = u64;

/// Number of annotated answers per question in OK-VQA style datasets.
pub const DEFAULT_ANSWER_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" | "val" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

/// One question with its raw annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInstance {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub question: String,
    /// Raw annotator answers, repetitions kept. Normalization happens in the metric.
    pub gold_answers: Vec<String>,
    pub split: Split,
}

/// Textual surrogate of an image: a caption plus object tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageContext {
    pub image_id: ImageId,
    pub caption: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Image,
    Question,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingKind::Image => f.write_str("image"),
            EmbeddingKind::Question => f.write_str("question"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub owner_id: u64,
    pub kind: EmbeddingKind,
    pub vector: Vec<f64>,
}

/// Vectors of one kind keyed by owner id, all sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    kind: EmbeddingKind,
    dim: Option<usize>,
    vectors: BTreeMap<u64, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(kind: EmbeddingKind) -> Self {
        Self {
            kind,
            dim: None,
            vectors: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, owner_id: u64) -> Option<&[f64]> {
        self.vectors.get(&owner_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.vectors.iter().map(|(id, v)| (*id, v.as_slice()))
    }

    /// Inserts a vector, enforcing the shared dimension and finiteness.
    pub fn insert(&mut self, owner_id: u64, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        match self.dim {
            Some(dim) if dim != vector.len() => {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                })
            }
            Some(_) => {}
            None => self.dim = Some(vector.len()),
        }
        if self.vectors.insert(owner_id, vector).is_some() {
            return Err(EmbeddingError::Duplicate(owner_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("empty vector")]
    Empty,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate embedding for owner {0}")]
    Duplicate(u64),
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: field `{field}`: {reason}")]
    InvalidField {
        path: PathBuf,
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("question {question_id}: expected {expected} annotated answers, found {found}")]
    AnswerCount {
        question_id: QuestionId,
        expected: usize,
        found: usize,
    },
    #[error("duplicate question_id {0}")]
    DuplicateQuestion(QuestionId),
    #[error("duplicate context for image_id {0}")]
    DuplicateContext(ImageId),
    #[error("question {0} has no annotation record")]
    MissingAnnotation(QuestionId),
    #[error("annotation references unknown question {0}")]
    OrphanAnnotation(QuestionId),
    #[error("question {question_id}: image_id {question_image} in questions file but {annotation_image} in annotations")]
    ImageMismatch {
        question_id: QuestionId,
        question_image: ImageId,
        annotation_image: ImageId,
    },
    #[error("{path}:{line}: {kind} embedding for owner {owner_id}: {source}")]
    Embedding {
        path: PathBuf,
        line: usize,
        kind: EmbeddingKind,
        owner_id: u64,
        #[source]
        source: EmbeddingError,
    },
    #[error("no instances")]
    NoInstances,
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Questions/annotations file pair for one split.
///
/// `split` forces the split for every question in the pair. When absent, a
/// per-question `"split"` field wins, then the questions file's
/// `data_subtype` (anything containing `train` is train, the rest is test).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    #[serde(default)]
    pub split: Option<Split>,
    pub questions: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub splits: Vec<SplitFiles>,
    pub contexts: PathBuf,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub answer_count: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            answer_count: DEFAULT_ANSWER_COUNT,
        }
    }
}

/// An instance lacking one of the inputs the pipeline needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "missing", rename_all = "snake_case")]
pub enum MissingInput {
    Context {
        question_id: QuestionId,
        image_id: ImageId,
        split: Split,
    },
    ImageEmbedding {
        question_id: QuestionId,
        image_id: ImageId,
        split: Split,
    },
    QuestionEmbedding {
        question_id: QuestionId,
        split: Split,
    },
}

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissingInput::Context {
                question_id,
                image_id,
                split,
            } => write!(f, "{split} question {question_id}: no context for image {image_id}"),
            MissingInput::ImageEmbedding {
                question_id,
                image_id,
                split,
            } => write!(
                f,
                "{split} question {question_id}: no image embedding for image {image_id}"
            ),
            MissingInput::QuestionEmbedding { question_id, split } => {
                write!(f, "{split} question {question_id}: no question embedding")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub train: usize,
    pub test: usize,
    pub contexts: usize,
    pub image_embeddings: usize,
    pub question_embeddings: usize,
    /// Tags dropped because they repeated an earlier tag after case-folding.
    pub duplicate_tags_dropped: usize,
    pub missing: Vec<MissingInput>,
}

impl LoadReport {
    /// Missing inputs on the test split, the ones that block evaluation.
    pub fn missing_test(&self) -> impl Iterator<Item = &MissingInput> {
        self.missing.iter().filter(|m| {
            matches!(
                m,
                MissingInput::Context { split: Split::Test, .. }
                    | MissingInput::ImageEmbedding { split: Split::Test, .. }
                    | MissingInput::QuestionEmbedding { split: Split::Test, .. }
            )
        })
    }

    pub fn warning_count(&self) -> usize {
        self.missing.len() + self.duplicate_tags_dropped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: BTreeMap<QuestionId, QaInstance>,
    contexts: BTreeMap<ImageId, ImageContext>,
    image_embeddings: EmbeddingStore,
    question_embeddings: EmbeddingStore,
}

impl Dataset {
    /// Assembles a dataset from parts, checking the same invariants the loader does.
    pub fn from_parts(
        instances: impl IntoIterator<Item = QaInstance>,
        contexts: impl IntoIterator<Item = ImageContext>,
        image_embeddings: EmbeddingStore,
        question_embeddings: EmbeddingStore,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for inst in instances {
            let id = inst.question_id;
            if map.insert(id, inst).is_some() {
                return Err(DatasetError::DuplicateQuestion(id));
            }
        }
        if map.is_empty() {
            return Err(DatasetError::NoInstances);
        }
        let mut ctx_map = BTreeMap::new();
        for mut ctx in contexts {
            dedup_tags(&mut ctx.tags);
            let id = ctx.image_id;
            if ctx_map.insert(id, ctx).is_some() {
                return Err(DatasetError::DuplicateContext(id));
            }
        }
        Ok(Self {
            instances: map,
            contexts: ctx_map,
            image_embeddings,
            question_embeddings,
        })
    }

    pub fn load(paths: &DatasetPaths, options: &LoadOptions) -> Result<(Self, LoadReport)> {
        let mut instances: BTreeMap<QuestionId, QaInstance> = BTreeMap::new();
        for files in &paths.splits {
            for inst in load_split(files, options)? {
                let id = inst.question_id;
                if instances.insert(id, inst).is_some() {
                    return Err(DatasetError::DuplicateQuestion(id));
                }
            }
        }
        if instances.is_empty() {
            return Err(DatasetError::NoInstances);
        }

        let mut report = LoadReport::default();
        let contexts = load_contexts(&paths.contexts, &mut report)?;
        let (image_embeddings, question_embeddings) = load_embeddings(&paths.embeddings)?;

        let dataset = Self {
            instances,
            contexts,
            image_embeddings,
            question_embeddings,
        };
        report.train = dataset.split(Split::Train).count();
        report.test = dataset.split(Split::Test).count();
        report.contexts = dataset.contexts.len();
        report.image_embeddings = dataset.image_embeddings.len();
        report.question_embeddings = dataset.question_embeddings.len();
        report.missing = dataset.missing_inputs();
        Ok((dataset, report))
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance(&self, question_id: QuestionId) -> Option<&QaInstance> {
        self.instances.get(&question_id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &QaInstance> {
        self.instances.values()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &QaInstance> {
        self.instances.values().filter(move |i| i.split == split)
    }

    pub fn context(&self, image_id: ImageId) -> Option<&ImageContext> {
        self.contexts.get(&image_id)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &ImageContext> {
        self.contexts.values()
    }

    pub fn image_embeddings(&self) -> &EmbeddingStore {
        &self.image_embeddings
    }

    pub fn question_embeddings(&self) -> &EmbeddingStore {
        &self.question_embeddings
    }

    pub fn image_embedding(&self, image_id: ImageId) -> Option<&[f64]> {
        self.image_embeddings.get(image_id)
    }

    pub fn question_embedding(&self, question_id: QuestionId) -> Option<&[f64]> {
        self.question_embeddings.get(question_id)
    }

    fn missing_inputs(&self) -> Vec<MissingInput> {
        let mut missing = Vec::new();
        for inst in self.instances.values() {
            if !self.contexts.contains_key(&inst.image_id) {
                missing.push(MissingInput::Context {
                    question_id: inst.question_id,
                    image_id: inst.image_id,
                    split: inst.split,
                });
            }
            if self.image_embeddings.get(inst.image_id).is_none() {
                missing.push(MissingInput::ImageEmbedding {
                    question_id: inst.question_id,
                    image_id: inst.image_id,
                    split: inst.split,
                });
            }
            if self.question_embeddings.get(inst.question_id).is_none() {
                missing.push(MissingInput::QuestionEmbedding {
                    question_id: inst.question_id,
                    split: inst.split,
                });
            }
        }
        missing
    }

    /// Writes the dataset back out in the loader's formats (debug dump).
    ///
    /// Every question carries an explicit `"split"` field, so the returned
    /// paths reload to an identical dataset.
    pub fn dump(&self, dir: &Path) -> Result<DatasetPaths> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DatasetError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let questions = QuestionsFileOut {
            data_subtype: "dump",
            questions: self
                .instances
                .values()
                .map(|i| QuestionOut {
                    question_id: i.question_id,
                    image_id: i.image_id,
                    question: &i.question,
                    split: i.split,
                })
                .collect(),
        };
        let annotations = AnnotationsFileOut {
            annotations: self
                .instances
                .values()
                .map(|i| AnnotationOut {
                    question_id: i.question_id,
                    image_id: i.image_id,
                    answers: i
                        .gold_answers
                        .iter()
                        .enumerate()
                        .map(|(n, a)| AnswerOut {
                            answer: a,
                            answer_id: n + 1,
                        })
                        .collect(),
                })
                .collect(),
        };

        let q_path = dir.join("questions.json");
        let a_path = dir.join("annotations.json");
        let c_path = dir.join("contexts.jsonl");
        let e_path = dir.join("embeddings.jsonl");

        fs::write(&q_path, pretty(&questions)).map_err(io_err(&q_path))?;
        fs::write(&a_path, pretty(&annotations)).map_err(io_err(&a_path))?;

        let mut ctx_out = String::new();
        for ctx in self.contexts.values() {
            ctx_out.push_str(&serde_json::to_string(ctx).expect("context serializes"));
            ctx_out.push('\n');
        }
        fs::write(&c_path, ctx_out).map_err(io_err(&c_path))?;

        let mut file = fs::File::create(&e_path).map_err(io_err(&e_path))?;
        for store in [&self.image_embeddings, &self.question_embeddings] {
            for (owner_id, vector) in store.iter() {
                let rec = EmbeddingRecord {
                    owner_id,
                    kind: store.kind(),
                    vector: vector.to_vec(),
                };
                let line = serde_json::to_string(&rec).expect("embedding serializes");
                writeln!(file, "{line}").map_err(io_err(&e_path))?;
            }
        }

        Ok(DatasetPaths {
            splits: vec![SplitFiles {
                split: None,
                questions: q_path,
                annotations: a_path,
            }],
            contexts: c_path,
            embeddings: e_path,
        })
    }
}

/// Loads a single questions/annotations pair plus contexts and embeddings.
pub fn load_dataset(
    questions_path: impl AsRef<Path>,
    annotations_path: impl AsRef<Path>,
    contexts_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<(Dataset, LoadReport)> {
    let paths = DatasetPaths {
        splits: vec![SplitFiles {
            split: None,
            questions: questions_path.as_ref().to_path_buf(),
            annotations: annotations_path.as_ref().to_path_buf(),
        }],
        contexts: contexts_path.as_ref().to_path_buf(),
        embeddings: embeddings_path.as_ref().to_path_buf(),
    };
    Dataset::load(&paths, &LoadOptions::default())
}

fn dedup_tags(tags: &mut Vec<String>) -> usize {
    let before = tags.len();
    let mut seen = BTreeSet::new();
    tags.retain(|t| seen.insert(t.to_lowercase()));
    before - tags.len()
}

#[derive(Deserialize)]
struct QuestionsFile {
    #[serde(default)]
    data_subtype: Option<String>,
    questions: Vec<QuestionEntry>,
}

#[derive(Deserialize)]
struct QuestionEntry {
    question_id: QuestionId,
    image_id: ImageId,
    question: String,
    #[serde(default)]
    split: Option<Split>,
}

#[derive(Deserialize)]
struct AnnotationsFile {
    annotations: Vec<AnnotationEntry>,
}

#[derive(Deserialize)]
struct AnnotationEntry {
    question_id: QuestionId,
    image_id: ImageId,
    answers: Vec<AnswerEntry>,
}

#[derive(Deserialize)]
struct AnswerEntry {
    answer: String,
}

#[derive(Serialize)]
struct QuestionsFileOut<'a> {
    data_subtype: &'static str,
    questions: Vec<QuestionOut<'a>>,
}

#[derive(Serialize)]
struct QuestionOut<'a> {
    question_id: QuestionId,
    image_id: ImageId,
    question: &'a str,
    split: Split,
}

#[derive(Serialize)]
struct AnnotationsFileOut<'a> {
    annotations: Vec<AnnotationOut<'a>>,
}

#[derive(Serialize)]
struct AnnotationOut<'a> {
    question_id: QuestionId,
    image_id: ImageId,
    answers: Vec<AnswerOut<'a>>,
}

#[derive(Serialize)]
struct AnswerOut<'a> {
    answer: &'a str,
    answer_id: usize,
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("dump types serialize")
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line_offset: usize, err: serde_json::Error) -> DatasetError {
    DatasetError::Parse {
        path: path.to_path_buf(),
        line: line_offset + err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn load_split(files: &SplitFiles, options: &LoadOptions) -> Result<Vec<QaInstance>> {
    let q_text = read_file(&files.questions)?;
    let a_text = read_file(&files.annotations)?;
    let questions: QuestionsFile =
        serde_json::from_str(&q_text).map_err(|e| parse_error(&files.questions, 0, e))?;
    let annotations: AnnotationsFile =
        serde_json::from_str(&a_text).map_err(|e| parse_error(&files.annotations, 0, e))?;

    let file_split = files.split.or_else(|| {
        questions.data_subtype.as_deref().map(|s| {
            if s.to_ascii_lowercase().contains("train") {
                Split::Train
            } else {
                Split::Test
            }
        })
    });

    let mut answers: BTreeMap<QuestionId, AnnotationEntry> = BTreeMap::new();
    for ann in annotations.annotations {
        let id = ann.question_id;
        if answers.insert(id, ann).is_some() {
            return Err(DatasetError::DuplicateQuestion(id));
        }
    }

    let mut out = Vec::with_capacity(questions.questions.len());
    let mut seen = BTreeSet::new();
    for q in questions.questions {
        if !seen.insert(q.question_id) {
            return Err(DatasetError::DuplicateQuestion(q.question_id));
        }
        if q.question.trim().is_empty() {
            return Err(DatasetError::InvalidField {
                path: files.questions.clone(),
                line: 0,
                field: "question",
                reason: format!("empty question text for question {}", q.question_id),
            });
        }
        let ann = answers
            .remove(&q.question_id)
            .ok_or(DatasetError::MissingAnnotation(q.question_id))?;
        if ann.image_id != q.image_id {
            return Err(DatasetError::ImageMismatch {
                question_id: q.question_id,
                question_image: q.image_id,
                annotation_image: ann.image_id,
            });
        }
        if ann.answers.len() != options.answer_count {
            return Err(DatasetError::AnswerCount {
                question_id: q.question_id,
                expected: options.answer_count,
                found: ann.answers.len(),
            });
        }
        let split = match files.split {
            Some(forced) => forced,
            None => q.split.or(file_split).unwrap_or(Split::Test),
        };
        out.push(QaInstance {
            question_id: q.question_id,
            image_id: q.image_id,
            question: q.question,
            gold_answers: ann.answers.into_iter().map(|a| a.answer).collect(),
            split,
        });
    }
    if let Some((&orphan, _)) = answers.iter().next() {
        return Err(DatasetError::OrphanAnnotation(orphan));
    }
    Ok(out)
}

/// Yields `(line_number, line)` for nonblank lines of a JSON-lines file.
fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((n + 1, line));
        }
    }
    Ok(out)
}

fn load_contexts(path: &Path, report: &mut LoadReport) -> Result<BTreeMap<ImageId, ImageContext>> {
    let mut contexts = BTreeMap::new();
    for (line_no, line) in jsonl_lines(path)? {
        let mut ctx: ImageContext =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no - 1, e))?;
        if ctx.caption.trim().is_empty() {
            return Err(DatasetError::InvalidField {
                path: path.to_path_buf(),
                line: line_no,
                field: "caption",
                reason: "caption must be nonempty".into(),
            });
        }
        report.duplicate_tags_dropped += dedup_tags(&mut ctx.tags);
        let id = ctx.image_id;
        if contexts.insert(id, ctx).is_some() {
            return Err(DatasetError::DuplicateContext(id));
        }
    }
    Ok(contexts)
}

fn load_embeddings(path: &Path) -> Result<(EmbeddingStore, EmbeddingStore)> {
    let mut images = EmbeddingStore::new(EmbeddingKind::Image);
    let mut questions = EmbeddingStore::new(EmbeddingKind::Question);
    for (line_no, line) in jsonl_lines(path)? {
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, line_no - 1, e))?;
        let store = match rec.kind {
            EmbeddingKind::Image => &mut images,
            EmbeddingKind::Question => &mut questions,
        };
        store
            .insert(rec.owner_id, rec.vector)
            .map_err(|source| DatasetError::Embedding {
                path: path.to_path_buf(),
                line: line_no,
                kind: rec.kind,
                owner_id: rec.owner_id,
                source,
            })?;
    }
    Ok((images, questions))
}
