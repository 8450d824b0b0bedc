use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metric::{normalize, NormalizedAnswer};
use crate::model::QuestionId;

/// Which prompt or backend contributed a choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ChoiceSource {
    Qc,
    Q,
    Backend(String),
}

impl From<String> for ChoiceSource {
    fn from(s: String) -> Self {
        match s.as_str() {
            "QC" => ChoiceSource::Qc,
            "Q" => ChoiceSource::Q,
            _ => ChoiceSource::Backend(s),
        }
    }
}

impl From<ChoiceSource> for String {
    fn from(s: ChoiceSource) -> Self {
        s.to_string()
    }
}

impl fmt::Display for ChoiceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChoiceSource::Qc => f.write_str("QC"),
            ChoiceSource::Q => f.write_str("Q"),
            ChoiceSource::Backend(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: ChoiceSource,
    /// Zero-based position in the producing list.
    pub rank: usize,
}

/// Ranked, deduplicated answer candidates for one question. Earlier is preferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceList {
    pub question_id: QuestionId,
    pub choices: Vec<String>,
    pub provenance: Vec<Provenance>,
}

impl ChoiceList {
    pub fn new(question_id: QuestionId) -> Self {
        Self {
            question_id,
            choices: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Builds a list from ranked raw answers, normalizing and keeping first occurrences.
    pub fn from_ranked(
        question_id: QuestionId,
        items: impl IntoIterator<Item = (String, Provenance)>,
    ) -> Self {
        let mut list = Self::new(question_id);
        let mut seen = HashSet::new();
        for (raw, prov) in items {
            let norm = normalize(&raw).into_string();
            if norm.is_empty() || !seen.insert(norm.clone()) {
                continue;
            }
            list.choices.push(norm);
            list.provenance.push(prov);
        }
        list
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.choices.first().map(String::as_str)
    }

    /// Zero-based rank of a normalized answer, if present.
    pub fn rank_of(&self, answer: &str) -> Option<usize> {
        self.choices.iter().position(|c| c == answer)
    }
}

/// Splits a completion into answers: first line only, on " or " and commas,
/// trimming whitespace and trailing periods.
pub fn parse_choices(raw_completion: &str) -> Vec<String> {
    let line = raw_completion
        .trim_start()
        .lines()
        .next()
        .unwrap_or_default();
    line.split(" or ")
        .flat_map(|part| part.split(','))
        .map(|s| s.trim().trim_end_matches('.').trim_end())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Merges the two choice-generation outputs, context prompt first.
pub fn pool_choices(question_id: QuestionId, qc_output: &[String], q_output: &[String]) -> ChoiceList {
    let tagged = |src: ChoiceSource, list: &[String]| {
        list.iter()
            .enumerate()
            .map(move |(rank, a)| {
                (
                    a.clone(),
                    Provenance {
                        source: src.clone(),
                        rank,
                    },
                )
            })
            .collect::<Vec<_>>()
    };
    let mut items = tagged(ChoiceSource::Qc, qc_output);
    items.extend(tagged(ChoiceSource::Q, q_output));
    ChoiceList::from_ranked(question_id, items)
}

/// Unique normalized gold answers in first-seen order, empties dropped.
pub fn unique_gold_answers(gold: &[impl AsRef<str>]) -> Vec<NormalizedAnswer> {
    let mut seen = HashSet::new();
    gold.iter()
        .map(|g| normalize(g.as_ref()))
        .filter(|n| !n.is_empty() && seen.insert(n.clone()))
        .collect()
}

/// Most frequent normalized gold answer; ties go to the earliest seen.
pub fn modal_answer(gold: &[impl AsRef<str>]) -> Option<NormalizedAnswer> {
    let mut counts: HashMap<NormalizedAnswer, (usize, usize)> = HashMap::new();
    for (pos, g) in gold.iter().enumerate() {
        let n = normalize(g.as_ref());
        if n.is_empty() {
            continue;
        }
        counts.entry(n).or_insert((0, pos)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, pa)), (_, (cb, pb))| ca.cmp(cb).then(pb.cmp(pa)))
        .map(|(n, _)| n)
}
