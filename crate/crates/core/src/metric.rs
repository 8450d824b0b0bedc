//! VQA-challenge answer normalization, leave-one-out accuracy and Top-k
//! knowledge coverage.
//!
//! Accuracy is tracked internally as an integer *credit* in `0..=30`: the sum,
//! over the ten leave-one-out subsets of nine annotators, of
//! `min(matches_in_subset, 3)`. Dividing by 30 gives the usual
//! `mean(min(matches / 3, 1))`. Means over many questions are taken on the
//! integer credits so that equal pools always yield bit-equal scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, QuestionId};
use crate::prompts::ChoiceList;

/// Annotators per question expected by the leave-one-out metric.
pub const ANNOTATORS: usize = 10;
/// Matches needed in a nine-annotator subset for full credit.
const FULL_MATCH: u32 = 3;
/// Credit carried by a question answered correctly by every subset.
pub const MAX_CREDIT: u32 = ANNOTATORS as u32 * FULL_MATCH;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("expected {ANNOTATORS} gold answers, found {0}")]
    GoldCount(usize),
    #[error("k must be positive")]
    ZeroK,
    #[error("run references unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("run is empty")]
    EmptyRun,
}

/// An answer after VQA-challenge normalization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedAnswer(String);

impl NormalizedAnswer {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NormalizedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedAnswer {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

const PUNCTUATION: [char; 21] = [
    ';', '/', '[', ']', '"', '{', '}', '(', ')', '=', '+', '\\', '_', '-', '>', '<', '@', '`',
    ',', '?', '!',
];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

const DIGIT_WORDS: [(&str, &str); 12] = [
    ("none", "0"),
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

// Reference evaluator table, entries kept verbatim (including the mixed-case
// keys that never match after lowercasing and the `somebody'd` oddity).
const CONTRACTIONS: &[(&str, &str)] = &[
    ("aint", "ain't"),
    ("arent", "aren't"),
    ("cant", "can't"),
    ("couldve", "could've"),
    ("couldnt", "couldn't"),
    ("couldn'tve", "couldn't've"),
    ("couldnt've", "couldn't've"),
    ("didnt", "didn't"),
    ("doesnt", "doesn't"),
    ("dont", "don't"),
    ("hadnt", "hadn't"),
    ("hadnt've", "hadn't've"),
    ("hadn'tve", "hadn't've"),
    ("hasnt", "hasn't"),
    ("havent", "haven't"),
    ("hed", "he'd"),
    ("hed've", "he'd've"),
    ("he'dve", "he'd've"),
    ("hes", "he's"),
    ("howd", "how'd"),
    ("howll", "how'll"),
    ("hows", "how's"),
    ("Id've", "I'd've"),
    ("I'dve", "I'd've"),
    ("Im", "I'm"),
    ("Ive", "I've"),
    ("isnt", "isn't"),
    ("itd", "it'd"),
    ("itd've", "it'd've"),
    ("it'dve", "it'd've"),
    ("itll", "it'll"),
    ("let's", "let's"),
    ("maam", "ma'am"),
    ("mightnt", "mightn't"),
    ("mightnt've", "mightn't've"),
    ("mightn'tve", "mightn't've"),
    ("mightve", "might've"),
    ("mustnt", "mustn't"),
    ("mustve", "must've"),
    ("neednt", "needn't"),
    ("notve", "not've"),
    ("oclock", "o'clock"),
    ("oughtnt", "oughtn't"),
    ("ow's'at", "'ow's'at"),
    ("'ows'at", "'ow's'at"),
    ("'ow'sat", "'ow's'at"),
    ("shant", "shan't"),
    ("shed've", "she'd've"),
    ("she'dve", "she'd've"),
    ("she's", "she's"),
    ("shouldve", "should've"),
    ("shouldnt", "shouldn't"),
    ("shouldnt've", "shouldn't've"),
    ("shouldn'tve", "shouldn't've"),
    ("somebody'd", "somebodyd"),
    ("somebodyd've", "somebody'd've"),
    ("somebody'dve", "somebody'd've"),
    ("somebodyll", "somebody'll"),
    ("somebodys", "somebody's"),
    ("someoned", "someone'd"),
    ("someoned've", "someone'd've"),
    ("someone'dve", "someone'd've"),
    ("someonell", "someone'll"),
    ("someones", "someone's"),
    ("somethingd", "something'd"),
    ("somethingd've", "something'd've"),
    ("something'dve", "something'd've"),
    ("somethingll", "something'll"),
    ("thats", "that's"),
    ("thered", "there'd"),
    ("thered've", "there'd've"),
    ("there'dve", "there'd've"),
    ("therere", "there're"),
    ("theres", "there's"),
    ("theyd", "they'd"),
    ("theyd've", "they'd've"),
    ("they'dve", "they'd've"),
    ("theyll", "they'll"),
    ("theyre", "they're"),
    ("theyve", "they've"),
    ("twas", "'twas"),
    ("wasnt", "wasn't"),
    ("wed've", "we'd've"),
    ("we'dve", "we'd've"),
    ("weve", "we've"),
    ("werent", "weren't"),
    ("whatll", "what'll"),
    ("whatre", "what're"),
    ("whats", "what's"),
    ("whatve", "what've"),
    ("whens", "when's"),
    ("whered", "where'd"),
    ("wheres", "where's"),
    ("whereve", "where've"),
    ("whod", "who'd"),
    ("whod've", "who'd've"),
    ("who'dve", "who'd've"),
    ("wholl", "who'll"),
    ("whos", "who's"),
    ("whove", "who've"),
    ("whyll", "why'll"),
    ("whyre", "why're"),
    ("whys", "why's"),
    ("wont", "won't"),
    ("wouldve", "would've"),
    ("wouldnt", "wouldn't"),
    ("wouldnt've", "wouldn't've"),
    ("wouldn'tve", "wouldn't've"),
    ("yall", "y'all"),
    ("yall'll", "y'all'll"),
    ("y'allll", "y'all'll"),
    ("yall'd've", "y'all'd've"),
    ("y'alld've", "y'all'd've"),
    ("y'all'dve", "y'all'd've"),
    ("youd", "you'd"),
    ("youd've", "you'd've"),
    ("you'dve", "you'd've"),
    ("youll", "you'll"),
    ("youre", "you're"),
    ("youve", "you've"),
];

fn contraction_map() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| CONTRACTIONS.iter().copied().collect())
}

fn digit_comma_digit() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d,\d").expect("static regex"))
}

/// Punctuation pass of the reference evaluator.
///
/// Each listed mark is deleted when it touches a space (or when the text holds
/// a digit-comma-digit run) and replaced by a space otherwise. Periods are then
/// deleted unless a digit follows them.
fn process_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let comma_in_number = text.contains(',') && digit_comma_digit().is_match(text);
    // A mark is deleted everywhere if any occurrence touches a space.
    let mut touches_space = [false; PUNCTUATION.len()];
    for (n, c) in chars.iter().enumerate() {
        if let Some(slot) = PUNCTUATION.iter().position(|p| p == c) {
            let before = n > 0 && chars[n - 1] == ' ';
            let after = chars.get(n + 1) == Some(&' ');
            touches_space[slot] |= before || after;
        }
    }
    let mut replaced = Vec::with_capacity(chars.len());
    for &c in &chars {
        match PUNCTUATION.iter().position(|p| *p == c) {
            Some(slot) if touches_space[slot] || comma_in_number => {}
            Some(_) => replaced.push(' '),
            None => replaced.push(c),
        }
    }
    let mut stripped = String::with_capacity(text.len());
    for (n, &c) in replaced.iter().enumerate() {
        let digit_follows = replaced.get(n + 1).is_some_and(|next| next.is_numeric());
        if c == '.' && !digit_follows {
            continue;
        }
        stripped.push(c);
    }
    stripped
}

/// Digit-word, article and contraction pass of the reference evaluator.
fn process_digit_article(text: &str) -> String {
    let lowered = text.to_lowercase();
    let contractions = contraction_map();
    let mut words: Vec<&str> = Vec::new();
    for word in lowered.split_whitespace() {
        let word = DIGIT_WORDS
            .iter()
            .find(|(w, _)| *w == word)
            .map_or(word, |(_, d)| *d);
        if !ARTICLES.contains(&word) {
            words.push(word);
        }
    }
    let words: Vec<&str> = words
        .into_iter()
        .map(|w| contractions.get(w).copied().unwrap_or(w))
        .collect();
    words.join(" ")
}

/// Normalizes an answer with the VQA-challenge rules. Total and idempotent.
pub fn normalize(raw: &str) -> NormalizedAnswer {
    let flat = raw.replace(['\n', '\t'], " ");
    let punct = process_punctuation(flat.trim());
    NormalizedAnswer(process_digit_article(&punct))
}

/// Leave-one-out credit in `0..=MAX_CREDIT` for an already-normalized candidate.
fn credit_normalized(candidate: &NormalizedAnswer, gold: &[NormalizedAnswer]) -> u32 {
    let matches = gold.iter().filter(|g| *g == candidate).count() as u32;
    // Dropping a matching annotator leaves matches-1, any other leaves matches.
    gold.iter()
        .map(|g| {
            let remaining = if g == candidate { matches - 1 } else { matches };
            remaining.min(FULL_MATCH)
        })
        .sum()
}

fn normalized_gold(gold: &[impl AsRef<str>]) -> Result<Vec<NormalizedAnswer>, MetricError> {
    if gold.len() != ANNOTATORS {
        return Err(MetricError::GoldCount(gold.len()));
    }
    Ok(gold.iter().map(|g| normalize(g.as_ref())).collect())
}

/// Leave-one-out credit (`0..=30`) of one candidate against ten gold answers.
pub fn vqa_credit(candidate: &str, gold: &[impl AsRef<str>]) -> Result<u32, MetricError> {
    let gold = normalized_gold(gold)?;
    Ok(credit_normalized(&normalize(candidate), &gold))
}

/// VQA accuracy: mean over the ten nine-annotator subsets of `min(matches / 3, 1)`.
pub fn vqa_accuracy(candidate: &str, gold: &[impl AsRef<str>]) -> Result<f64, MetricError> {
    Ok(credit_to_accuracy(vqa_credit(candidate, gold)?))
}

pub fn credit_to_accuracy(credit: u32) -> f64 {
    f64::from(credit) / f64::from(MAX_CREDIT)
}

/// Mean accuracy from summed credits over `n` questions.
pub fn mean_accuracy(total_credit: u64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    total_credit as f64 / (u64::from(MAX_CREDIT) * n as u64) as f64
}

/// How many leading choices an oracle may pick from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TopK {
    Top(usize),
    All,
}

impl TopK {
    pub fn new(k: usize) -> Result<Self, MetricError> {
        if k == 0 {
            Err(MetricError::ZeroK)
        } else {
            Ok(TopK::Top(k))
        }
    }

    /// The k values reported in coverage tables.
    pub const REPORTED: [TopK; 4] = [TopK::Top(1), TopK::Top(3), TopK::Top(5), TopK::All];

    fn limit(self, len: usize) -> Result<usize, MetricError> {
        match self {
            TopK::Top(0) => Err(MetricError::ZeroK),
            TopK::Top(k) => Ok(k.min(len)),
            TopK::All => Ok(len),
        }
    }
}

impl fmt::Display for TopK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopK::Top(k) => write!(f, "top{k}"),
            TopK::All => f.write_str("all"),
        }
    }
}

/// Best credit reachable from the first `k` choices.
pub fn topk_credit(
    choices: &[impl AsRef<str>],
    gold: &[impl AsRef<str>],
    k: TopK,
) -> Result<u32, MetricError> {
    let gold = normalized_gold(gold)?;
    let limit = k.limit(choices.len())?;
    Ok(choices[..limit]
        .iter()
        .map(|c| credit_normalized(&normalize(c.as_ref()), &gold))
        .max()
        .unwrap_or(0))
}

/// Highest VQA accuracy an oracle could reach picking among the first `k` choices.
pub fn topk_accuracy(
    choices: &[impl AsRef<str>],
    gold: &[impl AsRef<str>],
    k: TopK,
) -> Result<f64, MetricError> {
    topk_credit(choices, gold, k).map(credit_to_accuracy)
}

/// Top-k knowledge coverage of a set of choice pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    pub all: f64,
    pub avg_choices: f64,
    pub n: usize,
}

impl CoverageReport {
    pub fn get(&self, k: TopK) -> Option<f64> {
        match k {
            TopK::Top(1) => Some(self.top1),
            TopK::Top(3) => Some(self.top3),
            TopK::Top(5) => Some(self.top5),
            TopK::All => Some(self.all),
            TopK::Top(_) => None,
        }
    }

    pub fn table_header() -> String {
        format!(
            "{:<16} {:>9} {:>9} {:>9} {:>8} {:>6}",
            "Run", "Top1 (%)", "Top3 (%)", "Top5 (%)", "All (%)", "Avg #"
        )
    }

    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{:<16} {:>9.1} {:>9.1} {:>9.1} {:>8.1} {:>6.1}",
            label,
            self.top1 * 100.0,
            self.top3 * 100.0,
            self.top5 * 100.0,
            self.all * 100.0,
            self.avg_choices
        )
    }

    /// Aligned plain-text table with the Top1, Top3, Top5, All, Avg # columns.
    pub fn to_table(&self, label: &str) -> String {
        format!("{}\n{}\n", Self::table_header(), self.table_row(label))
    }
}

/// Coverage over `run`, one choice pool per question.
pub fn coverage(
    run: &BTreeMap<QuestionId, ChoiceList>,
    dataset: &Dataset,
) -> Result<CoverageReport, MetricError> {
    if run.is_empty() {
        return Err(MetricError::EmptyRun);
    }
    let mut totals = [0u64; 4];
    let mut total_choices = 0usize;
    for (&qid, pool) in run {
        let inst = dataset
            .instance(qid)
            .ok_or(MetricError::UnknownQuestion(qid))?;
        let gold = normalized_gold(&inst.gold_answers)?;
        let credits: Vec<u32> = pool
            .choices
            .iter()
            .map(|c| credit_normalized(&normalize(c), &gold))
            .collect();
        for (slot, k) in totals.iter_mut().zip(TopK::REPORTED) {
            let limit = k.limit(credits.len())?;
            *slot += u64::from(credits[..limit].iter().copied().max().unwrap_or(0));
        }
        total_choices += pool.choices.len();
    }
    let n = run.len();
    Ok(CoverageReport {
        top1: mean_accuracy(totals[0], n),
        top3: mean_accuracy(totals[1], n),
        top5: mean_accuracy(totals[2], n),
        all: mean_accuracy(totals[3], n),
        avg_choices: total_choices as f64 / n as f64,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold_with(matching: &str, m: usize) -> Vec<String> {
        (0..10)
            .map(|i| {
                if i < m {
                    matching.to_string()
                } else {
                    format!("other{i}")
                }
            })
            .collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("A Tie").as_str(), "tie");
        assert_eq!(normalize("cat").as_str(), "cat");
        assert_eq!(normalize("two").as_str(), "2");
        assert_eq!(normalize("").as_str(), "");
    }

    #[test]
    fn contraction_table_has_no_conflicting_duplicates() {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for &(k, v) in CONTRACTIONS {
            assert!(seen.insert(k, v).is_none(), "duplicate entry for {k}");
        }
        assert_eq!(CONTRACTIONS.len(), 120);
    }

    #[test]
    fn accuracy_closed_cases() {
        assert_eq!(vqa_accuracy("x", &gold_with("x", 10)).unwrap(), 1.0);
        assert_eq!(vqa_accuracy("x", &gold_with("x", 0)).unwrap(), 0.0);
        assert_eq!(vqa_accuracy("x", &gold_with("x", 1)).unwrap(), 0.3);
        assert_eq!(vqa_accuracy("x", &gold_with("x", 2)).unwrap(), 0.6);
        assert_eq!(vqa_accuracy("x", &gold_with("x", 3)).unwrap(), 0.9);
        assert_eq!(vqa_accuracy("x", &gold_with("x", 4)).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_normalizes_both_sides() {
        let gold = gold_with("The Dog!", 3);
        assert_eq!(vqa_accuracy("dog", &gold).unwrap(), 0.9);
        assert_eq!(vqa_accuracy("a dog.", &gold).unwrap(), 0.9);
    }

    #[test]
    fn accuracy_rejects_wrong_gold_count() {
        let gold = vec!["x"; 9];
        assert_eq!(vqa_accuracy("x", &gold), Err(MetricError::GoldCount(9)));
    }

    #[test]
    fn topk_examples() {
        let gold = gold_with("c", 10);
        let choices = ["a", "b", "c"];
        assert_eq!(topk_accuracy(&choices, &gold, TopK::Top(1)).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&choices, &gold, TopK::Top(3)).unwrap(), 1.0);
        let empty: [&str; 0] = [];
        assert_eq!(topk_accuracy(&empty, &gold, TopK::All).unwrap(), 0.0);
        assert_eq!(TopK::new(0), Err(MetricError::ZeroK));
        assert_eq!(
            topk_accuracy(&choices, &gold, TopK::Top(0)),
            Err(MetricError::ZeroK)
        );

        let mut mixed = gold_with("a", 2);
        mixed[2] = "b".into();
        mixed[3] = "b".into();
        mixed[4] = "b".into();
        assert_eq!(topk_accuracy(&["a", "b"], &mixed, TopK::All).unwrap(), 0.9);
    }

    #[test]
    fn table_layout() {
        let report = CoverageReport {
            top1: 0.529,
            top3: 0.678,
            top5: 0.689,
            all: 0.689,
            avg_choices: 3.2,
            n: 5046,
        };
        let table = report.to_table("codex");
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(
            lines[0],
            "Run               Top1 (%)  Top3 (%)  Top5 (%)  All (%)  Avg #"
        );
        assert_eq!(
            lines[1],
            "codex                 52.9      67.8      68.9     68.9    3.2"
        );
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            r#"{"top1":0.529,"top3":0.678,"top5":0.689,"all":0.689,"avg_choices":3.2,"n":5046}"#
        );
    }
}
