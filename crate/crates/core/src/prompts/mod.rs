//! Prompt builders for choice generation, rationale generation and answer
//! selection, plus parsing of the completions they elicit.
//!
//! All builders are pure: the same target, shots and [`TemplateSet`] always
//! produce the same bytes, with `\n` line endings.

mod choices;
mod templates;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use choices::{
    modal_answer, parse_choices, pool_choices, unique_gold_answers, ChoiceList, ChoiceSource,
    Provenance,
};
pub use templates::{TemplateError, TemplateSet};

use crate::backend::RequestParams;
use crate::metric::NormalizedAnswer;
use crate::model::{ImageContext, QaInstance, QuestionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "QC")]
    Qc,
    #[serde(rename = "COT")]
    Cot,
    #[serde(rename = "SELECT")]
    Select,
}

impl PromptKind {
    /// Generation parameters each prompt family is sent with by default.
    pub fn default_params(self) -> RequestParams {
        match self {
            PromptKind::Q | PromptKind::Qc => RequestParams::new(0.001, 15).with_stop(["\n"]),
            PromptKind::Cot => RequestParams::new(0.7, 80),
            PromptKind::Select => RequestParams::new(0.001, 5).with_stop(["\n"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub kind: PromptKind,
    pub text: String,
    /// Question ids of the in-context examples, in prompt order.
    pub shot_ids: Vec<QuestionId>,
}

/// A chain-of-thought rationale for one question. Always a single line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rationale {
    pub question_id: QuestionId,
    pub text: String,
}

impl Rationale {
    /// Keeps the first line of a completion, trimmed.
    pub fn from_completion(question_id: QuestionId, completion: &str) -> Self {
        let text = completion
            .trim_start()
            .lines()
            .next()
            .unwrap_or_default()
            .trim()
            .to_string();
        Self { question_id, text }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no in-context examples given")]
    NoShots,
    #[error("example {0} has no usable gold answers")]
    NoUsableAnswers(QuestionId),
    #[error("no context for question {0}")]
    MissingContext(QuestionId),
    #[error("question {0} has an empty choice list")]
    EmptyChoices(QuestionId),
}

/// An in-context example for the context+question prompt.
#[derive(Debug, Clone, Copy)]
pub struct ContextShot<'a> {
    pub instance: &'a QaInstance,
    pub context: Option<&'a ImageContext>,
}

/// A solved example for the selection prompt.
#[derive(Debug, Clone)]
pub struct SelectShot<'a> {
    pub instance: &'a QaInstance,
    pub context: Option<&'a ImageContext>,
    pub rationale: Option<&'a str>,
    pub choices: Vec<String>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `Context: {caption}. Tags: {t1, t2}` with the tags segment dropped when empty.
fn context_line(ctx: &ImageContext) -> String {
    let caption = one_line(&ctx.caption);
    let caption = caption.trim_end_matches('.');
    let tags: Vec<String> = ctx
        .tags
        .iter()
        .map(|t| one_line(t))
        .filter(|t| !t.is_empty())
        .collect();
    if tags.is_empty() {
        format!("Context: {caption}.")
    } else {
        format!("Context: {caption}. Tags: {}", tags.join(", "))
    }
}

fn shot_answers(shot: &QaInstance) -> Result<String, PromptError> {
    let answers = unique_gold_answers(&shot.gold_answers);
    if answers.is_empty() {
        return Err(PromptError::NoUsableAnswers(shot.question_id));
    }
    Ok(answers
        .iter()
        .map(NormalizedAnswer::as_str)
        .collect::<Vec<_>>()
        .join(" or "))
}

fn require_context<'a>(
    inst: &QaInstance,
    ctx: Option<&'a ImageContext>,
) -> Result<&'a ImageContext, PromptError> {
    ctx.ok_or(PromptError::MissingContext(inst.question_id))
}

/// Question-only choice-generation prompt.
pub fn build_prompt_q(
    templates: &TemplateSet,
    target: &QaInstance,
    shots: &[&QaInstance],
) -> Result<PromptText, PromptError> {
    if shots.is_empty() {
        return Err(PromptError::NoShots);
    }
    let mut text = format!("{}\n\n", templates.q_instruction);
    for shot in shots {
        let answers = shot_answers(shot)?;
        let _ = write!(
            text,
            "Question: {}\nAnswer: {answers}\n\n",
            one_line(&shot.question)
        );
    }
    let _ = write!(text, "Question: {}\nAnswer:", one_line(&target.question));
    Ok(PromptText {
        kind: PromptKind::Q,
        text,
        shot_ids: shots.iter().map(|s| s.question_id).collect(),
    })
}

/// Context+question choice-generation prompt.
pub fn build_prompt_qc(
    templates: &TemplateSet,
    target: &QaInstance,
    context: &ImageContext,
    shots: &[ContextShot<'_>],
) -> Result<PromptText, PromptError> {
    if shots.is_empty() {
        return Err(PromptError::NoShots);
    }
    let mut text = format!("{}\n\n", templates.qc_instruction);
    for shot in shots {
        let ctx = require_context(shot.instance, shot.context)?;
        let answers = shot_answers(shot.instance)?;
        let _ = write!(
            text,
            "{}\nQuestion: {}\nAnswer: {answers}\n\n",
            context_line(ctx),
            one_line(&shot.instance.question)
        );
    }
    let _ = write!(
        text,
        "{}\nQuestion: {}\nAnswer:",
        context_line(context),
        one_line(&target.question)
    );
    Ok(PromptText {
        kind: PromptKind::Qc,
        text,
        shot_ids: shots.iter().map(|s| s.instance.question_id).collect(),
    })
}

/// Fixed-preamble rationale prompt. No retrieval is involved.
pub fn build_cot_prompt(
    templates: &TemplateSet,
    target: &QaInstance,
    context: &ImageContext,
) -> PromptText {
    let text = format!(
        "{}\n\n{}\nQuestion: {}\nRationale:",
        templates.cot_preamble,
        context_line(context),
        one_line(&target.question)
    );
    PromptText {
        kind: PromptKind::Cot,
        text,
        shot_ids: Vec::new(),
    }
}

fn select_block(
    text: &mut String,
    inst: &QaInstance,
    ctx: &ImageContext,
    rationale: Option<&str>,
    choices: &[String],
) {
    let _ = write!(
        text,
        "{}\nquestion: {}\n",
        context_line(ctx),
        one_line(&inst.question)
    );
    if let Some(r) = rationale {
        let _ = writeln!(text, "rationale: {}", one_line(r));
    }
    let _ = write!(text, "choices: {}\nanswers:", choices.join(", "));
}

/// Answer-selection prompt over a choice list, with solved examples.
pub fn build_select_prompt(
    templates: &TemplateSet,
    target: &QaInstance,
    context: &ImageContext,
    rationale: Option<&Rationale>,
    choices: &ChoiceList,
    shots: &[SelectShot<'_>],
) -> Result<PromptText, PromptError> {
    if choices.is_empty() {
        return Err(PromptError::EmptyChoices(target.question_id));
    }
    let mut text = format!("{}\n\n", templates.select_instruction);
    for shot in shots {
        let ctx = require_context(shot.instance, shot.context)?;
        let answer = modal_answer(&shot.instance.gold_answers)
            .ok_or(PromptError::NoUsableAnswers(shot.instance.question_id))?;
        if shot.choices.is_empty() {
            return Err(PromptError::EmptyChoices(shot.instance.question_id));
        }
        select_block(&mut text, shot.instance, ctx, shot.rationale, &shot.choices);
        let _ = write!(text, " {answer}\n\n");
    }
    select_block(
        &mut text,
        target,
        context,
        rationale.map(|r| r.text.as_str()),
        &choices.choices,
    );
    Ok(PromptText {
        kind: PromptKind::Select,
        text,
        shot_ids: shots.iter().map(|s| s.instance.question_id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Split;

    fn inst(id: u64, q: &str, answers: &[&str]) -> QaInstance {
        let mut gold: Vec<String> = answers.iter().map(|s| s.to_string()).collect();
        while gold.len() < 10 {
            gold.push(gold.last().cloned().unwrap_or_default());
        }
        QaInstance {
            question_id: id,
            image_id: id * 10,
            question: q.into(),
            gold_answers: gold,
            split: Split::Train,
        }
    }

    fn ctx(id: u64, caption: &str, tags: &[&str]) -> ImageContext {
        ImageContext {
            image_id: id * 10,
            caption: caption.into(),
            tags: tags.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn q_prompt_layout() {
        let t = TemplateSet::builtin();
        let shot = inst(1, "What animal is this?", &["cat"; 10]);
        let target = inst(2, "Where is this?", &["park"]);
        let p = build_prompt_q(&t, &target, &[&shot]).unwrap();
        assert_eq!(
            p.text,
            "Please list all the possible answers to the following question.\n\n\
             Question: What animal is this?\nAnswer: cat\n\n\
             Question: Where is this?\nAnswer:"
        );
        assert_eq!(p.shot_ids, vec![1]);
    }

    #[test]
    fn q_prompt_joins_answers_in_first_seen_order() {
        let t = TemplateSet::builtin();
        let mut answers = vec!["office"; 5];
        answers.extend(["university"; 5]);
        let shot = inst(1, "What place is this?", &answers);
        let p = build_prompt_q(&t, &inst(2, "?", &["x"]), &[&shot]).unwrap();
        assert!(p.text.contains("Answer: office or university\n"));
    }

    #[test]
    fn prompt_errors() {
        let t = TemplateSet::builtin();
        let target = inst(2, "q", &["x"]);
        assert_eq!(build_prompt_q(&t, &target, &[]), Err(PromptError::NoShots));
        let blank = inst(3, "q", &["the"; 10]);
        assert_eq!(
            build_prompt_q(&t, &target, &[&blank]),
            Err(PromptError::NoUsableAnswers(3))
        );
        let c = ctx(2, "a thing", &[]);
        let shot = ContextShot {
            instance: &blank,
            context: None,
        };
        assert_eq!(
            build_prompt_qc(&t, &target, &c, &[shot]),
            Err(PromptError::MissingContext(3))
        );
        assert_eq!(
            build_select_prompt(&t, &target, &c, None, &ChoiceList::new(2), &[]),
            Err(PromptError::EmptyChoices(2))
        );
    }

    #[test]
    fn qc_prompt_instruction_and_tags() {
        let t = TemplateSet::builtin();
        let shot = inst(1, "What is the man holding?", &["bat"]);
        let shot_ctx = ctx(1, "A man holding a bat.", &[]);
        let target = inst(2, "What sport is this?", &["baseball"]);
        let target_ctx = ctx(2, "a baseball game", &["bat", "glove"]);
        let p = build_prompt_qc(
            &t,
            &target,
            &target_ctx,
            &[ContextShot {
                instance: &shot,
                context: Some(&shot_ctx),
            }],
        )
        .unwrap();
        assert!(p
            .text
            .starts_with("Please list all the possible answers to the question.\n\n"));
        assert!(p.text.contains(
            "Context: A man holding a bat.\nQuestion: What is the man holding?\nAnswer: bat\n\n"
        ));
        assert!(p.text.ends_with(
            "Context: a baseball game. Tags: bat, glove\nQuestion: What sport is this?\nAnswer:"
        ));
        assert!(!p.text.contains("Tags:\n"));
    }

    #[test]
    fn cot_prompt_is_fixed_and_parameterised() {
        let t = TemplateSet::builtin();
        let target = inst(2, "What sport is this?", &["baseball"]);
        let c = ctx(2, "a baseball game", &["bat"]);
        let a = build_cot_prompt(&t, &target, &c);
        let b = build_cot_prompt(&t, &target, &c);
        assert_eq!(a, b);
        assert!(a.shot_ids.is_empty());
        assert!(a.text.ends_with("Question: What sport is this?\nRationale:"));
        let params = PromptKind::Cot.default_params();
        assert_eq!((params.temperature, params.max_tokens), (0.7, 80));
    }

    #[test]
    fn select_prompt_single_choice_and_modal_shot_answer() {
        let t = TemplateSet::builtin();
        let shot = inst(
            1,
            "What is the man holding?",
            &["club", "bat", "bat", "club", "bat", "stick", "bat", "club", "bat", "bat"],
        );
        let shot_ctx = ctx(1, "a man holding a bat", &[]);
        let target = inst(2, "What sport is this?", &["baseball"]);
        let c = ctx(2, "a baseball game", &[]);
        let choices = pool_choices(2, &["baseball".to_string()], &[]);
        let rationale = Rationale {
            question_id: 2,
            text: "People are playing with a bat.".into(),
        };
        let shots = [SelectShot {
            instance: &shot,
            context: Some(&shot_ctx),
            rationale: None,
            choices: vec!["club".into(), "bat".into()],
        }];
        let p = build_select_prompt(&t, &target, &c, Some(&rationale), &choices, &shots).unwrap();
        assert_eq!(
            p.text,
            "Please choose the correct answer to the question from the choices.\n\n\
             Context: a man holding a bat.\nquestion: What is the man holding?\nchoices: club, bat\nanswers: bat\n\n\
             Context: a baseball game.\nquestion: What sport is this?\nrationale: People are playing with a bat.\nchoices: baseball\nanswers:"
        );
    }

    #[test]
    fn rationale_keeps_first_line() {
        let r = Rationale::from_completion(5, " The dog is wet.\nSecond line\n");
        assert_eq!(r.text, "The dog is wet.");
        assert_eq!(Rationale::from_completion(5, "").text, "");
    }
}
