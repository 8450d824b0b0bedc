use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ItemError, ItemOutput, Pipeline, PipelineError, Stage, StageOutput};
use crate::backend::Backend;
use crate::model::{QaInstance, QuestionId};
use crate::prompts::{
    build_select_prompt, parse_choices, unique_gold_answers, ChoiceList, Rationale, SelectShot,
};
use crate::metric::{normalize, NormalizedAnswer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Few-shot selection prompt over the pooled choices.
    PromptSelect,
    /// Always the highest-ranked choice.
    Top1Baseline,
    Kat,
    UnifiedQa,
    ClipCap,
}

impl Selector {
    pub const ALL: [Selector; 5] = [
        Selector::PromptSelect,
        Selector::Top1Baseline,
        Selector::Kat,
        Selector::UnifiedQa,
        Selector::ClipCap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Selector::PromptSelect => "prompt_select",
            Selector::Top1Baseline => "top1_baseline",
            Selector::Kat => "kat",
            Selector::UnifiedQa => "unified_qa",
            Selector::ClipCap => "clip_cap",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('-', "_");
        Selector::ALL
            .into_iter()
            .find(|sel| sel.as_str() == wanted)
            .ok_or_else(|| {
                let names: Vec<_> = Selector::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown selector `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub question_id: QuestionId,
    pub selected_answer: String,
    pub selector: Selector,
    pub raw_selector_output: String,
    /// Zero-based rank of the matched choice; `None` when the output matched
    /// nothing and the top choice was used instead.
    pub matched_choice_rank: Option<usize>,
}

/// How a selector output was mapped back onto the choice list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    Exact,
    /// A choice appears as a whole-word run inside the output.
    ChoiceInOutput,
    /// The output appears as a whole-word run inside a choice.
    OutputInChoice,
    Fallback,
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    !needle.is_empty() && format!(" {haystack} ").contains(&format!(" {needle} "))
}

/// Maps a raw selector completion onto a non-empty choice list.
///
/// The first answer on the first line is normalized and matched exactly,
/// then by whole-word containment in either direction, best rank first.
/// If nothing matches, the top choice is returned with `None` as its rank.
pub fn match_selection(raw_output: &str, choices: &ChoiceList) -> (String, Option<usize>, MatchKind) {
    let answer = parse_choices(raw_output)
        .into_iter()
        .next()
        .map(|a| normalize(&a).into_string())
        .unwrap_or_default();
    let answer = answer.as_str();
    let hit = |rank: usize, kind| (choices.choices[rank].clone(), Some(rank), kind);

    if let Some(rank) = choices.rank_of(answer) {
        return hit(rank, MatchKind::Exact);
    }
    if let Some(rank) = choices.choices.iter().position(|c| contains_words(answer, c)) {
        return hit(rank, MatchKind::ChoiceInOutput);
    }
    if let Some(rank) = choices.choices.iter().position(|c| contains_words(c, answer)) {
        return hit(rank, MatchKind::OutputInChoice);
    }
    (choices.choices[0].clone(), None, MatchKind::Fallback)
}

/// Choice lists and rationales already generated for train questions, used to
/// fill the selection prompt's examples. Missing entries fall back to the
/// example's unique gold answers and no rationale.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShotSources<'r> {
    pub choices: Option<&'r BTreeMap<QuestionId, ChoiceList>>,
    pub rationales: Option<&'r BTreeMap<QuestionId, Rationale>>,
}

impl<'a> Pipeline<'a> {
    fn select_shots<'s>(
        &'s self,
        target: &QaInstance,
        sources: ShotSources<'s>,
    ) -> Result<Vec<SelectShot<'s>>, ItemError> {
        let shots = self.similar_train(target, self.config.select_shots)?;
        Ok(shots
            .into_iter()
            .map(|instance| {
                let id = instance.question_id;
                let choices = sources
                    .choices
                    .and_then(|m| m.get(&id))
                    .filter(|c| !c.is_empty())
                    .map(|c| c.choices.clone())
                    .unwrap_or_else(|| {
                        unique_gold_answers(&instance.gold_answers)
                            .into_iter()
                            .map(NormalizedAnswer::into_string)
                            .collect()
                    });
                let rationale = self
                    .config
                    .select_with_rationale
                    .then(|| sources.rationales.and_then(|m| m.get(&id)))
                    .flatten()
                    .map(|r| r.text.as_str())
                    .filter(|t| !t.is_empty());
                SelectShot {
                    instance,
                    context: self.dataset.context(instance.image_id),
                    rationale,
                    choices,
                }
            })
            .collect())
    }

    /// Picks one answer per question from its choice list.
    pub fn select_answers(
        &self,
        choices: &BTreeMap<QuestionId, ChoiceList>,
        rationales: Option<&BTreeMap<QuestionId, Rationale>>,
        shot_sources: ShotSources<'_>,
        selector: Selector,
        backend: Option<&Backend>,
    ) -> Result<StageOutput<SelectionResult>, PipelineError> {
        let items = choices
            .keys()
            .map(|&id| self.dataset.instance(id).ok_or(PipelineError::UnknownQuestion(id)))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() {
            return Err(PipelineError::EmptyChoiceRun);
        }
        let list_for = |target: &QaInstance| {
            let list = &choices[&target.question_id];
            if list.is_empty() {
                Err(ItemError::Input("empty choice list".into()))
            } else {
                Ok(list)
            }
        };

        match selector {
            Selector::Top1Baseline => self.run_stage(Stage::Select, &items, |target| {
                let list = list_for(target)?;
                let result = SelectionResult {
                    question_id: target.question_id,
                    selected_answer: list.choices[0].clone(),
                    selector,
                    raw_selector_output: String::new(),
                    matched_choice_rank: Some(0),
                };
                Ok(ItemOutput::new(result, 0))
            }),
            Selector::PromptSelect => {
                let backend = backend.ok_or(PipelineError::MissingBackend(selector))?;
                let rationales = if self.config.select_with_rationale {
                    Some(rationales.ok_or(PipelineError::MissingRationales)?)
                } else {
                    None
                };
                let version = self.templates.version.as_str();
                self.run_stage(Stage::Select, &items, |target| {
                    let list = list_for(target)?;
                    let rationale = match rationales {
                        Some(m) => Some(m.get(&target.question_id).ok_or_else(|| {
                            ItemError::Input("no rationale for question".into())
                        })?),
                        None => None,
                    };
                    let context = self.dataset.context(target.image_id).ok_or_else(|| {
                        ItemError::Input(format!("no context for image {}", target.image_id))
                    })?;
                    let shots = self.select_shots(target, shot_sources)?;
                    let prompt = build_select_prompt(
                        self.templates,
                        target,
                        context,
                        rationale,
                        list,
                        &shots,
                    )?;
                    let req = backend.request(&prompt.text, &self.config.select)?;
                    let raw = backend.complete(req, version)?.completion;
                    let (selected_answer, matched_choice_rank, kind) = match_selection(&raw, list);
                    let mut item = ItemOutput::new(
                        SelectionResult {
                            question_id: target.question_id,
                            selected_answer,
                            selector,
                            raw_selector_output: raw,
                            matched_choice_rank,
                        },
                        1,
                    );
                    if kind == MatchKind::Fallback {
                        item.flags
                            .push("selector output matched no choice; used top choice".into());
                    }
                    Ok(item)
                })
            }
            Selector::Kat | Selector::UnifiedQa | Selector::ClipCap => {
                Err(PipelineError::SelectorNotSupported(selector))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::pool_choices;

    fn list(xs: &[&str]) -> ChoiceList {
        let xs: Vec<String> = xs.iter().map(|s| s.to_string()).collect();
        pool_choices(1, &xs, &[])
    }

    #[test]
    fn matching_order() {
        let l = list(&["office", "university", "school"]);
        assert_eq!(match_selection(" university\n", &l), ("university".into(), Some(1), MatchKind::Exact));
        assert_eq!(match_selection("The School.", &l), ("school".into(), Some(2), MatchKind::Exact));
        assert_eq!(
            match_selection("school building", &l),
            ("school".into(), Some(2), MatchKind::ChoiceInOutput)
        );
        let l2 = list(&["tennis court", "tennis racket"]);
        assert_eq!(
            match_selection("racket", &l2),
            ("tennis racket".into(), Some(1), MatchKind::OutputInChoice)
        );
        assert_eq!(match_selection("", &l), ("office".into(), None, MatchKind::Fallback));
        assert_eq!(match_selection("zebra", &l), ("office".into(), None, MatchKind::Fallback));
    }

    #[test]
    fn containment_respects_word_boundaries() {
        let l = list(&["2", "20"]);
        assert_eq!(match_selection("20 people", &l).1, Some(1));
        let l = list(&["cat"]);
        assert_eq!(match_selection("category", &l).2, MatchKind::Fallback);
    }

    #[test]
    fn selector_names_round_trip() {
        for sel in Selector::ALL {
            assert_eq!(sel.as_str().parse::<Selector>().unwrap(), sel);
            assert_eq!(serde_json::to_string(&sel).unwrap(), format!("\"{sel}\""));
        }
        assert_eq!("Prompt-Select".parse::<Selector>().unwrap(), Selector::PromptSelect);
        assert!("oracle".parse::<Selector>().is_err());
    }
}
