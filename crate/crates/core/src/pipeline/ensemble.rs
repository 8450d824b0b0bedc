use std::collections::{BTreeMap, BTreeSet};

use super::PipelineError;
use crate::model::QuestionId;
use crate::prompts::{ChoiceList, ChoiceSource, Provenance};

/// Concatenates choice runs in the given order, keeping each answer's first
/// occurrence.
///
/// Provenance names the contributing run and the answer's rank within it.
/// Entries that already carry a run name (from an earlier ensemble) keep it,
/// so nesting ensembles yields the same provenance as one flat ensemble.
pub fn ensemble_choices(
    runs: &[(&str, &BTreeMap<QuestionId, ChoiceList>)],
) -> Result<BTreeMap<QuestionId, ChoiceList>, PipelineError> {
    if runs.len() < 2 {
        return Err(PipelineError::TooFewRuns(runs.len()));
    }
    let mut union = BTreeSet::new();
    for (_, run) in runs {
        union.extend(run.keys().copied());
    }
    let missing: Vec<QuestionId> = union
        .iter()
        .copied()
        .filter(|id| runs.iter().any(|(_, run)| !run.contains_key(id)))
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::QuestionSetMismatch(missing));
    }

    Ok(union
        .into_iter()
        .map(|id| {
            let items = runs.iter().flat_map(|(name, run)| {
                let list = &run[&id];
                list.choices
                    .iter()
                    .zip(&list.provenance)
                    .enumerate()
                    .map(move |(rank, (choice, prov))| {
                        let prov = match &prov.source {
                            ChoiceSource::Backend(_) => prov.clone(),
                            _ => Provenance {
                                source: ChoiceSource::Backend((*name).to_string()),
                                rank,
                            },
                        };
                        (choice.clone(), prov)
                    })
            });
            (id, ChoiceList::from_ranked(id, items))
        })
        .collect())
}
