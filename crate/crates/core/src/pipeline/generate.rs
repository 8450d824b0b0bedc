use std::collections::BTreeSet;

use super::{ItemError, ItemOutput, Pipeline, PipelineError, Stage, StageOutput, StagePlan};
use crate::backend::{Backend, CompletionRequest};
use crate::model::{QaInstance, Split};
use crate::prompts::{
    build_cot_prompt, build_prompt_q, build_prompt_qc, parse_choices, pool_choices, ChoiceList,
    ContextShot, Rationale,
};

impl<'a> Pipeline<'a> {
    pub(super) fn similar_train(&self, target: &QaInstance, n: usize) -> Result<Vec<&'a QaInstance>, ItemError> {
        let found = self.retriever.retrieve(target, self.dataset, n)?;
        Ok(found
            .shots
            .iter()
            .map(|s| {
                self.dataset
                    .instance(s.train_question_id)
                    .expect("scored ids come from the dataset")
            })
            .collect())
    }

    /// The QC and Q requests for one question, in that order.
    fn choice_requests(
        &self,
        target: &QaInstance,
        backend: &Backend,
    ) -> Result<[CompletionRequest; 2], ItemError> {
        let context = self
            .dataset
            .context(target.image_id)
            .ok_or_else(|| ItemError::Input(format!("no context for image {}", target.image_id)))?;
        let shots = self.similar_train(target, self.config.shots_for(target.split))?;
        let ctx_shots: Vec<_> = shots
            .iter()
            .map(|&instance| ContextShot {
                instance,
                context: self.dataset.context(instance.image_id),
            })
            .collect();
        let qc = build_prompt_qc(self.templates, target, context, &ctx_shots)?;
        let q = build_prompt_q(self.templates, target, &shots)?;
        let params = &self.config.generation;
        Ok([
            backend.request(&qc.text, params)?,
            backend.request(&q.text, params)?,
        ])
    }

    fn cot_request(&self, target: &QaInstance, backend: &Backend) -> Result<CompletionRequest, ItemError> {
        let context = self
            .dataset
            .context(target.image_id)
            .ok_or_else(|| ItemError::Input(format!("no context for image {}", target.image_id)))?;
        let prompt = build_cot_prompt(self.templates, target, context);
        Ok(backend.request(&prompt.text, &self.config.cot)?)
    }

    /// Runs both choice-generation prompts per question and pools the answers.
    pub fn generate_choices(
        &self,
        split: Split,
        backend: &Backend,
    ) -> Result<StageOutput<ChoiceList>, PipelineError> {
        let items = self.questions(split)?;
        let version = self.templates.version.as_str();
        self.run_stage(Stage::Choices, &items, |target| {
            let [qc, q] = self.choice_requests(target, backend)?;
            let qc_out = parse_choices(&backend.complete(qc, version)?.completion);
            let q_out = parse_choices(&backend.complete(q, version)?.completion);
            let list = pool_choices(target.question_id, &qc_out, &q_out);
            let mut item = ItemOutput::new(list, 2);
            if item.value.is_empty() {
                item.flags.push("empty choice list".into());
            }
            Ok(item)
        })
    }

    /// One sampled rationale per question.
    pub fn generate_cots(
        &self,
        split: Split,
        backend: &Backend,
    ) -> Result<StageOutput<Rationale>, PipelineError> {
        let items = self.questions(split)?;
        let version = self.templates.version.as_str();
        self.run_stage(Stage::Cots, &items, |target| {
            let req = self.cot_request(target, backend)?;
            let record = backend.complete(req, version)?;
            let rationale = Rationale::from_completion(target.question_id, &record.completion);
            let mut item = ItemOutput::new(rationale, 1);
            if item.value.text.is_empty() {
                item.flags.push("empty rationale".into());
            }
            Ok(item)
        })
    }

    /// Counts the requests [`Self::generate_choices`] would issue and how many are cached.
    pub fn plan_choices(&self, split: Split, backend: &Backend) -> Result<StagePlan, PipelineError> {
        let items = self.questions(split)?;
        Ok(plan(&items, backend, |t| {
            self.choice_requests(t, backend).map(Vec::from)
        }))
    }

    pub fn plan_cots(&self, split: Split, backend: &Backend) -> Result<StagePlan, PipelineError> {
        let items = self.questions(split)?;
        Ok(plan(&items, backend, |t| self.cot_request(t, backend).map(|r| vec![r])))
    }
}

fn plan<F>(items: &[&QaInstance], backend: &Backend, requests: F) -> StagePlan
where
    F: Fn(&QaInstance) -> Result<Vec<CompletionRequest>, ItemError>,
{
    let mut plan = StagePlan {
        questions: items.len(),
        ..StagePlan::default()
    };
    let mut seen = BTreeSet::new();
    for target in items {
        match requests(target) {
            Ok(reqs) => {
                for r in reqs {
                    plan.prompts += 1;
                    let key = r.cache_key();
                    if backend.is_cached(&r) {
                        plan.cached += 1;
                    } else if seen.insert(key) {
                        plan.wire_calls += 1;
                    }
                }
            }
            Err(e) => {
                log::warn!("question {}: {e}", target.question_id);
                plan.unbuildable += 1;
            }
        }
    }
    plan
}
