//! In-context example retrieval by joint image/question embedding similarity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{Dataset, EmbeddingKind, QaInstance, QuestionId, Split};

/// Shots used when prompting for test-split questions.
pub const TEST_SHOTS: usize = 16;
/// Shots used when prompting for train-split questions.
pub const TRAIN_SHOTS: usize = 4;
/// Solved examples in the selection prompt.
pub const SELECT_SHOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("question {question_id} has no {kind} embedding")]
    MissingTargetEmbedding {
        question_id: QuestionId,
        kind: EmbeddingKind,
    },
    #[error("question {question_id}: {kind} embedding unusable: {reason}")]
    BadTargetEmbedding {
        question_id: QuestionId,
        kind: EmbeddingKind,
        reason: Box<RetrievalError>,
    },
    #[error("n_shots must be positive")]
    ZeroShots,
    #[error("requested {requested} shots but only {available} usable train candidates")]
    NotEnoughCandidates { requested: usize, available: usize },
}

/// Cosine similarity `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub train_question_id: QuestionId,
    pub score: f64,
}

/// Weights of the image and question cosines in the combined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrieverConfig {
    pub image_weight: f64,
    pub question_weight: f64,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            image_weight: 0.5,
            question_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    /// Best first; ties broken by ascending question id.
    pub shots: Vec<SimilarityScore>,
    /// Train candidates skipped for missing or unusable embeddings.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Retriever {
    config: RetrieverConfig,
}

impl Retriever {
    pub fn new(config: RetrieverConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> RetrieverConfig {
        self.config
    }

    fn target_vector<'d>(
        dataset: &'d Dataset,
        target: &QaInstance,
        kind: EmbeddingKind,
    ) -> Result<&'d [f64], RetrievalError> {
        let v = match kind {
            EmbeddingKind::Image => dataset.image_embedding(target.image_id),
            EmbeddingKind::Question => dataset.question_embedding(target.question_id),
        };
        let v = v.ok_or(RetrievalError::MissingTargetEmbedding {
            question_id: target.question_id,
            kind,
        })?;
        if v.iter().all(|x| *x == 0.0) {
            return Err(RetrievalError::BadTargetEmbedding {
                question_id: target.question_id,
                kind,
                reason: Box::new(RetrievalError::ZeroNorm),
            });
        }
        Ok(v)
    }

    /// Scores every usable train candidate against `target`, target excluded.
    pub fn score_all(
        &self,
        target: &QaInstance,
        dataset: &Dataset,
    ) -> Result<(Vec<SimilarityScore>, usize), RetrievalError> {
        let t_img = Self::target_vector(dataset, target, EmbeddingKind::Image)?;
        let t_q = Self::target_vector(dataset, target, EmbeddingKind::Question)?;
        let mut scores = Vec::new();
        let mut skipped = 0;
        for cand in dataset.split(Split::Train) {
            if cand.question_id == target.question_id {
                continue;
            }
            let (Some(c_img), Some(c_q)) = (
                dataset.image_embedding(cand.image_id),
                dataset.question_embedding(cand.question_id),
            ) else {
                skipped += 1;
                continue;
            };
            match (cosine(t_img, c_img), cosine(t_q, c_q)) {
                (Ok(si), Ok(sq)) => {
                    let score = self.config.image_weight * si + self.config.question_weight * sq;
                    scores.push(SimilarityScore {
                        train_question_id: cand.question_id,
                        // -0.0 would sort below 0.0 and break the id tie-break.
                        score: if score == 0.0 { 0.0 } else { score },
                    })
                }
                _ => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!(
                "question {}: skipped {skipped} train candidates without usable embeddings",
                target.question_id
            );
        }
        Ok((scores, skipped))
    }

    /// The `n_shots` most similar train instances.
    pub fn retrieve(
        &self,
        target: &QaInstance,
        dataset: &Dataset,
        n_shots: usize,
    ) -> Result<Retrieved, RetrievalError> {
        if n_shots == 0 {
            return Err(RetrievalError::ZeroShots);
        }
        let (mut scores, skipped) = self.score_all(target, dataset)?;
        if scores.len() < n_shots {
            return Err(RetrievalError::NotEnoughCandidates {
                requested: n_shots,
                available: scores.len(),
            });
        }
        scores.sort_by(rank_order);
        scores.truncate(n_shots);
        Ok(Retrieved {
            shots: scores,
            skipped,
        })
    }
}

fn rank_order(a: &SimilarityScore, b: &SimilarityScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.train_question_id.cmp(&b.train_question_id))
}

/// Retrieves with default weights and resolves ids to instances.
pub fn retrieve_examples<'d>(
    target: &QaInstance,
    dataset: &'d Dataset,
    n_shots: usize,
) -> Result<Vec<&'d QaInstance>, RetrievalError> {
    let found = Retriever::default().retrieve(target, dataset, n_shots)?;
    Ok(found
        .shots
        .iter()
        .map(|s| {
            dataset
                .instance(s.train_question_id)
                .expect("scored ids come from the dataset")
        })
        .collect())
}

/// Default shot count for a target's split.
pub fn default_shots(split: Split) -> usize {
    match split {
        Split::Train => TRAIN_SHOTS,
        Split::Test => TEST_SHOTS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingStore, ImageContext};

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(RetrievalError::DimensionMismatch(1, 2))
        );
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(RetrievalError::ZeroNorm));
    }

    fn inst(id: u64, split: Split) -> QaInstance {
        QaInstance {
            question_id: id,
            image_id: id,
            question: format!("q{id}"),
            gold_answers: vec!["a".into(); 10],
            split,
        }
    }

    type Row = (u64, Split, Option<[f64; 2]>, [f64; 2]);

    fn dataset(vectors: &[Row]) -> Dataset {
        let mut img = EmbeddingStore::new(EmbeddingKind::Image);
        let mut q = EmbeddingStore::new(EmbeddingKind::Question);
        for (id, _, iv, qv) in vectors {
            if let Some(iv) = iv {
                img.insert(*id, iv.to_vec()).unwrap();
            }
            q.insert(*id, qv.to_vec()).unwrap();
        }
        Dataset::from_parts(
            vectors.iter().map(|(id, s, _, _)| inst(*id, *s)),
            std::iter::empty::<ImageContext>(),
            img,
            q,
        )
        .unwrap()
    }

    #[test]
    fn identical_embeddings_rank_first_with_score_one() {
        let ds = dataset(&[
            (1, Split::Train, Some([0.0, 1.0]), [1.0, 1.0]),
            (2, Split::Train, Some([1.0, 2.0]), [3.0, 1.0]),
            (3, Split::Train, Some([1.0, 0.5]), [1.0, -1.0]),
            (9, Split::Test, Some([1.0, 2.0]), [3.0, 1.0]),
        ]);
        let target = ds.instance(9).unwrap();
        let r = Retriever::default().retrieve(target, &ds, 3).unwrap();
        assert_eq!(r.shots[0].train_question_id, 2);
        assert!((r.shots[0].score - 1.0).abs() < 1e-15);
        let ids: Vec<_> = r.shots.iter().map(|s| s.train_question_id).collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn train_target_excludes_itself_and_ties_break_by_id() {
        let ds = dataset(&[
            (5, Split::Train, Some([1.0, 0.0]), [1.0, 0.0]),
            (3, Split::Train, Some([1.0, 0.0]), [1.0, 0.0]),
            (4, Split::Train, Some([1.0, 0.0]), [1.0, 0.0]),
        ]);
        let target = ds.instance(4).unwrap();
        let shots = retrieve_examples(target, &ds, 2).unwrap();
        let ids: Vec<_> = shots.iter().map(|s| s.question_id).collect();
        assert_eq!(ids, vec![3, 5]);
    }

    #[test]
    fn missing_candidate_embedding_is_skipped_target_is_fatal() {
        let ds = dataset(&[
            (1, Split::Train, None, [1.0, 0.0]),
            (2, Split::Train, Some([1.0, 0.0]), [1.0, 0.0]),
            (3, Split::Test, Some([1.0, 0.0]), [1.0, 0.0]),
            (4, Split::Test, None, [1.0, 0.0]),
        ]);
        let r = Retriever::default()
            .retrieve(ds.instance(3).unwrap(), &ds, 1)
            .unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.shots[0].train_question_id, 2);
        assert_eq!(
            Retriever::default().retrieve(ds.instance(3).unwrap(), &ds, 2),
            Err(RetrievalError::NotEnoughCandidates {
                requested: 2,
                available: 1
            })
        );
        assert!(matches!(
            Retriever::default().retrieve(ds.instance(4).unwrap(), &ds, 1),
            Err(RetrievalError::MissingTargetEmbedding {
                question_id: 4,
                kind: EmbeddingKind::Image
            })
        ));
        assert_eq!(
            Retriever::default().retrieve(ds.instance(3).unwrap(), &ds, 0),
            Err(RetrievalError::ZeroShots)
        );
    }
}
