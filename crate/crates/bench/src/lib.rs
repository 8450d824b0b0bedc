//! Synthetic inputs for the benchmarks in `benches/`.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raso_core::model::{EmbeddingKind, EmbeddingStore};
use raso_core::prompts::pool_choices;
use raso_core::{ChoiceList, Dataset, ImageContext, QaInstance, QuestionId, Split};

/// Size of the OK-VQA train split.
pub const TRAIN_SIZE: usize = 9009;

const WORDS: &[&str] = &[
    "surfing", "London", "two", "3", "the dog", "cant", "ice-cream", "new york", "yes.",
    "fire hydrant", "Christmas", "a tennis racket", "wedding cake", "100", "don't know",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn answer(rng: &mut impl Rng) -> String {
    WORDS.choose(rng).unwrap().to_string()
}

pub fn gold(rng: &mut impl Rng) -> Vec<String> {
    (0..10).map(|_| answer(rng)).collect()
}

fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// `n_train` train and `n_test` test questions with `dim`-dimensional embeddings.
pub fn dataset(n_train: usize, n_test: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let mut images = EmbeddingStore::new(EmbeddingKind::Image);
    let mut questions = EmbeddingStore::new(EmbeddingKind::Question);
    let mut instances = Vec::new();
    let mut contexts = Vec::new();
    for i in 0..n_train + n_test {
        let id = i as u64 + 1;
        images.insert(id, unit_vector(&mut rng, dim)).unwrap();
        questions.insert(id, unit_vector(&mut rng, dim)).unwrap();
        instances.push(QaInstance {
            question_id: id,
            image_id: id,
            question: format!("What is shown in picture number {id}?"),
            gold_answers: gold(&mut rng),
            split: if i < n_train { Split::Train } else { Split::Test },
        });
        contexts.push(ImageContext {
            image_id: id,
            caption: "a man riding a wave on top of a surfboard".into(),
            tags: vec!["surfboard".into(), "wave".into(), "ocean".into()],
        });
    }
    Dataset::from_parts(instances, contexts, images, questions).unwrap()
}

/// One pool of up to `max_len` choices per test question of `dataset`.
pub fn choice_run(dataset: &Dataset, max_len: usize, seed: u64) -> BTreeMap<QuestionId, ChoiceList> {
    let mut rng = rng(seed);
    dataset
        .split(Split::Test)
        .map(|inst| {
            let n = rng.random_range(1..=max_len);
            let raw: Vec<String> = (0..n).map(|_| answer(&mut rng)).collect();
            (inst.question_id, pool_choices(inst.question_id, &raw, &[]))
        })
        .collect()
}
