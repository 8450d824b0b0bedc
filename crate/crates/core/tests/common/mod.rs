//! Fixture dataset, scripted completer and helpers shared by integration tests.
//!
//! The files under `tests/fixtures/` are generated from the tables below
//! (`UPDATE_FIXTURES=1 cargo test -p raso-core --test fixtures`). Each test
//! question has a scripted completion for every prompt family, so the final
//! selected answer and its accuracy are known in advance.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use raso_core::backend::{BackendError, Completer, CompletionRequest};
use raso_core::model::{DatasetPaths, EmbeddingKind, EmbeddingStore};
use raso_core::{Dataset, ImageContext, QaInstance, Split, TemplateSet};

pub struct TestItem {
    pub question: &'static str,
    pub caption: &'static str,
    pub tags: &'static [&'static str],
    pub gold: [&'static str; 10],
    pub qc: &'static str,
    pub q: &'static str,
    pub cot: &'static str,
    pub select: &'static str,
}

pub struct TrainItem {
    pub question: &'static str,
    pub caption: &'static str,
    pub tags: &'static [&'static str],
    pub gold: [&'static str; 10],
}

pub const TEST_ID_BASE: u64 = 1;
pub const TRAIN_ID_BASE: u64 = 201;
pub const TEST_IMAGE_BASE: u64 = 101;
pub const TRAIN_IMAGE_BASE: u64 = 301;
const DIM: usize = 8;

pub const TEST_ITEMS: [TestItem; 20] = [
    TestItem {
        question: "What sport is being played?",
        caption: "A man riding a wave on top of a surfboard",
        tags: &["surfboard", "wave", "ocean", "man"],
        gold: ["surfing"; 10],
        qc: "surfing or swimming",
        q: "tennis or surfing",
        cot: "The man is standing on a surfboard riding a wave, so the sport is surfing.",
        select: " surfing",
    },
    TestItem {
        question: "What is the capital city where this bus is commonly seen?",
        caption: "A red double decker bus driving down a street",
        tags: &["bus", "street", "building"],
        gold: ["london", "london", "london", "uk", "uk", "england", "england", "england", "england", "paris"],
        qc: "england or london",
        q: "london or paris",
        cot: "Red double decker buses are a symbol of London, the capital of England.",
        select: "London",
    },
    TestItem {
        question: "What vegetable is this pickle made from?",
        caption: "A sandwich with a pickle on a plate",
        tags: &["sandwich", "pickle", "plate"],
        gold: ["cucumber", "cucumber", "cucumbers", "cucumbers", "cucumbers", "cucumbers", "cucumbers", "cucumbers", "gherkin", "gherkin"],
        qc: "cucumber or gherkin",
        q: "cucumber",
        cot: "Pickles are cucumbers preserved in brine.",
        select: "cucumber",
    },
    TestItem {
        question: "What do giraffes mostly eat?",
        caption: "Two giraffes standing next to a tall tree",
        tags: &["giraffe", "tree", "grass"],
        gold: ["leaves", "leaves", "leaves", "leaves", "leaves", "leaves", "leaves", "acacia leaves", "acacia leaves", "grass"],
        qc: "leaves or grass",
        q: "acacia leaves or leaves",
        cot: "Giraffes use their long necks to reach leaves high in trees.",
        select: "grass",
    },
    TestItem {
        question: "What appliance keeps this food cold?",
        caption: "An open refrigerator filled with food",
        tags: &["refrigerator", "food", "kitchen"],
        gold: ["fridge", "fridge", "fridge", "fridge", "fridge", "fridge", "refrigerator", "refrigerator", "refrigerator", "refrigerator"],
        qc: "freezer or cooler",
        q: "freezer",
        cot: "Food is kept cold in a freezer.",
        select: "freezer",
    },
    TestItem {
        question: "What weather is needed to fly these?",
        caption: "People flying kites on a beach",
        tags: &["kite", "beach", "sky", "people"],
        gold: ["windy", "windy", "windy", "windy", "windy", "wind", "wind", "wind", "wind", "sunny"],
        qc: "windy or sunny",
        q: "wind",
        cot: "Kites need moving air to stay up, so it must be windy.",
        select: "windy day",
    },
    TestItem {
        question: "Who would use this to put out a fire?",
        caption: "A yellow fire hydrant on the side of a road",
        tags: &["fire hydrant", "road", "grass"],
        gold: ["firefighter", "firefighter", "firefighter", "firefighter", "fireman", "fireman", "fireman", "fireman", "firemen", "firemen"],
        qc: "firefighter or fireman",
        q: "fireman or police",
        cot: "Firemen connect their hoses to hydrants to get water.",
        select: "fireman",
    },
    TestItem {
        question: "How many wheels does this vehicle have?",
        caption: "A motorcycle parked on a sidewalk",
        tags: &["motorcycle", "sidewalk"],
        gold: ["two", "two", "two", "two", "2", "2", "2", "2", "2", "3"],
        qc: "two or three",
        q: "2",
        cot: "A motorcycle has a front wheel and a back wheel.",
        select: "Two",
    },
    TestItem {
        question: "What breed of dog is this?",
        caption: "A small dog with curly white fur sitting on a couch",
        tags: &["dog", "couch", "pillow"],
        gold: ["poodle", "poodle", "poodle", "bichon frise", "bichon frise", "bichon frise", "terrier", "terrier", "maltese", "maltese"],
        qc: "poodle or terrier",
        q: "maltese or bichon frise",
        cot: "Small white dogs with curly fur are often bichon frises.",
        select: "bichon frise",
    },
    TestItem {
        question: "What holiday is this tree for?",
        caption: "A decorated tree with lights in a living room",
        tags: &["tree", "lights", "ornament", "room"],
        gold: ["christmas"; 10],
        qc: "christmas",
        q: "christmas or new year",
        cot: "Trees decorated with lights and ornaments are put up for Christmas.",
        select: "christmas",
    },
    TestItem {
        question: "What is this animal's natural habitat?",
        caption: "A polar bear swimming in the water",
        tags: &["bear", "water", "rock"],
        gold: ["arctic", "arctic", "arctic", "arctic", "arctic", "arctic", "ice", "ice", "north pole", "north pole"],
        qc: "arctic or ocean",
        q: "north pole or arctic",
        cot: "Polar bears live on the sea ice of the Arctic.",
        select: "none of these",
    },
    TestItem {
        question: "What fruit is in the bowl?",
        caption: "A bowl of yellow bananas on a table",
        tags: &["banana", "bowl", "table"],
        gold: ["banana", "banana", "banana", "banana", "bananas", "bananas", "bananas", "bananas", "bananas", "bananas"],
        qc: "banana or plantain",
        q: "bananas",
        cot: "Long yellow fruit could also be a plantain.",
        select: "plantain",
    },
    TestItem {
        question: "What company makes this computer?",
        caption: "A laptop with a glowing apple logo on a desk",
        tags: &["laptop", "desk", "logo"],
        gold: ["apple", "apple", "apple", "apple", "apple", "apple", "apple", "apple", "mac", "mac"],
        qc: "apple or dell",
        q: "apple",
        cot: "The apple logo belongs to the company Apple.",
        select: "apple",
    },
    TestItem {
        question: "What time of day is it?",
        caption: "A city street at night with illuminated lights",
        tags: &["street", "night", "lights", "car"],
        gold: ["night", "night", "night", "evening", "evening", "evening", "nighttime", "nighttime", "nighttime", "nighttime"],
        qc: "night or evening",
        q: "nighttime or night",
        cot: "Street lights are turned on when it gets dark in the evening.",
        select: "evening",
    },
    TestItem {
        question: "What is the man holding to hit the ball?",
        caption: "A man swinging a tennis racket on a court",
        tags: &["man", "tennis racket", "court", "ball"],
        gold: ["racket", "racket", "tennis racket", "tennis racket", "tennis racket", "tennis racket", "tennis racket", "racquet", "racquet", "racquet"],
        qc: "tennis racket or racket",
        q: "racquet",
        cot: "Tennis players hit the ball with a racket.",
        select: "racket",
    },
    TestItem {
        question: "What are these birds called?",
        caption: "A flock of pink birds standing in shallow water",
        tags: &["bird", "water", "flock"],
        gold: ["flamingo", "flamingo", "flamingo", "flamingo", "flamingo", "flamingo", "flamingo", "flamingos", "flamingos", "flamingos"],
        qc: "flamingo or heron",
        q: "flamingos",
        cot: "Pink wading birds are flamingos.",
        select: "flamingo",
    },
    TestItem {
        question: "Which country is famous for this food?",
        caption: "A pizza with cheese and basil on a wooden board",
        tags: &["pizza", "cheese", "board"],
        gold: ["italy"; 10],
        qc: "italy",
        q: "italy or usa",
        cot: "Pizza with basil and cheese comes from Italy.",
        select: "Italy.",
    },
    TestItem {
        question: "What material is this bridge made of?",
        caption: "A large metal bridge over a river",
        tags: &["bridge", "river", "sky"],
        gold: ["steel", "steel", "steel", "steel", "metal", "metal", "metal", "metal", "metal", "iron"],
        qc: "metal or steel",
        q: "iron or steel",
        cot: "Old bridges were built from iron girders.",
        select: "iron",
    },
    TestItem {
        question: "What is the purpose of this room?",
        caption: "A room with a toilet and a sink",
        tags: &["toilet", "sink", "bathroom"],
        gold: ["bathroom", "bathroom", "bathroom", "restroom", "restroom", "restroom", "bathing", "bathing", "toilet", "toilet"],
        qc: "bathroom or restroom",
        q: "toilet",
        cot: "A room with a toilet and a sink is a restroom.",
        select: "restroom",
    },
    TestItem {
        question: "What game is played on this board?",
        caption: "A checkered board with black and white pieces",
        tags: &["board", "pieces", "table"],
        gold: ["chess", "chess", "checkers", "checkers", "checkers", "checkers", "checkers", "checkers", "checkers", "checkers"],
        qc: "chess or checkers",
        q: "checkers",
        cot: "Black and white pieces on a checkered board are used in chess.",
        select: "chess",
    },
];

/// Selected answer and its accuracy for each test question, worked out by
/// hand from the gold lists above: m matching annotators score
/// 0, 0.3, 0.6, 0.9 and 1.0 for m = 0, 1, 2, 3 and 4 or more.
pub const EXPECTED_SELECTIONS: [(u64, &str, f64); 20] = [
    (1, "surfing", 1.0),
    (2, "london", 0.9),
    (3, "cucumber", 0.6),
    (4, "grass", 0.3),
    (5, "freezer", 0.0),
    (6, "windy", 1.0),
    (7, "fireman", 1.0),
    (8, "2", 1.0),
    (9, "bichon frise", 0.9),
    (10, "christmas", 1.0),
    (11, "arctic", 1.0),
    (12, "plantain", 0.0),
    (13, "apple", 1.0),
    (14, "evening", 0.9),
    (15, "racket", 0.6),
    (16, "flamingo", 1.0),
    (17, "italy", 1.0),
    (18, "iron", 0.3),
    (19, "restroom", 0.9),
    (20, "chess", 0.6),
];

/// Sum of the accuracies above is 15.0 over 20 questions.
pub const EXPECTED_MEAN_ACCURACY: f64 = 0.75;

pub const TRAIN_ITEMS: [TrainItem; 24] = [
    TrainItem { question: "What sport uses this board?", caption: "A man carrying a surfboard on the beach", tags: &["surfboard", "beach"], gold: ["surfing", "surfing", "surfing", "surfing", "surfing", "surfing", "surfing", "surfing", "surf", "surf"] },
    TrainItem { question: "What city is known for red phone booths?", caption: "A red phone booth on a city sidewalk", tags: &["phone booth", "sidewalk"], gold: ["london", "london", "london", "london", "london", "london", "london", "london", "london", "england"] },
    TrainItem { question: "What is this green vegetable?", caption: "A plate of sliced green cucumbers", tags: &["cucumber", "plate"], gold: ["cucumber"; 10] },
    TrainItem { question: "What animal has the longest neck?", caption: "A giraffe eating from a tree", tags: &["giraffe", "tree"], gold: ["giraffe"; 10] },
    TrainItem { question: "Where is milk usually stored?", caption: "A kitchen with a white refrigerator", tags: &["refrigerator", "kitchen"], gold: ["fridge", "fridge", "fridge", "fridge", "fridge", "fridge", "refrigerator", "refrigerator", "refrigerator", "refrigerator"] },
    TrainItem { question: "What makes the kite stay up?", caption: "A child holding a colorful kite string", tags: &["kite", "child"], gold: ["wind"; 10] },
    TrainItem { question: "What color are most fire trucks?", caption: "A red fire truck parked outside a station", tags: &["fire truck", "station"], gold: ["red"; 10] },
    TrainItem { question: "How many wheels does a bicycle have?", caption: "A bicycle leaning against a wall", tags: &["bicycle", "wall"], gold: ["two"; 10] },
    TrainItem { question: "What breed is this large dog?", caption: "A golden dog catching a frisbee in a park", tags: &["dog", "frisbee", "grass"], gold: ["golden retriever", "golden retriever", "golden retriever", "golden retriever", "golden retriever", "golden retriever", "golden retriever", "labrador", "labrador", "labrador"] },
    TrainItem { question: "What holiday uses pumpkins?", caption: "Carved pumpkins on a porch", tags: &["pumpkin", "porch"], gold: ["halloween"; 10] },
    TrainItem { question: "Where do penguins live?", caption: "Penguins standing on ice", tags: &["penguin", "ice"], gold: ["antarctica", "antarctica", "antarctica", "antarctica", "antarctica", "antarctica", "antarctica", "antarctica", "south pole", "south pole"] },
    TrainItem { question: "What fruit is yellow and curved?", caption: "A bunch of bananas hanging from a hook", tags: &["banana", "hook"], gold: ["banana"; 10] },
    TrainItem { question: "What company makes this phone?", caption: "A smartphone with an apple logo", tags: &["phone", "logo"], gold: ["apple"; 10] },
    TrainItem { question: "When do people usually sleep?", caption: "A dark bedroom with a bed", tags: &["bed", "room"], gold: ["night"; 10] },
    TrainItem { question: "What sport is played with this ball?", caption: "A yellow tennis ball on a court", tags: &["ball", "court"], gold: ["tennis"; 10] },
    TrainItem { question: "What bird stands on one leg?", caption: "A pink bird standing on one leg in a lake", tags: &["bird", "lake"], gold: ["flamingo"; 10] },
    TrainItem { question: "What country is pasta from?", caption: "A plate of spaghetti with tomato sauce", tags: &["pasta", "plate"], gold: ["italy"; 10] },
    TrainItem { question: "What is this tower made of?", caption: "A tall metal tower against a blue sky", tags: &["tower", "sky"], gold: ["steel", "steel", "steel", "steel", "steel", "metal", "metal", "metal", "metal", "metal"] },
    TrainItem { question: "What room is used for cooking?", caption: "A kitchen with a stove and an oven", tags: &["stove", "oven", "kitchen"], gold: ["kitchen"; 10] },
    TrainItem { question: "What game has a king and queen?", caption: "Chess pieces on a wooden board", tags: &["chess", "board"], gold: ["chess"; 10] },
    TrainItem { question: "What is the weather like?", caption: "A snowy street with parked cars", tags: &["snow", "car", "street"], gold: ["snowy", "snowy", "snowy", "snowy", "snowy", "snowy", "cold", "cold", "cold", "cold"] },
    TrainItem { question: "What do cows produce?", caption: "A cow grazing in a field", tags: &["cow", "field", "grass"], gold: ["milk"; 10] },
    TrainItem { question: "What is the man riding?", caption: "A man riding a horse on a trail", tags: &["horse", "man", "trail"], gold: ["horse"; 10] },
    TrainItem { question: "What vehicle runs on tracks?", caption: "A train arriving at a station", tags: &["train", "station"], gold: ["train"; 10] },
];

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A topic axis plus small noise, rounded to four decimals.
fn embedding(topic: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..DIM)
        .map(|d| {
            let noise = (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let base = if d == topic % DIM { 1.0 } else { 0.0 };
            ((base + 0.6 * noise) * 10_000.0).round() / 10_000.0
        })
        .collect()
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Builds the fixture dataset from the tables.
pub fn build_dataset() -> Dataset {
    let mut instances = Vec::new();
    let mut contexts = Vec::new();
    let mut images = EmbeddingStore::new(EmbeddingKind::Image);
    let mut questions = EmbeddingStore::new(EmbeddingKind::Question);

    let test = TEST_ITEMS
        .iter()
        .map(|t| (t.question, t.caption, t.tags, t.gold, Split::Test));
    let train = TRAIN_ITEMS
        .iter()
        .map(|t| (t.question, t.caption, t.tags, t.gold, Split::Train));
    let mut rows: Vec<_> = test.collect();
    rows.extend(train);

    let (mut n_test, mut n_train) = (0u64, 0u64);
    for (question, caption, tags, gold, split) in rows {
        let (question_id, image_id, topic) = match split {
            Split::Test => {
                n_test += 1;
                (TEST_ID_BASE + n_test - 1, TEST_IMAGE_BASE + n_test - 1, n_test - 1)
            }
            Split::Train => {
                n_train += 1;
                (TRAIN_ID_BASE + n_train - 1, TRAIN_IMAGE_BASE + n_train - 1, n_train - 1)
            }
        };
        instances.push(QaInstance {
            question_id,
            image_id,
            question: question.to_string(),
            gold_answers: owned(&gold),
            split,
        });
        contexts.push(ImageContext {
            image_id,
            caption: caption.to_string(),
            tags: owned(tags),
        });
        let topic = topic as usize;
        images.insert(image_id, embedding(topic, image_id)).unwrap();
        questions
            .insert(question_id, embedding(topic + 3, question_id * 7 + 1))
            .unwrap();
    }
    Dataset::from_parts(instances, contexts, images, questions).unwrap()
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn fixture_paths() -> DatasetPaths {
    let dir = fixture_dir();
    DatasetPaths {
        splits: vec![raso_core::model::SplitFiles {
            split: None,
            questions: dir.join("questions.json"),
            annotations: dir.join("annotations.json"),
        }],
        contexts: dir.join("contexts.jsonl"),
        embeddings: dir.join("embeddings.jsonl"),
    }
}

pub fn load_fixture() -> Dataset {
    let (dataset, report) =
        Dataset::load(&fixture_paths(), &raso_core::model::LoadOptions::default()).unwrap();
    assert_eq!(report.warning_count(), 0, "fixture loads cleanly");
    dataset
}

pub fn replay_path() -> PathBuf {
    fixture_dir().join("replay.jsonl")
}

/// Answers every prompt family from the test tables by locating the target
/// question on the prompt's last question line.
pub struct ScriptedCompleter {
    templates: TemplateSet,
    by_question: BTreeMap<&'static str, &'static TestItem>,
}

impl ScriptedCompleter {
    pub fn new(templates: TemplateSet) -> Self {
        let by_question = TEST_ITEMS.iter().map(|t| (t.question, t)).collect();
        Self {
            templates,
            by_question,
        }
    }
}

impl Completer for ScriptedCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let prompt = &request.prompt;
        let target = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Question: ").or_else(|| l.strip_prefix("question: ")))
            .ok_or_else(|| BackendError::InvalidRequest("prompt has no question line".into()))?;
        let item = self
            .by_question
            .get(target)
            .ok_or_else(|| BackendError::InvalidRequest(format!("no script for `{target}`")))?;
        let text = if prompt.starts_with(&self.templates.qc_instruction) {
            item.qc
        } else if prompt.starts_with(&self.templates.q_instruction) {
            item.q
        } else if prompt.starts_with(&self.templates.select_instruction) {
            item.select
        } else if prompt.starts_with(&self.templates.cot_preamble) {
            return Ok(format!(" {}\n\nContext: trailing text the parser must drop.", item.cot));
        } else {
            return Err(BackendError::InvalidRequest("unrecognized prompt family".into()));
        };
        Ok(format!(" {text}\n"))
    }
}

/// Wraps a completer and counts calls that reach it.
pub struct Counting<C> {
    pub inner: C,
    pub calls: Arc<AtomicUsize>,
}

impl<C: Completer> Counting<C> {
    pub fn new(inner: C) -> (Self, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        (
            Self {
                inner,
                calls: calls.clone(),
            },
            calls,
        )
    }
}

impl<C: Completer> Completer for Counting<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Records every (cache key, completion) pair it serves.
pub struct Recording<C> {
    pub inner: C,
    pub seen: Mutex<BTreeMap<String, String>>,
}

impl<C: Completer> Completer for Recording<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let text = self.inner.complete(request)?;
        self.seen
            .lock()
            .unwrap()
            .insert(request.cache_key(), text.clone());
        Ok(text)
    }
}

pub fn replay_backend(cache: Option<Arc<raso_core::backend::ResponseCache>>) -> (raso_core::Backend, Arc<AtomicUsize>) {
    let replay = raso_core::backend::ReplayCompleter::from_file(&replay_path()).unwrap();
    let (counting, calls) = Counting::new(replay);
    (
        raso_core::Backend::new("replay", "fixture-model", Arc::new(counting), cache),
        calls,
    )
}

pub struct StageResults {
    pub choices: BTreeMap<u64, raso_core::ChoiceList>,
    pub cots: BTreeMap<u64, raso_core::Rationale>,
    pub selections: BTreeMap<u64, raso_core::SelectionResult>,
    pub errors: Vec<raso_core::pipeline::ErrorEntry>,
}

/// Runs choices, rationales and prompt selection over the test split,
/// writing artifacts when a run directory is given.
pub fn run_test_split(
    dataset: &Dataset,
    backend: &raso_core::Backend,
    run: Option<&raso_core::RunDir>,
) -> StageResults {
    use raso_core::pipeline::{Pipeline, PipelineConfig, Selector, ShotSources, Stage};

    let templates = TemplateSet::builtin();
    let config = PipelineConfig::default();
    let pipeline = Pipeline::new(dataset, &templates, config.clone()).unwrap();
    let choices = pipeline.generate_choices(Split::Test, backend).unwrap();
    let cots = pipeline.generate_cots(Split::Test, backend).unwrap();
    let selections = pipeline
        .select_answers(
            &choices.results,
            Some(&cots.results),
            ShotSources::default(),
            Selector::PromptSelect,
            Some(backend),
        )
        .unwrap();

    if let Some(run) = run {
        run.write_choices(&choices.results).unwrap();
        run.record_errors(Stage::Choices, &choices.errors).unwrap();
        run.write_cots(&cots.results).unwrap();
        run.record_errors(Stage::Cots, &cots.errors).unwrap();
        run.write_selections(&selections.results).unwrap();
        run.record_errors(Stage::Select, &selections.errors).unwrap();
        let eval = raso_core::evaluate_run(&selections.results, dataset).unwrap();
        run.update_report("evaluation", serde_json::to_value(eval).unwrap())
            .unwrap();
        run.write_manifest(&raso_core::RunManifest {
            run_id: run.run_id().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            template_version: templates.version.clone(),
            cot_digest: templates.cot_digest(),
            config: serde_json::to_value(&config).unwrap(),
            stages: Default::default(),
        })
        .unwrap();
    }

    let mut errors = choices.errors.clone();
    errors.extend(cots.errors.iter().cloned());
    errors.extend(selections.errors.iter().cloned());
    StageResults {
        choices: choices.results,
        cots: cots.results,
        selections: selections.results,
        errors,
    }
}
