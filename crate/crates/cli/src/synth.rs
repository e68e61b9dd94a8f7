//! The synthetic two-scenario corpus.
//!
//! QA contexts ask for one attribute of a made-up entity; the answer is a
//! lookup in a seeded fact table, so every QA context has exactly one correct
//! response. Chit-chat contexts ask about a topic; each topic owns `fanout`
//! distinct replies, all valid for every phrasing of that topic. Both
//! scenarios share the same openers so that only the question itself tells
//! them apart.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use dds_core::corpus::{DialogueRecord, Scenario};
use dds_core::rng::RngState;
use dds_core::vocab::{Vocabulary, RESERVED};

use crate::error::{validation, CliResult};

const OPENERS: [&str; 8] = ["", "hey ,", "hi ,", "excuse me ,", "well ,", "okay ,", "hello ,", "um ,"];

const QA_TEMPLATES: [&str; 12] = [
    "what is the {R} of {E} ?",
    "tell me the {R} of {E} .",
    "do you know the {R} of {E} ?",
    "can you tell me the {R} of {E} ?",
    "please name the {R} of {E} .",
    "which is the {R} of {E} ?",
    "quick question , the {R} of {E} ?",
    "i need the {R} of {E} .",
    "remind me of the {R} of {E} .",
    "what would be the {R} of {E} ?",
    "any idea about the {R} of {E} ?",
    "so , the {R} of {E} ?",
];

const RELATIONS: [(&str, &[&str]); 4] = [
    ("color", &["red", "blue", "green", "yellow", "black", "white", "purple"]),
    ("size", &["tiny", "small", "medium", "large", "huge", "giant"]),
    ("home", &["city", "forest", "river", "desert", "island", "mountain"]),
    ("food", &["fish", "grass", "fruit", "seeds", "meat", "bread"]),
];

const CHITCHAT_TEMPLATES: [&str; 10] = [
    "do you like {X} ?",
    "what do you think of {X} ?",
    "how about {X} ?",
    "have you ever tried {X} ?",
    "let us talk about {X} .",
    "i am thinking about {X} .",
    "tell me how you feel about {X} .",
    "any thoughts on {X} ?",
    "are you into {X} ?",
    "what about {X} ?",
];

const TOPICS: [&str; 30] = [
    "music", "jazz", "tea", "coffee", "hiking", "movies", "soccer", "pizza", "rain", "cats", "dogs", "books", "cooking",
    "travel", "painting", "dancing", "chess", "snow", "summer", "gardening", "poetry", "running", "coding", "sushi",
    "camping", "history", "games", "beaches", "baking", "yoga",
];

const REPLIES: [&str; 14] = [
    "i love {X} .",
    "{X} is fun .",
    "never tried {X} .",
    "{X} bores me .",
    "not really .",
    "sounds great !",
    "me too !",
    "why not ?",
    "oh yes !",
    "so so .",
    "ok .",
    "sure !",
    "nope .",
    "maybe .",
];

const QA_ANSWER: &str = "the answer is {V} .";

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub qa_templates: usize,
    pub chitchat_templates: usize,
    /// Distinct replies per chit-chat context.
    pub fanout: usize,
    /// Total vocabulary including the reserved tokens; the remainder after the
    /// fixed words becomes QA entities.
    pub vocab_size: usize,
    /// Unique contexts per scenario in each split.
    pub train_contexts: usize,
    pub valid_contexts: usize,
    pub test_contexts: usize,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            qa_templates: 12,
            chitchat_templates: 10,
            fanout: 4,
            vocab_size: 220,
            train_contexts: 600,
            valid_contexts: 100,
            test_contexts: 1000,
        }
    }
}

/// Every word the templates, values, topics and replies can produce.
fn fixed_words() -> Vec<String> {
    let mut texts: Vec<&str> = Vec::new();
    texts.extend(OPENERS);
    texts.extend(QA_TEMPLATES);
    texts.extend(CHITCHAT_TEMPLATES);
    texts.extend(REPLIES);
    texts.push(QA_ANSWER);
    texts.extend(TOPICS);
    for (r, vs) in RELATIONS {
        texts.push(r);
        texts.extend(vs.iter());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in texts {
        for w in t.split_whitespace() {
            if w.starts_with('{') {
                continue;
            }
            if seen.insert(w.to_string()) {
                out.push(w.to_string());
            }
        }
    }
    out
}

impl SyntheticCorpusSpec {
    pub fn entity_count(&self) -> usize {
        self.vocab_size.saturating_sub(RESERVED.len() + fixed_words().len())
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(1..=QA_TEMPLATES.len()).contains(&self.qa_templates) {
            return validation(format!("qa_templates must be in 1..={}", QA_TEMPLATES.len()));
        }
        if !(1..=CHITCHAT_TEMPLATES.len()).contains(&self.chitchat_templates) {
            return validation(format!("chitchat_templates must be in 1..={}", CHITCHAT_TEMPLATES.len()));
        }
        if !(3..=REPLIES.len()).contains(&self.fanout) {
            return validation(format!("fanout must be in 3..={}", REPLIES.len()));
        }
        let min_vocab = RESERVED.len() + fixed_words().len() + RELATIONS.len();
        if self.vocab_size < min_vocab {
            return validation(format!("vocab_size must be at least {min_vocab}"));
        }
        let max_entities = CONSONANTS.len() * VOWELS.len() * CONSONANTS.len() * VOWELS.len();
        if self.entity_count() > max_entities / 2 {
            return validation("vocab_size too large for the entity name space");
        }
        if self.train_contexts < 1 || self.test_contexts < 1 {
            return validation("train and test splits need at least one context per scenario");
        }
        let need = self.train_contexts + self.valid_contexts + self.test_contexts;
        let qa_space = self.entity_count() * self.qa_templates * OPENERS.len();
        let chat_space = TOPICS.len() * self.chitchat_templates * OPENERS.len();
        if need > qa_space || need > chat_space {
            return validation(format!(
                "{need} contexts per scenario requested but only {qa_space} QA and {chat_space} chit-chat phrasings exist"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    pub train: Vec<DialogueRecord>,
    pub valid: Vec<DialogueRecord>,
    pub test: Vec<DialogueRecord>,
}

fn phrase(opener: &str, body: &str) -> String {
    if opener.is_empty() {
        body.to_string()
    } else {
        format!("{opener} {body}")
    }
}

fn entity_names(n: usize, reserved: &BTreeSet<String>, rng: &mut RngState) -> Vec<String> {
    let mut all = Vec::new();
    for &c1 in CONSONANTS {
        for &v1 in VOWELS {
            for &c2 in CONSONANTS {
                for &v2 in VOWELS {
                    let name = String::from_utf8(vec![c1, v1, c2, v2]).expect("ascii");
                    if !reserved.contains(&name) {
                        all.push(name);
                    }
                }
            }
        }
    }
    all.shuffle(rng);
    all.truncate(n);
    all
}

/// Draws `total` distinct indices from `0..space` in a seeded order.
fn distinct_draws(space: usize, total: usize, rng: &mut RngState) -> Vec<usize> {
    let mut all: Vec<usize> = (0..space).collect();
    all.shuffle(rng);
    all.truncate(total);
    all
}

pub fn synthesize(spec: &SyntheticCorpusSpec, seed: u64) -> CliResult<SyntheticCorpus> {
    spec.validate()?;
    let root = RngState::new(seed);
    let fixed = fixed_words();
    let fixed_set: BTreeSet<String> = fixed.iter().cloned().collect();
    let entities = entity_names(spec.entity_count(), &fixed_set, &mut root.substream(1));

    let mut fact_rng = root.substream(2);
    let facts: Vec<(usize, &str)> = (0..entities.len())
        .map(|i| {
            let rel = i % RELATIONS.len();
            let values = RELATIONS[rel].1;
            (rel, values[fact_rng.below(values.len())])
        })
        .collect();

    let mut reply_rng = root.substream(3);
    let topic_replies: Vec<Vec<String>> = TOPICS
        .iter()
        .map(|topic| {
            let mut idx: Vec<usize> = (0..REPLIES.len()).collect();
            idx.shuffle(&mut reply_rng);
            idx[..spec.fanout].iter().map(|&r| REPLIES[r].replace("{X}", topic)).collect()
        })
        .collect();

    let need = spec.train_contexts + spec.valid_contexts + spec.test_contexts;
    let qa_space = entities.len() * spec.qa_templates * OPENERS.len();
    let qa: Vec<Vec<DialogueRecord>> = distinct_draws(qa_space, need, &mut root.substream(4))
        .into_iter()
        .map(|code| {
            let e = code % entities.len();
            let t = (code / entities.len()) % spec.qa_templates;
            let o = code / (entities.len() * spec.qa_templates);
            let (rel, value) = facts[e];
            let body = QA_TEMPLATES[t].replace("{R}", RELATIONS[rel].0).replace("{E}", &entities[e]);
            vec![DialogueRecord {
                context: phrase(OPENERS[o], &body),
                response: QA_ANSWER.replace("{V}", value),
                scenario: Scenario::Qa,
            }]
        })
        .collect();

    let chat_space = TOPICS.len() * spec.chitchat_templates * OPENERS.len();
    let chat: Vec<Vec<DialogueRecord>> = distinct_draws(chat_space, need, &mut root.substream(5))
        .into_iter()
        .map(|code| {
            let x = code % TOPICS.len();
            let t = (code / TOPICS.len()) % spec.chitchat_templates;
            let o = code / (TOPICS.len() * spec.chitchat_templates);
            let context = phrase(OPENERS[o], &CHITCHAT_TEMPLATES[t].replace("{X}", TOPICS[x]));
            topic_replies[x]
                .iter()
                .map(|r| DialogueRecord {
                    context: context.clone(),
                    response: r.clone(),
                    scenario: Scenario::Chitchat,
                })
                .collect()
        })
        .collect();

    let split = |lo: usize, hi: usize, shuffle_seed: u64| -> Vec<DialogueRecord> {
        let mut rows: Vec<DialogueRecord> = qa[lo..hi]
            .iter()
            .chain(&chat[lo..hi])
            .flatten()
            .cloned()
            .collect();
        rows.shuffle(&mut root.substream(shuffle_seed));
        rows
    };
    let (a, b) = (spec.train_contexts, spec.train_contexts + spec.valid_contexts);

    let mut words = fixed;
    words.extend(entities);
    Ok(SyntheticCorpus {
        vocab: Vocabulary::new(words)?,
        train: split(0, a, 6),
        valid: split(a, b, 7),
        test: split(b, need, 8),
    })
}

/// Unique contexts in first-appearance order, with the first reference seen
/// for each.
pub fn unique_contexts(records: &[DialogueRecord]) -> Vec<&DialogueRecord> {
    let mut seen = BTreeSet::new();
    records.iter().filter(|r| seen.insert(r.context.as_str())).collect()
}

/// Distinct responses per context.
pub fn responses_by_context(records: &[DialogueRecord]) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut map: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        map.entry(r.context.as_str()).or_default().insert(r.response.as_str());
    }
    map
}
