//! Diversity-score labeling: sample several responses per context, measure
//! how alike they are, and drop the examples whose score contradicts their
//! scenario.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DialogueExample, DialogueRecord, Scenario};
use crate::error::{invalid, Result};
use crate::head::{DiversityScore, HeadExample};
use crate::prob::Temperature;
use crate::rng::RngState;
use crate::tinylm::{generate, TinyLmParams};
use crate::truncation::TruncationConfig;
use crate::vocab::Vocabulary;

/// Similarity between two sentences, in `[0, 1]`.
pub trait SimilarityScorer: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine of character n-gram count vectors, averaged over orders `1..=max_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramCosine {
    pub max_n: usize,
}

impl Default for NgramCosine {
    fn default() -> Self {
        Self { max_n: 3 }
    }
}

impl SimilarityScorer for NgramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        ngram_cosine_similarity(a, b, self.max_n)
    }
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], f64> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for g in chars.windows(n) {
            *counts.entry(g).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Orders at which neither string has an n-gram are left out of the average;
/// an empty string against a nonempty one scores 0 and two empty strings 1.
pub fn ngram_cosine_similarity(a: &str, b: &str, max_n: usize) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut total = 0.0;
    let mut orders = 0;
    for n in 1..=max_n.max(1) {
        let ca = char_ngrams(&a, n);
        let cb = char_ngrams(&b, n);
        if ca.is_empty() && cb.is_empty() {
            continue;
        }
        orders += 1;
        if ca.is_empty() || cb.is_empty() {
            continue;
        }
        let dot: f64 = ca.iter().filter_map(|(g, x)| cb.get(g).map(|y| x * y)).sum();
        let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
        total += (dot / (na * nb)).clamp(0.0, 1.0);
    }
    total / orders as f64
}

/// Mean scorer value over all unordered pairs, clamped to `[0, 1]`.
pub fn mean_pairwise_similarity(scorer: &dyn SimilarityScorer, texts: &[String]) -> Result<f64> {
    if texts.len() < 2 {
        return invalid(format!("need at least 2 responses, got {}", texts.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            sum += scorer.similarity(&texts[i], &texts[j]);
            pairs += 1;
        }
    }
    Ok((sum / pairs as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub m: usize,
    pub sampler: TruncationConfig,
    pub temperature: Temperature,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            m: 5,
            sampler: TruncationConfig::None,
            temperature: Temperature::ONE,
            max_len: 12,
            seed: 0,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid(format!("m must be at least 2, got {}", self.m));
        }
        if self.max_len < 1 {
            return invalid("max_len must be at least 1");
        }
        self.sampler.validate()
    }
}

/// Draws `m` candidates, candidate `j` from substream `j` of `rng`, and
/// scores their mutual similarity.
pub fn score_context(
    generate_one: &mut dyn FnMut(&mut RngState) -> Result<String>,
    config: &LabelingConfig,
    scorer: &dyn SimilarityScorer,
    rng: &RngState,
) -> Result<(Vec<String>, DiversityScore)> {
    config.validate()?;
    let candidates = (0..config.m)
        .map(|j| generate_one(&mut rng.substream(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let score = mean_pairwise_similarity(scorer, &candidates)?;
    Ok((candidates, DiversityScore::new(score)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(flatten)]
    pub record: DialogueRecord,
    pub candidates: Vec<String>,
    pub score: DiversityScore,
}

impl LabeledExample {
    pub fn to_head_example(&self, vocab: &Vocabulary) -> Result<HeadExample> {
        Ok(HeadExample {
            example: DialogueExample::encode(&self.record, vocab)?,
            candidates: self.candidates.iter().map(|c| vocab.encode_response(c)).collect(),
            label: Some(self.score),
        })
    }
}

/// Labels every record; record `i` draws from substream `i` of the seed.
pub fn label_dataset(
    lm: &TinyLmParams,
    vocab: &Vocabulary,
    records: &[DialogueRecord],
    config: &LabelingConfig,
    scorer: &dyn SimilarityScorer,
) -> Result<Vec<LabeledExample>> {
    config.validate()?;
    let root = RngState::new(config.seed);
    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let context = vocab.encode_context(&record.context);
            let mut source = config.temperature;
            let mut gen = |rng: &mut RngState| {
                let ids = generate(lm, &context, &config.sampler, &mut source, rng, config.max_len)?;
                Ok(vocab.decode(&ids))
            };
            let (candidates, score) = score_context(&mut gen, config, scorer, &root.substream(i as u64))?;
            Ok(LabeledExample {
                record: record.clone(),
                candidates,
                score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    pub qa_min: f64,
    pub chitchat_max: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            qa_min: 0.6,
            chitchat_max: 0.7,
        }
    }
}

/// Drops QA examples scoring below `qa_min` and chit-chat examples scoring
/// above `chitchat_max`, keeping the rest in order.
pub fn filter_extremes(labeled: &[LabeledExample], thresholds: &FilterThresholds) -> Vec<LabeledExample> {
    labeled
        .iter()
        .filter(|ex| match ex.record.scenario {
            Scenario::Qa => ex.score.value() >= thresholds.qa_min,
            Scenario::Chitchat => ex.score.value() <= thresholds.chitchat_max,
        })
        .cloned()
        .collect()
}
