//! Automatic evaluation: overlap metrics against a reference for QA, and
//! diversity metrics over sampled responses for chit-chat.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::diversity::{mean_pairwise_similarity, SimilarityScorer};
use crate::error::{invalid, Result};

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n >= 1 && seq.len() >= n {
        for g in seq.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap<T: Eq + Hash>(a: &HashMap<&[T], usize>, b: &HashMap<&[T], usize>) -> usize {
    a.iter().map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0))).sum()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Smoothed BLEU up to `max_n`: an order with no matches contributes
/// `1 / (c + 1)` for `c` candidate n-grams. Empty candidates score 0.
pub fn bleu_n<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> f64 {
    if candidate.is_empty() || reference.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let total = candidate.len().saturating_sub(n - 1);
        let matches = clipped_overlap(&cand, &refc);
        let p = if matches == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "l")]
    L,
}

fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE F1: n-gram overlap for `One`/`Two`, longest common subsequence for `L`.
pub fn rouge<T: Eq + Hash>(candidate: &[T], reference: &[T], variant: RougeVariant) -> f64 {
    let (overlap, cand_total, ref_total) = match variant {
        RougeVariant::One | RougeVariant::Two => {
            let n = if variant == RougeVariant::One { 1 } else { 2 };
            let c = ngram_counts(candidate, n);
            let r = ngram_counts(reference, n);
            (
                clipped_overlap(&c, &r),
                candidate.len().saturating_sub(n - 1),
                reference.len().saturating_sub(n - 1),
            )
        }
        RougeVariant::L => (lcs_len(candidate, reference), candidate.len(), reference.len()),
    };
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    f1(overlap as f64 / cand_total as f64, overlap as f64 / ref_total as f64)
}

/// Bag-of-tokens F1 with multiset overlap.
pub fn token_f1<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    let overlap = clipped_overlap(&ngram_counts(candidate, 1), &ngram_counts(reference, 1));
    if overlap == 0 {
        return 0.0;
    }
    f1(overlap as f64 / candidate.len() as f64, overlap as f64 / reference.len() as f64)
}

fn pooled_ngrams<T: Eq + Hash>(responses: &[Vec<T>], n: usize) -> (HashMap<&[T], usize>, usize) {
    let mut counts = HashMap::new();
    let mut total = 0;
    for r in responses {
        for (g, c) in ngram_counts(r, n) {
            *counts.entry(g).or_insert(0) += c;
            total += c;
        }
    }
    (counts, total)
}

/// Unique n-grams over total n-grams, pooled across responses; 0 without n-grams.
pub fn distinct_n<T: Eq + Hash>(responses: &[Vec<T>], n: usize) -> f64 {
    let (counts, total) = pooled_ngrams(responses, n);
    if total == 0 {
        0.0
    } else {
        counts.len() as f64 / total as f64
    }
}

/// Shannon entropy in bits of the pooled n-gram frequencies.
pub fn entropy_n<T: Eq + Hash>(responses: &[Vec<T>], n: usize) -> f64 {
    let (counts, total) = pooled_ngrams(responses, n);
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    // sorted so the sum does not depend on hash order
    let mut freqs: Vec<usize> = counts.into_values().collect();
    freqs.sort_unstable();
    -freqs
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Mean pairwise similarity of responses to one context; lower is more diverse.
pub fn self_similarity(responses: &[String], scorer: &dyn SimilarityScorer) -> Result<f64> {
    if responses.len() < 2 {
        return invalid(format!("self-similarity needs at least 2 responses, got {}", responses.len()));
    }
    mean_pairwise_similarity(scorer, responses)
}

/// Named metric values for one dataset under one decoding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub config: String,
    pub values: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.values.get(metric).copied()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.values {
            if !v.is_finite() {
                return invalid(format!("metric {k} is not finite"));
            }
            let bounded = !(k.starts_with("ent-") || k.starts_with("mean-"));
            if bounded && !(0.0..=1.0).contains(v) {
                return invalid(format!("metric {k} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

pub const QA_METRICS: [&str; 9] = ["acc", "bleu-1", "bleu-2", "bleu-3", "bleu-4", "f1", "rouge-1", "rouge-2", "rouge-l"];
pub const CHITCHAT_METRICS: [&str; 7] = ["distinct-1", "distinct-2", "distinct-3", "ent-1", "ent-2", "ent-3", "self-sim"];

/// Averages the overlap metrics of `(candidate, reference)` pairs. `acc` is
/// the exact-match rate.
pub fn qa_metrics<T: Eq + Hash>(pairs: &[(Vec<T>, Vec<T>)]) -> BTreeMap<String, f64> {
    let n = pairs.len().max(1) as f64;
    let mut sums = [0.0; QA_METRICS.len()];
    for (c, r) in pairs {
        let row = [
            if c == r { 1.0 } else { 0.0 },
            bleu_n(c, r, 1),
            bleu_n(c, r, 2),
            bleu_n(c, r, 3),
            bleu_n(c, r, 4),
            token_f1(c, r),
            rouge(c, r, RougeVariant::One),
            rouge(c, r, RougeVariant::Two),
            rouge(c, r, RougeVariant::L),
        ];
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    QA_METRICS.iter().zip(sums).map(|(k, s)| (k.to_string(), s / n)).collect()
}

/// Diversity metrics over groups of responses (one group per context):
/// distinct-n and ent-n pool every response, self-similarity is averaged over
/// groups.
pub fn chitchat_metrics(groups: &[Vec<String>], scorer: &dyn SimilarityScorer) -> Result<BTreeMap<String, f64>> {
    let tokenized: Vec<Vec<&str>> = groups
        .iter()
        .flatten()
        .map(|r| r.split_whitespace().collect())
        .collect();
    let mut out = BTreeMap::new();
    for n in 1..=3 {
        out.insert(format!("distinct-{n}"), distinct_n(&tokenized, n));
        out.insert(format!("ent-{n}"), entropy_n(&tokenized, n));
    }
    let sims = groups
        .iter()
        .map(|g| self_similarity(g, scorer))
        .collect::<Result<Vec<_>>>()?;
    out.insert("self-sim".into(), sims.iter().sum::<f64>() / sims.len().max(1) as f64);
    Ok(out)
}

/// Aligned text table: one row per report, one column per metric.
pub fn render_table(reports: &[MetricReport], columns: &[&str]) -> String {
    let label_w = reports.iter().map(|r| r.config.len()).max().unwrap_or(0).max("config".len());
    let col_w = columns.iter().map(|c| c.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:<label_w$}", "config");
    for c in columns {
        out.push_str(&format!("  {c:>col_w$}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<label_w$}", r.config));
        for c in columns {
            match r.get(c) {
                Some(v) => out.push_str(&format!("  {v:>col_w$.4}")),
                None => out.push_str(&format!("  {:>col_w$}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
