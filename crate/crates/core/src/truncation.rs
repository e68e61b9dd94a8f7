//! Support truncation applied after temperature shaping.
//!
//! Ordering rules are fixed so results never depend on sort stability:
//! top-k and top-p rank by probability descending then index ascending;
//! typical sampling ranks by `|-ln p - H|` ascending, then probability
//! descending, then index ascending. A cumulative mass "reaches" a threshold
//! when `mass + MASS_EPSILON >= threshold`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::{entropy, softmax_with_temperature, LogitVector, ProbabilityDistribution, Temperature};

/// Slack on cumulative-mass comparisons so `p = 1` always keeps the full
/// support despite rounding in the running sum.
pub const MASS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncationConfig {
    /// Pure temperature sampling.
    None,
    TopK { k: usize },
    TopP { p: f64 },
    Typical { tau: f64 },
}

impl TruncationConfig {
    pub const DEFAULT_TOP_K: TruncationConfig = TruncationConfig::TopK { k: 3 };
    pub const DEFAULT_TOP_P: TruncationConfig = TruncationConfig::TopP { p: 0.9 };
    pub const DEFAULT_TYPICAL: TruncationConfig = TruncationConfig::Typical { tau: 0.9 };

    /// The four samplers with their standard settings.
    pub fn all_defaults() -> [TruncationConfig; 4] {
        [
            Self::DEFAULT_TOP_K,
            Self::DEFAULT_TOP_P,
            Self::None,
            Self::DEFAULT_TYPICAL,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationConfig::None => Ok(()),
            TruncationConfig::TopK { k } => check_k(k),
            TruncationConfig::TopP { p } => check_mass("p", p),
            TruncationConfig::Typical { tau } => check_mass("tau", tau),
        }
    }

    /// Short identifier used in file names and reports.
    pub fn name(&self) -> &'static str {
        match self {
            TruncationConfig::None => "temperature",
            TruncationConfig::TopK { .. } => "top_k",
            TruncationConfig::TopP { .. } => "top_p",
            TruncationConfig::Typical { .. } => "typical",
        }
    }

    pub fn truncate(&self, dist: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        match *self {
            TruncationConfig::None => Ok(dist.clone()),
            TruncationConfig::TopK { k } => truncate_top_k(dist, k),
            TruncationConfig::TopP { p } => truncate_top_p(dist, p),
            TruncationConfig::Typical { tau } => truncate_typical(dist, tau),
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 1 {
        return invalid("top-k requires k >= 1");
    }
    Ok(())
}

fn check_mass(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return invalid(format!("{name} must lie in (0, 1], got {v}"));
    }
    Ok(())
}

fn by_probability(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Keeps `kept` and renormalizes.
fn restrict(probs: &[f64], kept: &[usize]) -> ProbabilityDistribution {
    let mut weights = vec![0.0; probs.len()];
    for &i in kept {
        weights[i] = probs[i];
    }
    ProbabilityDistribution::from_weights(weights)
}

/// Shortest prefix of `order` whose mass reaches `threshold`.
fn mass_prefix(probs: &[f64], order: &[usize], threshold: f64) -> usize {
    let mut cum = 0.0;
    for (n, &i) in order.iter().enumerate() {
        cum += probs[i];
        if cum + MASS_EPSILON >= threshold {
            return n + 1;
        }
    }
    order.len()
}

pub fn truncate_top_k(dist: &ProbabilityDistribution, k: usize) -> Result<ProbabilityDistribution> {
    check_k(k)?;
    let probs = dist.probs();
    let order = by_probability(probs);
    if k >= order.len() {
        return Ok(dist.clone());
    }
    Ok(restrict(probs, &order[..k]))
}

pub fn truncate_top_p(dist: &ProbabilityDistribution, p: f64) -> Result<ProbabilityDistribution> {
    check_mass("p", p)?;
    let probs = dist.probs();
    let order = by_probability(probs);
    let n = mass_prefix(probs, &order, p);
    if n == order.len() {
        return Ok(dist.clone());
    }
    Ok(restrict(probs, &order[..n]))
}

pub fn truncate_typical(dist: &ProbabilityDistribution, tau: f64) -> Result<ProbabilityDistribution> {
    check_mass("tau", tau)?;
    let probs = dist.probs();
    let h = entropy(dist);
    let deviation = |i: usize| (-probs[i].ln() - h).abs();
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        deviation(a)
            .partial_cmp(&deviation(b))
            .unwrap_or(Ordering::Equal)
            .then(probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let n = mass_prefix(probs, &order, tau);
    if n == order.len() {
        return Ok(dist.clone());
    }
    Ok(restrict(probs, &order[..n]))
}

/// Temperature first, then the configured cut.
pub fn apply(config: &TruncationConfig, logits: &LogitVector, t: Temperature) -> Result<ProbabilityDistribution> {
    config.truncate(&softmax_with_temperature(logits, t))
}
