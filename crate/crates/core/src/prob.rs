//! Logits, categorical distributions, temperature-scaled softmax, entropy and
//! the two token selectors (seeded sampling and argmax).
//!
//! Temperature is applied to logits: `softmax(z / T)`. Applying it to the
//! already-normalized probabilities instead would only rescale log-space by a
//! constant that depends on the distribution, so the logit form is the one that
//! keeps `T = 1` equal to the model distribution.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngState;

/// Tolerance on `Σ p = 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return invalid(format!("temperature must be positive and finite, got {value}"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = crate::DdsError;

    fn try_from(value: f64) -> Result<Self> {
        Temperature::new(value)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Unnormalized next-token scores, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("logit vector is empty");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("logit {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A categorical distribution: entries in `[0, 1]`, summing to one, with a
/// nonempty support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDistribution(Vec<f64>);

impl ProbabilityDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("distribution is empty");
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return invalid(format!("probability {i} outside [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("probabilities sum to {sum}"));
        }
        if probs.iter().all(|&p| p == 0.0) {
            return invalid("distribution has empty support");
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("uniform distribution over zero outcomes");
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return invalid(format!("one-hot index {index} out of range {n}"));
        }
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Ok(Self(probs))
    }

    /// Renormalizes nonnegative weights that may not sum to one.
    pub(crate) fn from_weights(mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        for w in &mut weights {
            *w /= total;
        }
        Self(weights)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&p| p > 0.0).count()
    }
}

/// `p_i = exp(z_i / T) / Σ_j exp(z_j / T)`, computed after subtracting the
/// largest logit.
pub fn softmax_with_temperature(logits: &LogitVector, t: Temperature) -> ProbabilityDistribution {
    let z = logits.values();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inv_t = 1.0 / t.value();
    let weights: Vec<f64> = z.iter().map(|&v| ((v - max) * inv_t).exp()).collect();
    ProbabilityDistribution::from_weights(weights)
}

pub fn softmax(logits: &LogitVector) -> ProbabilityDistribution {
    softmax_with_temperature(logits, Temperature::ONE)
}

/// Shannon entropy in nats.
pub fn entropy(dist: &ProbabilityDistribution) -> f64 {
    -dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Inverse-CDF draw over index order. Zero-probability entries are never
/// returned.
pub fn sample_categorical(dist: &ProbabilityDistribution, rng: &mut RngState) -> usize {
    let u = rng.next_f64();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    // u landed in the rounding gap above the final cumulative sum
    last
}

/// Greedy selection; ties go to the lowest index.
pub fn argmax_token(dist: &ProbabilityDistribution) -> usize {
    let mut best = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > dist.probs()[best] {
            best = i;
        }
    }
    best
}
