//! The decoding engine: fixed temperature, or a temperature chosen per
//! context (sentence level) or per step (token level) from the predicted
//! diversity score.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::head::{head_forward, predict_sentence_score, DiversityScore, RegressionHeadParams};
use crate::mapping::{map_score, MappingCalibration, MappingConfig};
use crate::prob::{entropy, Temperature};
use crate::rng::RngState;
use crate::tinylm::{generate_observed, TemperatureSource, TinyLmParams};
use crate::truncation::TruncationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    Fixed,
    DdsSentence,
    DdsToken,
}

impl TemperatureMode {
    pub const ALL: [TemperatureMode; 3] = [TemperatureMode::Fixed, TemperatureMode::DdsSentence, TemperatureMode::DdsToken];

    pub fn name(self) -> &'static str {
        match self {
            TemperatureMode::Fixed => "fixed",
            TemperatureMode::DdsSentence => "dds_sentence",
            TemperatureMode::DdsToken => "dds_token",
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != TemperatureMode::Fixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub truncation: TruncationConfig,
    pub mode: TemperatureMode,
    /// Used by `Fixed` mode.
    pub temperature: Temperature,
    pub mapping: Option<MappingConfig>,
    pub calibration: Option<MappingCalibration>,
    pub max_len: usize,
    pub num_samples: usize,
    pub seed: u64,
}

impl DecodeConfig {
    pub fn fixed(truncation: TruncationConfig) -> Self {
        Self {
            truncation,
            mode: TemperatureMode::Fixed,
            temperature: Temperature::ONE,
            mapping: None,
            calibration: None,
            max_len: 12,
            num_samples: 5,
            seed: 0,
        }
    }

    pub fn dds(truncation: TruncationConfig, mode: TemperatureMode, mapping: MappingConfig, calibration: MappingCalibration) -> Self {
        Self {
            mode,
            mapping: Some(mapping),
            calibration: Some(calibration),
            ..Self::fixed(truncation)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.truncation.validate()?;
        if self.max_len < 1 {
            return invalid("max_len must be at least 1");
        }
        if self.num_samples < 1 {
            return invalid("num_samples must be at least 1");
        }
        if self.mode.is_dynamic() {
            match &self.mapping {
                Some(m) => m.validate()?,
                None => return invalid(format!("{} decoding needs a mapping", self.mode.name())),
            }
            if self.calibration.is_none() {
                return invalid(format!("{} decoding needs a calibration", self.mode.name()));
            }
        }
        Ok(())
    }

    fn expect_mode(&self, mode: TemperatureMode) -> Result<()> {
        self.validate()?;
        if self.mode != mode {
            return invalid(format!("config mode is {}, expected {}", self.mode.name(), mode.name()));
        }
        Ok(())
    }

    fn map(&self, s: DiversityScore) -> Temperature {
        let (m, c) = (self.mapping.as_ref().expect("validated"), self.calibration.as_ref().expect("validated"));
        map_score(m, c, s)
    }
}

/// One generation step as seen by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    /// Predicted score behind the step's temperature; absent in fixed mode.
    pub score: Option<f64>,
    pub temperature: f64,
    /// Entropy (nats) of the truncated sampling distribution.
    pub entropy: f64,
    pub token: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedResponse {
    /// Generated tokens, including the final `<eos>` if one was produced.
    pub tokens: Vec<usize>,
    pub steps: Vec<StepTrace>,
}

struct ConstantSource(Temperature);

impl TemperatureSource for ConstantSource {
    fn temperature(&mut self, _step: usize, _hidden: &[f64]) -> Result<Temperature> {
        Ok(self.0)
    }
}

struct TokenSource<'a> {
    head: &'a RegressionHeadParams,
    config: &'a DecodeConfig,
    scores: Vec<f64>,
}

impl TemperatureSource for TokenSource<'_> {
    fn temperature(&mut self, _step: usize, hidden: &[f64]) -> Result<Temperature> {
        let s = DiversityScore::new(head_forward(self.head, hidden)?);
        self.scores.push(s.value());
        Ok(self.config.map(s))
    }
}

fn run(
    lm: &TinyLmParams,
    context: &[usize],
    sampler: &TruncationConfig,
    source: &mut dyn TemperatureSource,
    rng: &mut RngState,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<StepTrace>)> {
    let mut steps = Vec::new();
    let tokens = generate_observed(lm, context, sampler, source, rng, max_len, &mut |rec| {
        steps.push(StepTrace {
            step: rec.step,
            score: None,
            temperature: rec.temperature.value(),
            entropy: entropy(rec.dist),
            token: rec.token,
        })
    })?;
    Ok((tokens, steps))
}

fn constant_samples(
    lm: &TinyLmParams,
    context: &[usize],
    config: &DecodeConfig,
    t: Temperature,
    score: Option<f64>,
    rng: &RngState,
) -> Result<Vec<DecodedResponse>> {
    (0..config.num_samples)
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let (tokens, mut steps) = run(lm, context, &config.truncation, &mut ConstantSource(t), &mut r, config.max_len)?;
            steps.iter_mut().for_each(|s| s.score = score);
            Ok(DecodedResponse { tokens, steps })
        })
        .collect()
}

/// `num_samples` generations at the configured fixed temperature; sample `i`
/// draws from substream `i` of `rng`.
pub fn decode_fixed(lm: &TinyLmParams, context: &[usize], config: &DecodeConfig, rng: &RngState) -> Result<Vec<DecodedResponse>> {
    config.expect_mode(TemperatureMode::Fixed)?;
    constant_samples(lm, context, config, config.temperature, None, rng)
}

/// Scores the context once and samples every step of every response at the
/// mapped temperature.
pub fn decode_dds_sentence(
    lm: &TinyLmParams,
    head: &RegressionHeadParams,
    context: &[usize],
    config: &DecodeConfig,
    rng: &RngState,
) -> Result<Vec<DecodedResponse>> {
    config.expect_mode(TemperatureMode::DdsSentence)?;
    let s = predict_sentence_score(lm, head, context)?;
    constant_samples(lm, context, config, config.map(s), Some(s.value()), rng)
}

/// Rescores at every step from the hidden state that produces that step's
/// logits.
pub fn decode_dds_token(
    lm: &TinyLmParams,
    head: &RegressionHeadParams,
    context: &[usize],
    config: &DecodeConfig,
    rng: &RngState,
) -> Result<Vec<DecodedResponse>> {
    config.expect_mode(TemperatureMode::DdsToken)?;
    if head.dim != lm.dims.hidden_dim {
        return invalid("head width does not match model hidden size");
    }
    (0..config.num_samples)
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let mut source = TokenSource {
                head,
                config,
                scores: Vec::new(),
            };
            let (tokens, mut steps) = run(lm, context, &config.truncation, &mut source, &mut r, config.max_len)?;
            for (st, s) in steps.iter_mut().zip(&source.scores) {
                st.score = Some(*s);
            }
            Ok(DecodedResponse { tokens, steps })
        })
        .collect()
}

/// Dispatches on `config.mode`; dynamic modes need `head`.
pub fn decode(
    lm: &TinyLmParams,
    head: Option<&RegressionHeadParams>,
    context: &[usize],
    config: &DecodeConfig,
    rng: &RngState,
) -> Result<Vec<DecodedResponse>> {
    match (config.mode, head) {
        (TemperatureMode::Fixed, _) => decode_fixed(lm, context, config, rng),
        (TemperatureMode::DdsSentence, Some(h)) => decode_dds_sentence(lm, h, context, config, rng),
        (TemperatureMode::DdsToken, Some(h)) => decode_dds_token(lm, h, context, config, rng),
        (mode, None) => invalid(format!("{} decoding needs a regression head", mode.name())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub score: f64,
    pub temperature: f64,
}

/// Scores and temperatures along the greedy continuation of `context`. In
/// sentence mode the trace has the single context-level entry.
pub fn temperature_trace(
    lm: &TinyLmParams,
    head: &RegressionHeadParams,
    context: &[usize],
    config: &DecodeConfig,
) -> Result<Vec<TraceEntry>> {
    config.validate()?;
    match config.mode {
        TemperatureMode::Fixed => invalid("temperature traces need a dynamic mode"),
        TemperatureMode::DdsSentence => {
            let s = predict_sentence_score(lm, head, context)?;
            Ok(vec![TraceEntry {
                step: 0,
                score: s.value(),
                temperature: config.map(s).value(),
            }])
        }
        TemperatureMode::DdsToken => {
            let greedy = TruncationConfig::TopK { k: 1 };
            let one = DecodeConfig {
                truncation: greedy,
                num_samples: 1,
                ..config.clone()
            };
            let out = decode_dds_token(lm, head, context, &one, &RngState::new(config.seed))?;
            Ok(out[0]
                .steps
                .iter()
                .map(|st| TraceEntry {
                    step: st.step,
                    score: st.score.unwrap_or(0.0),
                    temperature: st.temperature,
                })
                .collect())
        }
    }
}
