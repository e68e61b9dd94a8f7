//! The pipeline configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dds_core::decode::TemperatureMode;
use dds_core::diversity::{FilterThresholds, LabelingConfig};
use dds_core::mapping::{MappingConfig, MappingStrategy};
use dds_core::prob::Temperature;
use dds_core::rng::RngState;
use dds_core::tinylm::{HeadTrainingMode, LmDims, LossMode, TrainConfig};
use dds_core::truncation::TruncationConfig;

use crate::error::{validation, CliError, CliResult};
use crate::synth::SyntheticCorpusSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub window: usize,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 160,
            window: 8,
            hidden_dim: 24,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, vocab_size: usize) -> LmDims {
        LmDims {
            vocab_size,
            embed_dim: self.embed_dim,
            window: self.window,
            hidden_dim: self.hidden_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl OptimConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingSection {
    pub m: usize,
    pub sampler: TruncationConfig,
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for LabelingSection {
    fn default() -> Self {
        let d = LabelingConfig::default();
        Self {
            m: d.m,
            sampler: d.sampler,
            temperature: d.temperature.value(),
            max_len: d.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: HeadTrainingMode,
    pub mse_weight: f64,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 16,
            mode: HeadTrainingMode::FrozenLm,
            mse_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtSection {
    /// Map from labeled scores to training temperatures.
    pub mapping: MappingConfig,
    /// Train the sentence head alongside the language model.
    pub joint: bool,
    /// Take `T'` from the frozen sentence head instead of the labels.
    pub use_predicted: bool,
}

impl Default for DtSection {
    fn default() -> Self {
        Self {
            mapping: MappingConfig::new(MappingStrategy::Linear).with_h(1.0),
            joint: true,
            use_predicted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub samplers: Vec<TruncationConfig>,
    pub modes: Vec<TemperatureMode>,
    pub fixed_temperature: f64,
    pub num_samples: usize,
    pub max_len: usize,
    /// Also decode the dynamically trained checkpoints.
    pub include_dt: bool,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            samplers: TruncationConfig::all_defaults().to_vec(),
            modes: TemperatureMode::ALL.to_vec(),
            fixed_temperature: 1.0,
            num_samples: 5,
            max_len: 12,
            include_dt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub corpus: SyntheticCorpusSpec,
    pub model: ModelConfig,
    pub lm_train: OptimConfig,
    pub labeling: LabelingSection,
    pub filter: FilterThresholds,
    pub head: HeadSection,
    pub mapping: MappingConfig,
    pub dt: DtSection,
    pub decode: DecodeSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("run"),
            corpus: SyntheticCorpusSpec::default(),
            model: ModelConfig::default(),
            lm_train: OptimConfig::default(),
            labeling: LabelingSection::default(),
            filter: FilterThresholds::default(),
            head: HeadSection::default(),
            mapping: MappingConfig::new(MappingStrategy::Linear),
            dt: DtSection::default(),
            decode: DecodeSection::default(),
        }
    }
}

/// Stage identifiers used to derive independent seeds from the global one.
#[derive(Debug, Clone, Copy)]
pub enum SeedSlot {
    Synth = 1,
    LmInit = 2,
    LmTrain = 3,
    Label = 4,
    HeadInit = 5,
    HeadTrain = 6,
    Decode = 7,
    DtTrain = 8,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn seed_for(&self, slot: SeedSlot) -> u64 {
        use rand::RngCore;
        RngState::new(self.seed).substream(slot as u64).next_u64()
    }

    pub fn labeling_config(&self) -> CliResult<LabelingConfig> {
        Ok(LabelingConfig {
            m: self.labeling.m,
            sampler: self.labeling.sampler,
            temperature: Temperature::new(self.labeling.temperature)?,
            max_len: self.labeling.max_len,
            seed: self.seed_for(SeedSlot::Label),
        })
    }

    pub fn head_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.head.learning_rate,
            epochs: self.head.epochs,
            batch_size: self.head.batch_size,
            seed: self.seed_for(SeedSlot::HeadTrain),
            mode: LossMode::Nll,
            head_mode: self.head.mode,
            mse_weight: self.head.mse_weight,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.corpus.validate()?;
        self.model.dims(self.corpus.vocab_size).validate()?;
        self.lm_train.train_config(0).validate()?;
        self.labeling_config()?.validate()?;
        self.head_train_config().validate()?;
        self.mapping.validate()?;
        self.dt.mapping.validate()?;
        let f = &self.filter;
        if !(0.0..=1.0).contains(&f.qa_min) || !(0.0..=1.0).contains(&f.chitchat_max) {
            return validation("filter thresholds must lie in [0, 1]");
        }
        let d = &self.decode;
        if d.samplers.is_empty() || d.modes.is_empty() {
            return validation("decode needs at least one sampler and one mode");
        }
        for s in &d.samplers {
            s.validate()?;
        }
        let mut names: Vec<&str> = d.samplers.iter().map(|s| s.name()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != d.samplers.len() {
            return validation("decode samplers must be of distinct kinds");
        }
        Temperature::new(d.fixed_temperature)?;
        if d.num_samples < 2 {
            return validation("decode num_samples must be at least 2 for self-similarity");
        }
        if d.max_len < 1 {
            return validation("decode max_len must be at least 1");
        }
        Ok(())
    }
}
