//! The pipeline stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use dds_core::checkpoint::Checkpoint;
use dds_core::corpus::{DialogueExample, DialogueRecord, Scenario};
use dds_core::decode::{decode, DecodeConfig, DecodedResponse, TemperatureMode};
use dds_core::diversity::{filter_extremes, label_dataset, LabeledExample, NgramCosine};
use dds_core::head::{predict_sentence_score, train_head, DiversityScore, HeadExample, HeadLevel, RegressionHeadParams};
use dds_core::mapping::{calibrate, map_score, MappingCalibration, MappingConfig};
use dds_core::metrics::{chitchat_metrics, qa_metrics, render_table, MetricReport, CHITCHAT_METRICS, QA_METRICS};
use dds_core::prob::Temperature;
use dds_core::rng::RngState;
use dds_core::tinylm::{train_lm, HeadTrainingMode, LossMode, TinyLmParams, TrainConfig, TrainLog};
use dds_core::truncation::TruncationConfig;
use dds_core::vocab::Vocabulary;

use crate::config::{PipelineConfig, SeedSlot};
use crate::error::{CliError, CliResult};
use crate::io::{read_json, read_jsonl, reset_dir, write_json, write_jsonl, write_text};
use crate::manifest::{check_upstream, config_hash, hash_file, rel, write_manifest, Manifest, Stage, Timings, MANIFEST_VERSION};
use crate::synth::{synthesize, unique_contexts};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub allow_stale: bool,
}

/// Where each artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    pub fn corpus(&self, split: &str) -> PathBuf {
        self.out.join("corpus").join(format!("{split}.jsonl"))
    }

    pub fn vocab(&self) -> PathBuf {
        self.out.join("corpus").join("vocab.txt")
    }

    pub fn lm(&self) -> PathBuf {
        self.out.join("lm.ckpt")
    }

    pub fn labeled(&self) -> PathBuf {
        self.out.join("labeled.jsonl")
    }

    pub fn filtered(&self) -> PathBuf {
        self.out.join("filtered.jsonl")
    }

    pub fn model(&self, level: HeadLevel) -> PathBuf {
        self.out.join(match level {
            HeadLevel::Sentence => "model_sentence.ckpt",
            HeadLevel::Token => "model_token.ckpt",
        })
    }

    pub fn dt(&self) -> PathBuf {
        self.out.join("dt.ckpt")
    }

    pub fn dt_base(&self) -> PathBuf {
        self.out.join("dt_base.ckpt")
    }

    pub fn decode_dir(&self) -> PathBuf {
        self.out.join("decode")
    }

    pub fn decode_dt_dir(&self) -> PathBuf {
        self.out.join("decode_dt")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.out.join("eval").join("report.json")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.out.join("report.txt")
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.out.join("config.resolved.json")
    }
}

struct StageRun<'a> {
    config: &'a PipelineConfig,
    layout: Layout,
    stage: Stage,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

fn begin<'a>(config: &'a PipelineConfig, stage: Stage, opts: RunOptions) -> CliResult<StageRun<'a>> {
    config.validate()?;
    let layout = Layout::new(&config.out);
    let inputs = check_upstream(&layout.out, stage, config, opts.allow_stale)?;
    write_json(&layout.resolved_config(), config)?;
    Ok(StageRun {
        config,
        layout,
        stage,
        inputs,
        started: Instant::now(),
    })
}

impl StageRun<'_> {
    fn finish(self, outputs: &[PathBuf], stats: serde_json::Value) -> CliResult<Manifest> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            hashes.insert(rel(&self.layout.out, p), hash_file(p)?);
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            stage: self.stage.command().to_string(),
            seed: self.config.seed,
            config_hash: config_hash(self.config),
            inputs: self.inputs,
            outputs: hashes,
            stats,
            timings: Timings {
                seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        write_manifest(&self.layout.out, self.stage, &manifest)?;
        Ok(manifest)
    }
}

fn load_vocab(layout: &Layout) -> CliResult<Vocabulary> {
    Ok(Vocabulary::load(&layout.vocab())?)
}

fn encode_all(records: &[DialogueRecord], vocab: &Vocabulary) -> CliResult<Vec<DialogueExample>> {
    Ok(records
        .iter()
        .map(|r| DialogueExample::encode(r, vocab))
        .collect::<dds_core::Result<Vec<_>>>()?)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn scenario_means<'a>(rows: impl Iterator<Item = (Scenario, f64)> + Clone + 'a) -> serde_json::Value {
    json!({
        "qa": mean(rows.clone().filter(|r| r.0 == Scenario::Qa).map(|r| r.1)),
        "chitchat": mean(rows.filter(|r| r.0 == Scenario::Chitchat).map(|r| r.1)),
    })
}

pub fn cmd_synth(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Synth, opts)?;
    let corpus = synthesize(&config.corpus, config.seed_for(SeedSlot::Synth))?;
    let l = &run.layout.clone();
    write_text(&l.vocab(), &corpus.vocab.to_file_string())?;
    write_jsonl(&l.corpus("train"), &corpus.train)?;
    write_jsonl(&l.corpus("valid"), &corpus.valid)?;
    write_jsonl(&l.corpus("test"), &corpus.test)?;
    let outputs = vec![l.vocab(), l.corpus("train"), l.corpus("valid"), l.corpus("test")];
    let stats = json!({
        "vocab_size": corpus.vocab.len(),
        "records": {"train": corpus.train.len(), "valid": corpus.valid.len(), "test": corpus.test.len()},
    });
    run.finish(&outputs, stats)
}

pub fn cmd_train_lm(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::TrainLm, opts)?;
    let l = &run.layout.clone();
    let vocab = load_vocab(l)?;
    let train: Vec<DialogueRecord> = read_jsonl(&l.corpus("train"))?;
    let examples = encode_all(&train, &vocab)?;
    let mut lm = TinyLmParams::init(config.model.dims(vocab.len()), config.seed_for(SeedSlot::LmInit))?;
    let log = train_lm(&mut lm, &examples, None, &config.lm_train.train_config(config.seed_for(SeedSlot::LmTrain)))?;
    let ck = Checkpoint {
        lm,
        head: None,
        calibration: None,
    };
    ck.save(&l.lm())?;
    let stats = json!({"param_count": ck.lm.param_count(), "nll": log.nll});
    run.finish(&[l.lm()], stats)
}

pub fn cmd_label(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Label, opts)?;
    let l = &run.layout.clone();
    let vocab = load_vocab(l)?;
    let train: Vec<DialogueRecord> = read_jsonl(&l.corpus("train"))?;
    let lm = Checkpoint::load(&l.lm())?.lm;
    let labeled = label_dataset(&lm, &vocab, &train, &config.labeling_config()?, &NgramCosine::default())?;
    write_jsonl(&l.labeled(), &labeled)?;
    let stats = json!({
        "examples": labeled.len(),
        "mean_score": scenario_means(labeled.iter().map(|e| (e.record.scenario, e.score.value()))),
    });
    run.finish(&[l.labeled()], stats)
}

pub fn cmd_filter(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Filter, opts)?;
    let l = &run.layout.clone();
    let labeled: Vec<LabeledExample> = read_jsonl(&l.labeled())?;
    let kept = filter_extremes(&labeled, &config.filter);
    write_jsonl(&l.filtered(), &kept)?;
    let count = |rows: &[LabeledExample], s: Scenario| rows.iter().filter(|e| e.record.scenario == s).count();
    let stats = json!({
        "kept": {"qa": count(&kept, Scenario::Qa), "chitchat": count(&kept, Scenario::Chitchat)},
        "dropped": {
            "qa": count(&labeled, Scenario::Qa) - count(&kept, Scenario::Qa),
            "chitchat": count(&labeled, Scenario::Chitchat) - count(&kept, Scenario::Chitchat),
        },
    });
    run.finish(&[l.filtered()], stats)
}

fn load_head_data(layout: &Layout, vocab: &Vocabulary) -> CliResult<(Vec<LabeledExample>, Vec<HeadExample>)> {
    let filtered: Vec<LabeledExample> = read_jsonl(&layout.filtered())?;
    if filtered.is_empty() {
        return Err(CliError::Validation("filtering left no labeled examples".into()));
    }
    let data = filtered
        .iter()
        .map(|e| e.to_head_example(vocab))
        .collect::<dds_core::Result<Vec<_>>>()?;
    Ok((filtered, data))
}

fn labels(filtered: &[LabeledExample]) -> Vec<DiversityScore> {
    filtered.iter().map(|e| e.score).collect()
}

pub fn cmd_train_head(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::TrainHead, opts)?;
    let l = &run.layout.clone();
    let vocab = load_vocab(l)?;
    let base = Checkpoint::load(&l.lm())?.lm;
    let (filtered, data) = load_head_data(l, &vocab)?;
    let calibration = calibrate(&config.mapping, &labels(&filtered))?;
    let head_cfg = config.head_train_config();
    let mut stats = serde_json::Map::new();
    let mut outputs = Vec::new();
    for level in [HeadLevel::Sentence, HeadLevel::Token] {
        let mut lm = base.clone();
        let mut head = RegressionHeadParams::init(lm.dims.hidden_dim, config.seed_for(SeedSlot::HeadInit));
        let log = train_head(&mut lm, &mut head, &data, &head_cfg, level, None)?;
        let ratio = head.param_count() as f64 / (head.param_count() + lm.param_count()) as f64;
        let ck = Checkpoint {
            lm,
            head: Some(head),
            calibration: Some(calibration),
        };
        ck.save(&l.model(level))?;
        outputs.push(l.model(level));
        let name = if level == HeadLevel::Sentence { "sentence" } else { "token" };
        stats.insert(name.into(), json!({"mse": log.mse, "nll": log.nll, "head_param_ratio": ratio}));
    }
    stats.insert("calibration".into(), json!(calibration));
    run.finish(&outputs, serde_json::Value::Object(stats))
}

/// A language model and sentence head trained together on the labeled set.
#[derive(Debug, Clone)]
pub struct DtOutcome {
    pub lm: TinyLmParams,
    pub head: RegressionHeadParams,
    pub log: TrainLog,
}

/// Trains from `init_lm`/`init_head`. With `temps` the language-model loss is
/// the dynamic-temperature NLL, otherwise plain NLL. `joint` optimizes NLL and
/// head MSE together; otherwise the head is fitted afterwards on the frozen
/// model with `head_cfg`.
pub fn dynamic_training(
    init_lm: &TinyLmParams,
    init_head: &RegressionHeadParams,
    data: &[HeadExample],
    temps: Option<&[Temperature]>,
    lm_cfg: &TrainConfig,
    head_cfg: &TrainConfig,
    joint: bool,
) -> CliResult<DtOutcome> {
    let mut lm = init_lm.clone();
    let mut head = init_head.clone();
    let mode = if temps.is_some() { LossMode::DynamicTemperature } else { LossMode::Nll };
    let log = if joint {
        let cfg = TrainConfig {
            mode,
            head_mode: HeadTrainingMode::Joint,
            ..*lm_cfg
        };
        train_head(&mut lm, &mut head, data, &cfg, HeadLevel::Sentence, temps)?
    } else {
        let examples: Vec<DialogueExample> = data.iter().map(|h| h.example.clone()).collect();
        let mut log = train_lm(&mut lm, &examples, temps, &TrainConfig { mode, ..*lm_cfg })?;
        let frozen = TrainConfig {
            head_mode: HeadTrainingMode::FrozenLm,
            ..*head_cfg
        };
        log.mse = train_head(&mut lm, &mut head, data, &frozen, HeadLevel::Sentence, None)?.mse;
        log
    };
    Ok(DtOutcome { lm, head, log })
}

/// Training temperatures per example: mapped labels, or mapped predictions
/// of `predictor` when given.
pub fn dt_temperatures(
    mapping: &MappingConfig,
    filtered: &[LabeledExample],
    data: &[HeadExample],
    predictor: Option<&Checkpoint>,
) -> CliResult<(MappingCalibration, Vec<Temperature>)> {
    let scores: Vec<DiversityScore> = match predictor {
        None => labels(filtered),
        Some(ck) => {
            let head = ck
                .head
                .as_ref()
                .ok_or_else(|| CliError::Validation("sentence checkpoint has no head".into()))?;
            data.iter()
                .map(|h| predict_sentence_score(&ck.lm, head, &h.example.context))
                .collect::<dds_core::Result<Vec<_>>>()?
        }
    };
    let calibration = calibrate(mapping, &scores)?;
    let temps = scores.iter().map(|&s| map_score(mapping, &calibration, s)).collect();
    Ok((calibration, temps))
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let x = ((v - lo) / (hi - lo) * bins as f64).floor();
        counts[(x.max(0.0) as usize).min(bins - 1)] += 1;
    }
    counts
}

pub fn cmd_dt_train(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::DtTrain, opts)?;
    let l = &run.layout.clone();
    let vocab = load_vocab(l)?;
    let (filtered, data) = load_head_data(l, &vocab)?;
    let predictor = if config.dt.use_predicted {
        Some(Checkpoint::load(&l.model(HeadLevel::Sentence))?)
    } else {
        None
    };
    let (dt_calibration, temps) = dt_temperatures(&config.dt.mapping, &filtered, &data, predictor.as_ref())?;
    let decode_calibration = calibrate(&config.mapping, &labels(&filtered))?;

    let init_lm = TinyLmParams::init(config.model.dims(vocab.len()), config.seed_for(SeedSlot::LmInit))?;
    let init_head = RegressionHeadParams::init(init_lm.dims.hidden_dim, config.seed_for(SeedSlot::HeadInit));
    let lm_cfg = config.lm_train.train_config(config.seed_for(SeedSlot::DtTrain));
    let head_cfg = config.head_train_config();
    let base = dynamic_training(&init_lm, &init_head, &data, None, &lm_cfg, &head_cfg, config.dt.joint)?;
    let dt = dynamic_training(&init_lm, &init_head, &data, Some(&temps), &lm_cfg, &head_cfg, config.dt.joint)?;
    for (path, outcome) in [(l.dt_base(), &base), (l.dt(), &dt)] {
        Checkpoint {
            lm: outcome.lm.clone(),
            head: Some(outcome.head.clone()),
            calibration: Some(decode_calibration),
        }
        .save(&path)?;
    }
    let tv: Vec<f64> = temps.iter().map(|t| t.value()).collect();
    let m = &config.dt.mapping;
    let stats = json!({
        "temperature_histogram": {
            "lo": m.t_min,
            "hi": m.t_max,
            "counts": histogram(&tv, m.t_min, m.t_max, 20),
        },
        "mean_temperature": scenario_means(filtered.iter().zip(&tv).map(|(e, &t)| (e.record.scenario, t))),
        "dt_calibration": dt_calibration,
        "source": if config.dt.use_predicted { "predicted" } else { "labels" },
        "base": {"nll": base.log.nll, "mse": base.log.mse},
        "dt": {"nll": dt.log.nll, "mse": dt.log.mse},
    });
    run.finish(&[l.dt_base(), l.dt()], stats)
}

/// One line of a decode output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRow {
    pub index: usize,
    pub context: String,
    pub scenario: Scenario,
    pub reference: String,
    pub model: String,
    pub sampler: String,
    pub mode: TemperatureMode,
    pub responses: Vec<String>,
    /// Predicted sentence-level score (sentence mode).
    pub score: Option<f64>,
    /// Mean `T'` over the steps of each response.
    pub temperatures: Vec<f64>,
    /// Per-step trace file, relative to the output directory (token mode).
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub score: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    pub sample: usize,
    pub steps: Vec<TraceStep>,
}

pub fn decode_file_name(model: &str, sampler: &TruncationConfig, mode: TemperatureMode) -> String {
    if model == "lm" {
        format!("{}_{}.jsonl", sampler.name(), mode.name())
    } else {
        format!("{model}_{}_{}.jsonl", sampler.name(), mode.name())
    }
}

struct DecodeJob<'a> {
    model: &'a str,
    ck: &'a Checkpoint,
    sampler: TruncationConfig,
    mode: TemperatureMode,
}

fn run_decode_job(
    config: &PipelineConfig,
    layout: &Layout,
    dir: &Path,
    job: &DecodeJob<'_>,
    vocab: &Vocabulary,
    contexts: &[&DialogueRecord],
) -> CliResult<Vec<PathBuf>> {
    let d = &config.decode;
    let dc = DecodeConfig {
        truncation: job.sampler,
        mode: job.mode,
        temperature: Temperature::new(d.fixed_temperature)?,
        mapping: Some(config.mapping),
        calibration: job.ck.calibration,
        max_len: d.max_len,
        num_samples: d.num_samples,
        seed: config.seed_for(SeedSlot::Decode),
    };
    dc.validate()?;
    let name = decode_file_name(job.model, &job.sampler, job.mode);
    let path = dir.join(&name);
    let trace_path = dir.join("traces").join(&name);
    let trace_rel = (job.mode == TemperatureMode::DdsToken).then(|| rel(&layout.out, &trace_path));
    let root = RngState::new(dc.seed);
    let mut rows = Vec::with_capacity(contexts.len());
    let mut traces = Vec::new();
    for (i, rec) in contexts.iter().enumerate() {
        let ctx = vocab.encode_context(&rec.context);
        let out: Vec<DecodedResponse> = decode(&job.ck.lm, job.ck.head.as_ref(), &ctx, &dc, &root.substream(i as u64))?;
        let score = match job.mode {
            TemperatureMode::DdsSentence => out[0].steps.first().and_then(|s| s.score),
            _ => None,
        };
        rows.push(DecodeRow {
            index: i,
            context: rec.context.clone(),
            scenario: rec.scenario,
            reference: rec.response.clone(),
            model: job.model.to_string(),
            sampler: job.sampler.name().to_string(),
            mode: job.mode,
            responses: out.iter().map(|r| vocab.decode(&r.tokens)).collect(),
            score,
            temperatures: out.iter().map(|r| mean(r.steps.iter().map(|s| s.temperature))).collect(),
            trace: trace_rel.clone(),
        });
        if trace_rel.is_some() {
            for (j, r) in out.iter().enumerate() {
                traces.push(TraceRow {
                    index: i,
                    sample: j,
                    steps: r
                        .steps
                        .iter()
                        .map(|s| TraceStep {
                            step: s.step,
                            score: s.score.unwrap_or(0.0),
                            temperature: s.temperature,
                        })
                        .collect(),
                });
            }
        }
    }
    write_jsonl(&path, &rows)?;
    let mut written = vec![path];
    if trace_rel.is_some() {
        write_jsonl(&trace_path, &traces)?;
        written.push(trace_path);
    }
    Ok(written)
}

pub fn cmd_decode(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Decode, opts)?;
    let l = &run.layout.clone();
    let vocab = load_vocab(l)?;
    let test: Vec<DialogueRecord> = read_jsonl(&l.corpus("test"))?;
    let contexts = unique_contexts(&test);
    let sentence = Checkpoint::load(&l.model(HeadLevel::Sentence))?;
    let token = Checkpoint::load(&l.model(HeadLevel::Token))?;
    reset_dir(&l.decode_dir())?;
    let mut outputs = Vec::new();
    for &sampler in &config.decode.samplers {
        for &mode in &config.decode.modes {
            let ck = if mode == TemperatureMode::DdsToken { &token } else { &sentence };
            let job = DecodeJob { model: "lm", ck, sampler, mode };
            outputs.extend(run_decode_job(config, l, &l.decode_dir(), &job, &vocab, &contexts)?);
        }
    }
    let dt_dir = l.decode_dt_dir();
    if dt_dir.exists() {
        std::fs::remove_dir_all(&dt_dir).map_err(|source| CliError::Io {
            path: dt_dir.display().to_string(),
            source,
        })?;
    }
    if config.decode.include_dt {
        reset_dir(&dt_dir)?;
        let base = Checkpoint::load(&l.dt_base())?;
        let dt = Checkpoint::load(&l.dt())?;
        for &sampler in &config.decode.samplers {
            for (model, ck, mode) in [
                ("dt_base", &base, TemperatureMode::Fixed),
                ("dt", &dt, TemperatureMode::Fixed),
                ("dt", &dt, TemperatureMode::DdsSentence),
            ] {
                let job = DecodeJob { model, ck, sampler, mode };
                outputs.extend(run_decode_job(config, l, &dt_dir, &job, &vocab, &contexts)?);
            }
        }
    }
    let stats = json!({"contexts": contexts.len(), "files": outputs.len()});
    run.finish(&outputs, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: BTreeMap<String, String>,
    pub reports: Vec<MetricReport>,
}

impl EvalReport {
    pub fn find(&self, dataset: &str, config: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.dataset == dataset && r.config == config)
    }
}

/// Report id of a decode file: `sampler/mode`, prefixed by the model for the
/// dynamic-training grid.
pub fn config_id(row: &DecodeRow) -> String {
    if row.model == "lm" {
        format!("{}/{}", row.sampler, row.mode.name())
    } else {
        format!("{}/{}/{}", row.model, row.sampler, row.mode.name())
    }
}

/// Metrics of one decode file, one report per scenario present.
pub fn evaluate_rows(rows: &[DecodeRow]) -> CliResult<Vec<MetricReport>> {
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let id = config_id(first);
    let scorer = NgramCosine::default();
    let mut out = Vec::new();
    for scenario in [Scenario::Qa, Scenario::Chitchat] {
        let subset: Vec<&DecodeRow> = rows.iter().filter(|r| r.scenario == scenario).collect();
        if subset.is_empty() {
            continue;
        }
        let mut values = match scenario {
            Scenario::Qa => {
                let pairs: Vec<(Vec<&str>, Vec<&str>)> = subset
                    .iter()
                    .map(|r| {
                        let first = r.responses.first().map(String::as_str).unwrap_or("");
                        (first.split_whitespace().collect(), r.reference.split_whitespace().collect())
                    })
                    .collect();
                qa_metrics(&pairs)
            }
            Scenario::Chitchat => {
                let groups: Vec<Vec<String>> = subset.iter().map(|r| r.responses.clone()).collect();
                chitchat_metrics(&groups, &scorer)?
            }
        };
        values.insert("mean-t".into(), mean(subset.iter().flat_map(|r| r.temperatures.iter().copied())));
        let report = MetricReport {
            dataset: scenario.to_string(),
            config: id.clone(),
            values,
        };
        report.validate()?;
        out.push(report);
    }
    Ok(out)
}

pub fn cmd_eval(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Eval, opts)?;
    let l = &run.layout.clone();
    let decode_manifest = crate::manifest::load_manifest(&l.out, Stage::Decode)?;
    let mut reports = Vec::new();
    for file in decode_manifest.outputs.keys() {
        if file.contains("/traces/") {
            continue;
        }
        let rows: Vec<DecodeRow> = read_jsonl(&l.out.join(file))?;
        reports.extend(evaluate_rows(&rows)?);
    }
    let metadata: BTreeMap<String, String> = [
        ("bleu_smoothing", "add-one on zero n-gram counts: 1/(c+1)"),
        ("ent_pooling", "corpus-wide, base 2"),
        ("qa_sample", "first sampled response against the reference"),
        ("similarity", "character n-gram cosine, n = 1..3"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let report = EvalReport { metadata, reports };
    write_json(&l.eval_report(), &report)?;
    run.finish(&[l.eval_report()], json!({"reports": report.reports.len()}))
}

pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let sections: [(&str, &str, bool, &[&str]); 4] = [
        ("QA", "qa", false, &QA_METRICS),
        ("Chit-chat", "chitchat", false, &CHITCHAT_METRICS),
        ("QA, dynamic training", "qa", true, &QA_METRICS),
        ("Chit-chat, dynamic training", "chitchat", true, &CHITCHAT_METRICS),
    ];
    for (title, dataset, dt, metrics) in sections {
        let rows: Vec<MetricReport> = report
            .reports
            .iter()
            .filter(|r| r.dataset == dataset && r.config.starts_with("dt") == dt)
            .cloned()
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mut cols: Vec<&str> = metrics.to_vec();
        cols.push("mean-t");
        out.push_str(&format!("{title}\n"));
        out.push_str(&render_table(&rows, &cols));
        out.push('\n');
    }
    for (k, v) in &report.metadata {
        out.push_str(&format!("{k}: {v}\n"));
    }
    out
}

pub fn cmd_report(config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    let run = begin(config, Stage::Report, opts)?;
    let l = &run.layout.clone();
    let report: EvalReport = read_json(&l.eval_report())?;
    write_text(&l.report_txt(), &render_report(&report))?;
    run.finish(&[l.report_txt()], json!({}))
}

pub fn run_stage(stage: Stage, config: &PipelineConfig, opts: RunOptions) -> CliResult<Manifest> {
    match stage {
        Stage::Synth => cmd_synth(config, opts),
        Stage::TrainLm => cmd_train_lm(config, opts),
        Stage::Label => cmd_label(config, opts),
        Stage::Filter => cmd_filter(config, opts),
        Stage::TrainHead => cmd_train_head(config, opts),
        Stage::DtTrain => cmd_dt_train(config, opts),
        Stage::Decode => cmd_decode(config, opts),
        Stage::Eval => cmd_eval(config, opts),
        Stage::Report => cmd_report(config, opts),
    }
}
