//! A small fixed-window language model with hand-written gradients.
//!
//! The next-token distribution at position `t` depends on the previous
//! `window` tokens (left-padded with `<pad>`): their embeddings are
//! concatenated, passed through one `tanh` layer, and projected to logits.
//! The `tanh` activations are the per-step hidden state consumed by the
//! regression head.
//!
//! Training minimizes the mean negative log-likelihood over response
//! positions. The dynamic-temperature variant divides the logits by a
//! per-example or per-token `T'` inside the training softmax, so the logit
//! gradient becomes `(softmax(z / T') - onehot) / T'`.

use serde::{Deserialize, Serialize};

use crate::corpus::DialogueExample;
use crate::error::{invalid, Result};
use crate::prob::{sample_categorical, LogitVector, ProbabilityDistribution, Temperature};
use crate::rng::RngState;
use crate::truncation::{self, TruncationConfig};
use crate::vocab::{EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub hidden_dim: usize,
}

impl LmDims {
    pub fn input_dim(&self) -> usize {
        self.window * self.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 || self.embed_dim == 0 || self.window == 0 || self.hidden_dim == 0 {
            return invalid(format!("degenerate model dimensions {self:?}"));
        }
        Ok(())
    }
}

pub const INIT_RANGE: f64 = 0.08;

/// Model parameters. Also used as the gradient container, since gradients
/// have exactly the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyLmParams {
    pub dims: LmDims,
    /// `vocab_size x embed_dim`, row-major.
    pub embedding: Vec<f64>,
    /// `(window * embed_dim) x hidden_dim`, row-major.
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    /// `hidden_dim x vocab_size`, row-major.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

/// Logits and hidden state of one forward step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub logits: LogitVector,
    pub hidden: Vec<f64>,
}

struct Forward {
    x: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl TinyLmParams {
    pub fn zeros(dims: LmDims) -> Self {
        Self {
            dims,
            embedding: vec![0.0; dims.vocab_size * dims.embed_dim],
            hidden_w: vec![0.0; dims.input_dim() * dims.hidden_dim],
            hidden_b: vec![0.0; dims.hidden_dim],
            out_w: vec![0.0; dims.hidden_dim * dims.vocab_size],
            out_b: vec![0.0; dims.vocab_size],
        }
    }

    /// Every entry uniform in `(-0.08, 0.08)`, drawn block by block.
    pub fn init(dims: LmDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut params = Self::zeros(dims);
        let mut rng = RngState::new(seed);
        for block in params.blocks_mut() {
            for v in block.iter_mut() {
                *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
            }
        }
        Ok(params)
    }

    pub fn blocks(&self) -> [&[f64]; 5] {
        [&self.embedding, &self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.embedding,
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &TinyLmParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn check_window(&self, window: &[usize]) -> Result<()> {
        if window.len() != self.dims.window {
            return invalid(format!(
                "window has {} tokens, model expects {}",
                window.len(),
                self.dims.window
            ));
        }
        if let Some(&t) = window.iter().find(|&&t| t >= self.dims.vocab_size) {
            return invalid(format!("token id {t} outside vocabulary of {}", self.dims.vocab_size));
        }
        Ok(())
    }

    fn forward_internal(&self, window: &[usize]) -> Forward {
        let LmDims {
            vocab_size: v,
            embed_dim: de,
            hidden_dim: dh,
            ..
        } = self.dims;
        let mut x = Vec::with_capacity(self.dims.input_dim());
        for &tok in window {
            x.extend_from_slice(&self.embedding[tok * de..(tok + 1) * de]);
        }
        let mut pre = self.hidden_b.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.hidden_w[i * dh..(i + 1) * dh];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += xi * w;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();
        let mut logits = self.out_b.clone();
        for (h, &hv) in hidden.iter().enumerate() {
            let row = &self.out_w[h * v..(h + 1) * v];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += hv * w;
            }
        }
        Forward { x, hidden, logits }
    }

    pub fn forward_step(&self, window: &[usize]) -> Result<StepOutput> {
        self.check_window(window)?;
        let fwd = self.forward_internal(window);
        Ok(StepOutput {
            logits: LogitVector::new(fwd.logits)?,
            hidden: fwd.hidden,
        })
    }

    /// Hidden state only.
    pub fn hidden_state(&self, window: &[usize]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        Ok(self.forward_internal(window).hidden)
    }

    /// Backpropagates `dhidden` (gradient w.r.t. the tanh outputs) into the
    /// hidden layer and the embeddings of the window tokens.
    fn backward_hidden(&self, window: &[usize], fwd: &Forward, dhidden: &[f64], grads: &mut TinyLmParams) {
        let de = self.dims.embed_dim;
        let dh = self.dims.hidden_dim;
        let dpre: Vec<f64> = dhidden
            .iter()
            .zip(&fwd.hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        for (gb, d) in grads.hidden_b.iter_mut().zip(&dpre) {
            *gb += d;
        }
        for (i, &xi) in fwd.x.iter().enumerate() {
            let w_row = &self.hidden_w[i * dh..(i + 1) * dh];
            let g_row = &mut grads.hidden_w[i * dh..(i + 1) * dh];
            let mut dx = 0.0;
            for ((g, w), d) in g_row.iter_mut().zip(w_row).zip(&dpre) {
                *g += xi * d;
                dx += w * d;
            }
            let tok = window[i / de];
            grads.embedding[tok * de + i % de] += dx;
        }
    }

    /// One target position: adds `scale * d(-ln p_target)/dθ` to `grads`
    /// and returns the unscaled loss.
    fn accumulate_position(
        &self,
        window: &[usize],
        target: usize,
        temperature: f64,
        scale: f64,
        grads: &mut TinyLmParams,
    ) -> f64 {
        let v = self.dims.vocab_size;
        let fwd = self.forward_internal(window);
        let inv_t = 1.0 / temperature;
        let max = fwd.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = fwd.logits.iter().map(|&z| ((z - max) * inv_t).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let loss = -probs[target].ln();
        // dz = (p - onehot) / T, scaled
        let mut dz = probs;
        dz[target] -= 1.0;
        for d in &mut dz {
            *d *= inv_t * scale;
        }
        let mut dhidden = vec![0.0; self.dims.hidden_dim];
        for (h, &hv) in fwd.hidden.iter().enumerate() {
            let w_row = &self.out_w[h * v..(h + 1) * v];
            let g_row = &mut grads.out_w[h * v..(h + 1) * v];
            let mut acc = 0.0;
            for ((g, w), d) in g_row.iter_mut().zip(w_row).zip(&dz) {
                *g += hv * d;
                acc += w * d;
            }
            dhidden[h] = acc;
        }
        for (g, d) in grads.out_b.iter_mut().zip(&dz) {
            *g += d;
        }
        self.backward_hidden(window, &fwd, &dhidden, grads);
        loss
    }

    /// Adds `d(state · dstate)/dθ` for the hidden state of `window`: the path
    /// by which a loss on the hidden state (the regression head) reaches the
    /// language model.
    pub fn accumulate_hidden_grad(&self, window: &[usize], dstate: &[f64], grads: &mut TinyLmParams) -> Result<()> {
        self.check_window(window)?;
        let fwd = self.forward_internal(window);
        self.backward_hidden(window, &fwd, dstate, grads);
        Ok(())
    }
}

/// The `window` tokens that precede position `end` of `seq`, left-padded.
pub fn context_window(seq: &[usize], end: usize, window: usize) -> Vec<usize> {
    let start = end.saturating_sub(window);
    let mut out = vec![PAD; window - (end - start)];
    out.extend_from_slice(&seq[start..end]);
    out
}

/// Temperatures used inside the training softmax.
#[derive(Debug, Clone, Copy)]
pub enum TokenTemperatures<'a> {
    /// `T' = 1` everywhere: ordinary NLL.
    Unit,
    /// One temperature per example (sentence level).
    PerExample(&'a [Temperature]),
    /// One temperature per response token (token level).
    PerToken(&'a [Vec<Temperature>]),
}

impl TokenTemperatures<'_> {
    fn check(&self, batch: &[DialogueExample]) -> Result<()> {
        match self {
            TokenTemperatures::Unit => Ok(()),
            TokenTemperatures::PerExample(ts) if ts.len() != batch.len() => {
                invalid(format!("{} temperatures for {} examples", ts.len(), batch.len()))
            }
            TokenTemperatures::PerToken(ts) => {
                if ts.len() != batch.len() {
                    return invalid(format!("{} temperature rows for {} examples", ts.len(), batch.len()));
                }
                for (row, ex) in ts.iter().zip(batch) {
                    if row.len() != ex.response.len() {
                        return invalid("per-token temperatures must match response length");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn get(&self, example: usize, token: usize) -> f64 {
        match self {
            TokenTemperatures::Unit => 1.0,
            TokenTemperatures::PerExample(ts) => ts[example].value(),
            TokenTemperatures::PerToken(ts) => ts[example][token].value(),
        }
    }
}

/// Adds the gradient of `weight * mean NLL` over all response tokens of the
/// batch to `grads`; returns the mean NLL.
pub fn accumulate_dynamic_nll(
    params: &TinyLmParams,
    batch: &[DialogueExample],
    temps: TokenTemperatures<'_>,
    weight: f64,
    grads: &mut TinyLmParams,
) -> Result<f64> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    temps.check(batch)?;
    let n_tokens: usize = batch.iter().map(|ex| ex.response.len()).sum();
    let scale = weight / n_tokens as f64;
    let w = params.dims.window;
    let mut total = 0.0;
    for (e, ex) in batch.iter().enumerate() {
        let seq = ex.sequence();
        for (t, &target) in ex.response.iter().enumerate() {
            if target >= params.dims.vocab_size {
                return invalid(format!("token id {target} outside vocabulary"));
            }
            let end = ex.context.len() + t;
            let window = context_window(&seq, end, w);
            params.check_window(&window)?;
            total += params.accumulate_position(&window, target, temps.get(e, t), scale, grads);
        }
    }
    Ok(total / n_tokens as f64)
}

/// Mean over response positions of `-ln p(r_t | r_<t, c)`, with gradients.
pub fn nll_loss(params: &TinyLmParams, batch: &[DialogueExample]) -> Result<(f64, TinyLmParams)> {
    dynamic_nll_loss(params, batch, TokenTemperatures::Unit)
}

/// Same as [`nll_loss`] with the temperature-scaled training softmax.
pub fn dynamic_nll_loss(
    params: &TinyLmParams,
    batch: &[DialogueExample],
    temps: TokenTemperatures<'_>,
) -> Result<(f64, TinyLmParams)> {
    let mut grads = TinyLmParams::zeros(params.dims);
    let loss = accumulate_dynamic_nll(params, batch, temps, 1.0, &mut grads)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Nll,
    DynamicTemperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadTrainingMode {
    /// Only the head moves.
    #[default]
    FrozenLm,
    /// Head MSE and LM NLL optimized together.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: LossMode,
    #[serde(default)]
    pub head_mode: HeadTrainingMode,
    /// Weight of the head MSE term against NLL in joint training.
    #[serde(default = "one")]
    pub mse_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            mode: LossMode::Nll,
            head_mode: HeadTrainingMode::FrozenLm,
            mse_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return invalid("epochs and batch size must be at least 1");
        }
        if !(self.mse_weight >= 0.0 && self.mse_weight.is_finite()) {
            return invalid("mse weight must be nonnegative");
        }
        Ok(())
    }

    /// Example order for one epoch: a seeded shuffle.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = RngState::new(self.seed).substream(epoch as u64);
        order.shuffle(&mut rng);
        order
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean batch NLL per epoch.
    pub nll: Vec<f64>,
    /// Mean batch MSE per epoch (head training only).
    pub mse: Vec<f64>,
}

/// Minibatch SGD on NLL, or on dynamic-temperature NLL when
/// `config.mode == DynamicTemperature` (then `temps` gives one `T'` per
/// example).
pub fn train_lm(
    params: &mut TinyLmParams,
    examples: &[DialogueExample],
    temps: Option<&[Temperature]>,
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if examples.is_empty() {
        return invalid("no training examples");
    }
    let temps = match (config.mode, temps) {
        (LossMode::Nll, _) => None,
        (LossMode::DynamicTemperature, Some(ts)) if ts.len() == examples.len() => Some(ts),
        (LossMode::DynamicTemperature, _) => {
            return invalid("dynamic temperature training needs one temperature per example")
        }
    };
    let mut grads = TinyLmParams::zeros(params.dims);
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let order = config.epoch_order(epoch, examples.len());
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<DialogueExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let batch_temps: Option<Vec<Temperature>> = temps.map(|ts| chunk.iter().map(|&i| ts[i]).collect());
            let tt = match &batch_temps {
                Some(ts) => TokenTemperatures::PerExample(ts),
                None => TokenTemperatures::Unit,
            };
            grads.fill_zero();
            epoch_loss += accumulate_dynamic_nll(params, &batch, tt, 1.0, &mut grads)?;
            batches += 1;
            params.axpy(-config.learning_rate, &grads);
        }
        log.nll.push(epoch_loss / batches as f64);
    }
    Ok(log)
}

/// Supplies the sampling temperature at each generation step.
pub trait TemperatureSource {
    fn temperature(&mut self, step: usize, hidden: &[f64]) -> Result<Temperature>;
}

impl TemperatureSource for Temperature {
    fn temperature(&mut self, _step: usize, _hidden: &[f64]) -> Result<Temperature> {
        Ok(*self)
    }
}

/// What happened at one generation step.
#[derive(Debug, Clone)]
pub struct StepRecord<'a> {
    pub step: usize,
    pub temperature: Temperature,
    pub dist: &'a ProbabilityDistribution,
    pub token: usize,
}

/// Autoregressive sampling from `context` (which must end with `<eos>`):
/// forward step, temperature, truncation, draw. Stops after emitting `<eos>`
/// or after `max_len` tokens. The returned tokens include the final `<eos>`
/// when one was produced.
pub fn generate(
    params: &TinyLmParams,
    context: &[usize],
    sampler: &TruncationConfig,
    source: &mut dyn TemperatureSource,
    rng: &mut RngState,
    max_len: usize,
) -> Result<Vec<usize>> {
    generate_observed(params, context, sampler, source, rng, max_len, &mut |_| {})
}

pub fn generate_observed(
    params: &TinyLmParams,
    context: &[usize],
    sampler: &TruncationConfig,
    source: &mut dyn TemperatureSource,
    rng: &mut RngState,
    max_len: usize,
    observer: &mut dyn FnMut(&StepRecord<'_>),
) -> Result<Vec<usize>> {
    if context.is_empty() {
        return invalid("empty context");
    }
    if max_len < 1 {
        return invalid("max_len must be at least 1");
    }
    sampler.validate()?;
    let w = params.dims.window;
    let mut seq = context.to_vec();
    let mut out = Vec::new();
    for step in 0..max_len {
        let window = context_window(&seq, seq.len(), w);
        let StepOutput { logits, hidden } = params.forward_step(&window)?;
        let t = source.temperature(step, &hidden)?;
        let dist = truncation::apply(sampler, &logits, t)?;
        let token = sample_categorical(&dist, rng);
        observer(&StepRecord {
            step,
            temperature: t,
            dist: &dist,
            token,
        });
        seq.push(token);
        out.push(token);
        if token == EOS {
            break;
        }
    }
    Ok(out)
}
