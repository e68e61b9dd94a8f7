//! The diversity-score regression head.
//!
//! `score = tanh(W1ᵀ x + b1) · W2 + b2` on a hidden state `x` of the language
//! model, fitted to labeled scores with mean squared error. At sentence level
//! `x` is the state at the context's closing `<eos>`; at token level every
//! generation step of every labeling candidate is a training point carrying
//! that candidate set's label.

use serde::{Deserialize, Serialize};

use crate::corpus::DialogueExample;
use crate::error::{invalid, Result};
use crate::prob::Temperature;
use crate::rng::RngState;
use crate::tinylm::{
    accumulate_dynamic_nll, context_window, HeadTrainingMode, LossMode, TinyLmParams, TokenTemperatures,
    TrainConfig, TrainLog, INIT_RANGE,
};
use crate::vocab::EOS;

/// Similarity of sampled responses; higher means a narrower decoding space.
/// Always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct DiversityScore(f64);

impl DiversityScore {
    /// Clamps into `[0, 1]`; NaN becomes 0.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return Self(0.0);
        }
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for DiversityScore {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl From<DiversityScore> for f64 {
    fn from(s: DiversityScore) -> f64 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLevel {
    Sentence,
    Token,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHeadParams {
    pub dim: usize,
    /// `dim x dim`, row-major; column `j` feeds hidden unit `j`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl RegressionHeadParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            w1: vec![0.0; dim * dim],
            b1: vec![0.0; dim],
            w2: vec![0.0; dim],
            b2: 0.0,
        }
    }

    pub fn init(dim: usize, seed: u64) -> Self {
        let mut head = Self::zeros(dim);
        let mut rng = RngState::new(seed);
        for v in head.w1.iter_mut().chain(head.b1.iter_mut()).chain(head.w2.iter_mut()) {
            *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
        }
        head.b2 = rng.uniform(-INIT_RANGE, INIT_RANGE);
        head
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn fill_zero(&mut self) {
        self.w1.iter_mut().for_each(|v| *v = 0.0);
        self.b1.iter_mut().for_each(|v| *v = 0.0);
        self.w2.iter_mut().for_each(|v| *v = 0.0);
        self.b2 = 0.0;
    }

    pub fn axpy(&mut self, alpha: f64, other: &RegressionHeadParams) {
        for (d, s) in self.w1.iter_mut().zip(&other.w1) {
            *d += alpha * s;
        }
        for (d, s) in self.b1.iter_mut().zip(&other.b1) {
            *d += alpha * s;
        }
        for (d, s) in self.w2.iter_mut().zip(&other.w2) {
            *d += alpha * s;
        }
        self.b2 += alpha * other.b2;
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut pre = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w1[i * d..(i + 1) * d];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += xi * w;
            }
        }
        pre.iter().map(|p| p.tanh()).collect()
    }

    /// Adds `dscore * d score/dθ` to `grads` and returns `d score/dx * dscore`.
    fn backward(&self, x: &[f64], dscore: f64, grads: &mut RegressionHeadParams) -> Vec<f64> {
        let d = self.dim;
        let a = self.activations(x);
        grads.b2 += dscore;
        let mut dpre = vec![0.0; d];
        for j in 0..d {
            grads.w2[j] += dscore * a[j];
            dpre[j] = dscore * self.w2[j] * (1.0 - a[j] * a[j]);
            grads.b1[j] += dpre[j];
        }
        let mut dx = vec![0.0; d];
        for (i, &xi) in x.iter().enumerate() {
            let w_row = &self.w1[i * d..(i + 1) * d];
            let g_row = &mut grads.w1[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for ((g, w), dp) in g_row.iter_mut().zip(w_row).zip(&dpre) {
                *g += xi * dp;
                acc += w * dp;
            }
            dx[i] = acc;
        }
        dx
    }
}

/// Raw (unclamped) head output.
pub fn head_forward(head: &RegressionHeadParams, x: &[f64]) -> Result<f64> {
    if x.len() != head.dim {
        return invalid(format!("hidden state has {} entries, head expects {}", x.len(), head.dim));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("hidden state is not finite");
    }
    let a = head.activations(x);
    Ok(a.iter().zip(&head.w2).map(|(a, w)| a * w).sum::<f64>() + head.b2)
}

fn check_pairs(head: &RegressionHeadParams, states: &[Vec<f64>], labels: &[DiversityScore]) -> Result<()> {
    if states.len() != labels.len() {
        return invalid(format!("{} states but {} labels", states.len(), labels.len()));
    }
    if states.is_empty() {
        return invalid("no states to score");
    }
    if let Some(s) = states.iter().find(|s| s.len() != head.dim) {
        return invalid(format!("hidden state has {} entries, head expects {}", s.len(), head.dim));
    }
    Ok(())
}

/// Adds `weight * d MSE/dθ` to `grads`; returns the MSE and `d MSE/d state`
/// (already multiplied by `weight`) for every state.
fn accumulate_mse(
    head: &RegressionHeadParams,
    states: &[Vec<f64>],
    labels: &[DiversityScore],
    weight: f64,
    grads: &mut RegressionHeadParams,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_pairs(head, states, labels)?;
    let n = states.len() as f64;
    let mut total = 0.0;
    let mut dstates = Vec::with_capacity(states.len());
    for (x, label) in states.iter().zip(labels) {
        let err = head_forward(head, x)? - label.value();
        total += err * err;
        dstates.push(head.backward(x, weight * 2.0 * err / n, grads));
    }
    Ok((total / n, dstates))
}

/// `mean (s - ŝ)²` with gradients w.r.t. the head parameters.
pub fn mse_loss(
    head: &RegressionHeadParams,
    states: &[Vec<f64>],
    labels: &[DiversityScore],
) -> Result<(f64, RegressionHeadParams)> {
    let mut grads = RegressionHeadParams::zeros(head.dim);
    let (loss, _) = accumulate_mse(head, states, labels, 1.0, &mut grads)?;
    Ok((loss, grads))
}

fn check_head_matches(lm: &TinyLmParams, head: &RegressionHeadParams) -> Result<()> {
    if lm.dims.hidden_dim != head.dim {
        return invalid(format!(
            "head width {} does not match model hidden size {}",
            head.dim, lm.dims.hidden_dim
        ));
    }
    Ok(())
}

/// Score from the hidden state at the context's closing `<eos>`.
pub fn predict_sentence_score(lm: &TinyLmParams, head: &RegressionHeadParams, context: &[usize]) -> Result<DiversityScore> {
    check_head_matches(lm, head)?;
    if context.is_empty() {
        return invalid("empty context");
    }
    if context[context.len() - 1] != EOS {
        return invalid("context must end with <eos>");
    }
    let window = context_window(context, context.len(), lm.dims.window);
    predict_token_score(lm, head, &window)
}

/// Score from the hidden state of one generation step.
pub fn predict_token_score(lm: &TinyLmParams, head: &RegressionHeadParams, window: &[usize]) -> Result<DiversityScore> {
    check_head_matches(lm, head)?;
    let hidden = lm.hidden_state(window)?;
    Ok(DiversityScore::new(head_forward(head, &hidden)?))
}

/// A training point for the head: the dialogue, the labeling candidates and
/// the label.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadExample {
    pub example: DialogueExample,
    pub candidates: Vec<Vec<usize>>,
    pub label: Option<DiversityScore>,
}

/// The windows whose hidden states carry `label` at the given level.
fn head_windows(ex: &HeadExample, level: HeadLevel, w: usize) -> Vec<Vec<usize>> {
    let ctx = &ex.example.context;
    match level {
        HeadLevel::Sentence => vec![context_window(ctx, ctx.len(), w)],
        HeadLevel::Token => {
            let mut out = Vec::new();
            for cand in &ex.candidates {
                let mut seq = ctx.clone();
                seq.extend_from_slice(cand);
                for t in 0..cand.len() {
                    out.push(context_window(&seq, ctx.len() + t, w));
                }
            }
            out
        }
    }
}

fn labels_of(data: &[HeadExample]) -> Result<Vec<DiversityScore>> {
    data.iter()
        .enumerate()
        .map(|(i, ex)| ex.label.ok_or_else(|| crate::DdsError::InvalidInput(format!("example {i} has no score label"))))
        .collect()
}

/// Breakdown of the combined objective `NLL + mse_weight * MSE`.
#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: f64,
    pub nll: f64,
    pub mse: f64,
    pub lm_grads: TinyLmParams,
    pub head_grads: RegressionHeadParams,
}

/// Combined LM and head objective over one batch, with gradients for both.
pub fn joint_loss(
    lm: &TinyLmParams,
    head: &RegressionHeadParams,
    batch: &[HeadExample],
    level: HeadLevel,
    temps: TokenTemperatures<'_>,
    mse_weight: f64,
) -> Result<JointLoss> {
    let mut lm_grads = TinyLmParams::zeros(lm.dims);
    let mut head_grads = RegressionHeadParams::zeros(head.dim);
    let (nll, mse) = accumulate_joint(lm, head, batch, level, temps, mse_weight, &mut lm_grads, &mut head_grads)?;
    Ok(JointLoss {
        total: nll + mse_weight * mse,
        nll,
        mse,
        lm_grads,
        head_grads,
    })
}

#[allow(clippy::too_many_arguments)]
fn accumulate_joint(
    lm: &TinyLmParams,
    head: &RegressionHeadParams,
    batch: &[HeadExample],
    level: HeadLevel,
    temps: TokenTemperatures<'_>,
    mse_weight: f64,
    lm_grads: &mut TinyLmParams,
    head_grads: &mut RegressionHeadParams,
) -> Result<(f64, f64)> {
    check_head_matches(lm, head)?;
    let labels = labels_of(batch)?;
    let examples: Vec<DialogueExample> = batch.iter().map(|h| h.example.clone()).collect();
    let nll = accumulate_dynamic_nll(lm, &examples, temps, 1.0, lm_grads)?;
    let mut windows = Vec::new();
    let mut item_labels = Vec::new();
    for (ex, label) in batch.iter().zip(&labels) {
        for w in head_windows(ex, level, lm.dims.window) {
            windows.push(w);
            item_labels.push(*label);
        }
    }
    let states = windows
        .iter()
        .map(|w| lm.hidden_state(w))
        .collect::<Result<Vec<_>>>()?;
    let (mse, dstates) = accumulate_mse(head, &states, &item_labels, mse_weight, head_grads)?;
    for (w, ds) in windows.iter().zip(&dstates) {
        lm.accumulate_hidden_grad(w, ds, lm_grads)?;
    }
    Ok((nll, mse))
}

/// Fits the head. With `FrozenLm` the language model is untouched; with
/// `Joint` both are updated on `NLL + mse_weight * MSE`, using
/// dynamic-temperature NLL when `config.mode` asks for it (one temperature per
/// example in `temps`).
pub fn train_head(
    lm: &mut TinyLmParams,
    head: &mut RegressionHeadParams,
    data: &[HeadExample],
    config: &TrainConfig,
    level: HeadLevel,
    temps: Option<&[Temperature]>,
) -> Result<TrainLog> {
    config.validate()?;
    check_head_matches(lm, head)?;
    if data.is_empty() {
        return invalid("no labeled examples");
    }
    let labels = labels_of(data)?;
    match config.head_mode {
        HeadTrainingMode::FrozenLm => train_frozen(lm, head, data, &labels, config, level),
        HeadTrainingMode::Joint => train_joint(lm, head, data, config, level, temps),
    }
}

fn train_frozen(
    lm: &TinyLmParams,
    head: &mut RegressionHeadParams,
    data: &[HeadExample],
    labels: &[DiversityScore],
    config: &TrainConfig,
    level: HeadLevel,
) -> Result<TrainLog> {
    let mut states = Vec::new();
    let mut item_labels = Vec::new();
    for (ex, label) in data.iter().zip(labels) {
        for w in head_windows(ex, level, lm.dims.window) {
            states.push(lm.hidden_state(&w)?);
            item_labels.push(*label);
        }
    }
    if states.is_empty() {
        return invalid("token-level head training needs candidates");
    }
    let mut grads = RegressionHeadParams::zeros(head.dim);
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let order = config.epoch_order(epoch, states.len());
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| states[i].clone()).collect();
            let ys: Vec<DiversityScore> = chunk.iter().map(|&i| item_labels[i]).collect();
            grads.fill_zero();
            total += accumulate_mse(head, &xs, &ys, 1.0, &mut grads)?.0;
            batches += 1;
            head.axpy(-config.learning_rate, &grads);
        }
        log.mse.push(total / batches as f64);
    }
    Ok(log)
}

fn train_joint(
    lm: &mut TinyLmParams,
    head: &mut RegressionHeadParams,
    data: &[HeadExample],
    config: &TrainConfig,
    level: HeadLevel,
    temps: Option<&[Temperature]>,
) -> Result<TrainLog> {
    let temps = match (config.mode, temps) {
        (LossMode::Nll, _) => None,
        (LossMode::DynamicTemperature, Some(ts)) if ts.len() == data.len() => Some(ts),
        (LossMode::DynamicTemperature, _) => {
            return invalid("dynamic temperature training needs one temperature per example")
        }
    };
    let mut lm_grads = TinyLmParams::zeros(lm.dims);
    let mut head_grads = RegressionHeadParams::zeros(head.dim);
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        let order = config.epoch_order(epoch, data.len());
        let (mut nll_sum, mut mse_sum, mut batches) = (0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<HeadExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let batch_temps: Option<Vec<Temperature>> = temps.map(|ts| chunk.iter().map(|&i| ts[i]).collect());
            let tt = match &batch_temps {
                Some(ts) => TokenTemperatures::PerExample(ts),
                None => TokenTemperatures::Unit,
            };
            lm_grads.fill_zero();
            head_grads.fill_zero();
            let (nll, mse) = accumulate_joint(lm, head, &batch, level, tt, config.mse_weight, &mut lm_grads, &mut head_grads)?;
            nll_sum += nll;
            mse_sum += mse;
            batches += 1;
            lm.axpy(-config.learning_rate, &lm_grads);
            head.axpy(-config.learning_rate, &head_grads);
        }
        log.nll.push(nll_sum / batches as f64);
        log.mse.push(mse_sum / batches as f64);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Scenario;
    use crate::tinylm::LmDims;
    use crate::vocab::BOS;

    /// Straight transcription of the head formula.
    fn reference_head(h: &RegressionHeadParams, x: &[f64]) -> f64 {
        let d = h.dim;
        let mut score = h.b2;
        for j in 0..d {
            let mut z = h.b1[j];
            for i in 0..d {
                z += h.w1[i * d + j] * x[i];
            }
            score += z.tanh() * h.w2[j];
        }
        score
    }

    fn rand_vec(rng: &mut RngState, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-scale, scale)).collect()
    }

    #[test]
    fn zero_head_scores_zero() {
        let h = RegressionHeadParams::zeros(4);
        assert_eq!(head_forward(&h, &[0.3, -1.0, 2.0, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn bias_only_path() {
        let mut h = RegressionHeadParams::init(3, 1);
        h.b1 = vec![0.0; 3];
        h.b2 = 0.37;
        assert_eq!(head_forward(&h, &[0.0; 3]).unwrap(), 0.37);
    }

    #[test]
    fn matches_reference_formula() {
        let mut rng = RngState::new(2);
        for seed in 0..20 {
            let mut h = RegressionHeadParams::init(6, seed);
            h.w1 = rand_vec(&mut rng, 36, 1.5);
            h.w2 = rand_vec(&mut rng, 6, 1.5);
            let x = rand_vec(&mut rng, 6, 1.0);
            assert!((head_forward(&h, &x).unwrap() - reference_head(&h, &x)).abs() < 1e-14);
        }
        assert!(head_forward(&RegressionHeadParams::zeros(3), &[1.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        let h = RegressionHeadParams::zeros(2);
        let xs = vec![vec![0.1, 0.2], vec![-0.3, 0.4]];
        let half = vec![DiversityScore::new(0.5); 2];
        assert!((mse_loss(&h, &xs, &half).unwrap().0 - 0.25).abs() < 1e-15);
        let zero = vec![DiversityScore::new(0.0); 2];
        assert_eq!(mse_loss(&h, &xs, &zero).unwrap().0, 0.0);
        assert!(mse_loss(&h, &xs, &half[..1]).is_err());
        assert!(mse_loss(&h, &[], &[]).is_err());
    }

    fn flat(h: &RegressionHeadParams) -> Vec<f64> {
        h.w1.iter().chain(&h.b1).chain(&h.w2).copied().chain([h.b2]).collect()
    }

    fn set_flat(h: &mut RegressionHeadParams, i: usize, v: f64) {
        let (n1, n2, n3) = (h.w1.len(), h.b1.len(), h.w2.len());
        match i {
            i if i < n1 => h.w1[i] = v,
            i if i < n1 + n2 => h.b1[i - n1] = v,
            i if i < n1 + n2 + n3 => h.w2[i - n1 - n2] = v,
            _ => h.b2 = v,
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn mse_gradient_matches_central_differences() {
        let mut rng = RngState::new(3);
        let mut h = RegressionHeadParams::zeros(5);
        h.w1 = rand_vec(&mut rng, 25, 1.0);
        h.b1 = rand_vec(&mut rng, 5, 0.5);
        h.w2 = rand_vec(&mut rng, 5, 1.0);
        h.b2 = 0.1;
        let xs: Vec<Vec<f64>> = (0..7).map(|_| rand_vec(&mut rng, 5, 1.0)).collect();
        let ys: Vec<DiversityScore> = (0..7).map(|_| DiversityScore::new(rng.next_f64())).collect();
        let (_, g) = mse_loss(&h, &xs, &ys).unwrap();
        let analytic = flat(&g);
        let base = flat(&h);
        let eps = 1e-5;
        for i in 0..base.len() {
            let mut p = h.clone();
            set_flat(&mut p, i, base[i] + eps);
            let mut m = h.clone();
            set_flat(&mut m, i, base[i] - eps);
            let num = (mse_loss(&p, &xs, &ys).unwrap().0 - mse_loss(&m, &xs, &ys).unwrap().0) / (2.0 * eps);
            assert!(rel_err(num, analytic[i]) < 1e-4, "param {i}: {num} vs {}", analytic[i]);
        }
    }

    fn tiny_lm() -> TinyLmParams {
        let mut lm = TinyLmParams::init(
            LmDims {
                vocab_size: 12,
                embed_dim: 3,
                window: 3,
                hidden_dim: 4,
            },
            5,
        )
        .unwrap();
        for b in lm.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= 8.0);
        }
        lm
    }

    fn head_examples() -> Vec<HeadExample> {
        vec![
            HeadExample {
                example: DialogueExample::new(vec![BOS, 4, 5, EOS], vec![6, EOS], Scenario::Qa).unwrap(),
                candidates: vec![vec![6, EOS], vec![7, 8, EOS]],
                label: Some(DiversityScore::new(0.9)),
            },
            HeadExample {
                example: DialogueExample::new(vec![BOS, 9, EOS], vec![10, 11, EOS], Scenario::Chitchat).unwrap(),
                candidates: vec![vec![10, EOS], vec![11, EOS]],
                label: Some(DiversityScore::new(0.2)),
            },
        ]
    }

    #[test]
    fn joint_gradient_matches_central_differences() {
        let lm = tiny_lm();
        let mut head = RegressionHeadParams::init(4, 9);
        head.w1.iter_mut().for_each(|v| *v *= 10.0);
        head.w2.iter_mut().for_each(|v| *v *= 10.0);
        let data = head_examples();
        let temps = [Temperature::new(0.7).unwrap(), Temperature::new(1.6).unwrap()];
        for (level, tt) in [
            (HeadLevel::Sentence, TokenTemperatures::Unit),
            (HeadLevel::Token, TokenTemperatures::PerExample(&temps)),
        ] {
            let jl = joint_loss(&lm, &head, &data, level, tt, 1.0).unwrap();
            let objective = |lm: &TinyLmParams, head: &RegressionHeadParams| {
                joint_loss(lm, head, &data, level, tt, 1.0).unwrap().total
            };
            let eps = 1e-5;
            // head block
            let base = flat(&head);
            let analytic = flat(&jl.head_grads);
            for i in 0..base.len() {
                let mut p = head.clone();
                set_flat(&mut p, i, base[i] + eps);
                let mut m = head.clone();
                set_flat(&mut m, i, base[i] - eps);
                let num = (objective(&lm, &p) - objective(&lm, &m)) / (2.0 * eps);
                assert!(rel_err(num, analytic[i]) < 1e-4, "head param {i}");
            }
            // LM blocks, through both the NLL and the head path
            for b in 0..5 {
                let len = lm.blocks()[b].len();
                for i in 0..len {
                    let mut p = lm.clone();
                    p.blocks_mut()[b][i] += eps;
                    let mut m = lm.clone();
                    m.blocks_mut()[b][i] -= eps;
                    let num = (objective(&p, &head) - objective(&m, &head)) / (2.0 * eps);
                    let ana = jl.lm_grads.blocks()[b][i];
                    assert!(rel_err(num, ana) < 1e-4, "lm block {b} param {i}: {num} vs {ana}");
                }
            }
            // the combined gradient is the sum of the separate ones
            let (_, nll_grads) = crate::tinylm::dynamic_nll_loss(
                &lm,
                &data.iter().map(|h| h.example.clone()).collect::<Vec<_>>(),
                tt,
            )
            .unwrap();
            let head_only = joint_loss(&lm, &head, &data, level, tt, 1.0).unwrap();
            assert!((head_only.total - (head_only.nll + head_only.mse)).abs() < 1e-15);
            let mut diff = jl.lm_grads.clone();
            diff.axpy(-1.0, &nll_grads);
            assert!(diff.blocks().iter().any(|b| b.iter().any(|v| v.abs() > 0.0)));
        }
    }

    #[test]
    fn frozen_mode_leaves_lm_untouched() {
        let mut lm = tiny_lm();
        let before = lm.clone();
        let mut head = RegressionHeadParams::init(4, 1);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        for level in [HeadLevel::Sentence, HeadLevel::Token] {
            train_head(&mut lm, &mut head, &head_examples(), &cfg, level, None).unwrap();
            assert_eq!(lm, before);
        }
    }

    #[test]
    fn unlabeled_examples_rejected() {
        let mut lm = tiny_lm();
        let mut head = RegressionHeadParams::init(4, 1);
        let mut data = head_examples();
        data[1].label = None;
        assert!(train_head(&mut lm, &mut head, &data, &TrainConfig::default(), HeadLevel::Sentence, None).is_err());
    }

    #[test]
    fn joint_training_reduces_combined_loss() {
        let mut lm = tiny_lm();
        let mut head = RegressionHeadParams::init(4, 2);
        let data = head_examples();
        let before = joint_loss(&lm, &head, &data, HeadLevel::Sentence, TokenTemperatures::Unit, 1.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 2,
            head_mode: HeadTrainingMode::Joint,
            ..TrainConfig::default()
        };
        let log = train_head(&mut lm, &mut head, &data, &cfg, HeadLevel::Sentence, None).unwrap();
        assert_eq!(log.nll.len(), 60);
        assert_eq!(log.mse.len(), 60);
        let after = joint_loss(&lm, &head, &data, HeadLevel::Sentence, TokenTemperatures::Unit, 1.0).unwrap();
        assert!(after.total < before.total);
    }

    #[test]
    fn learns_linear_function_of_a_hidden_coordinate() {
        let mut rng = RngState::new(17);
        let dim = 6;
        let xs: Vec<Vec<f64>> = (0..64).map(|_| rand_vec(&mut rng, dim, 1.0)).collect();
        let ys: Vec<DiversityScore> = xs.iter().map(|x| DiversityScore::new(0.5 + 0.4 * x[2])).collect();
        let mut head = RegressionHeadParams::init(dim, 4);
        for _ in 0..500 {
            let (_, g) = mse_loss(&head, &xs, &ys).unwrap();
            head.axpy(-0.5, &g);
        }
        assert!(mse_loss(&head, &xs, &ys).unwrap().0 < 0.01);
    }

    #[test]
    fn score_clamping() {
        assert_eq!(DiversityScore::new(1.7).value(), 1.0);
        assert_eq!(DiversityScore::new(-0.2).value(), 0.0);
        assert_eq!(DiversityScore::new(0.42).value(), 0.42);
        assert_eq!(DiversityScore::new(f64::NAN).value(), 0.0);
    }

    #[test]
    fn sentence_prediction_contracts() {
        let lm = tiny_lm();
        let zero = RegressionHeadParams::zeros(4);
        assert_eq!(predict_sentence_score(&lm, &zero, &[BOS, 4, EOS]).unwrap().value(), 0.0);
        let head = RegressionHeadParams::init(4, 8);
        let a = predict_sentence_score(&lm, &head, &[BOS, 4, 5, EOS]).unwrap();
        let b = predict_sentence_score(&lm, &head, &[BOS, 4, 5, EOS]).unwrap();
        assert_eq!(a, b);
        assert!(predict_sentence_score(&lm, &head, &[]).is_err());
        assert!(predict_sentence_score(&lm, &head, &[BOS, 4]).is_err());
        assert!(predict_sentence_score(&lm, &RegressionHeadParams::zeros(3), &[BOS, 4, EOS]).is_err());
        let w = [4, 5, 6];
        assert_eq!(predict_token_score(&lm, &zero, &w).unwrap().value(), 0.0);
        assert_eq!(
            predict_token_score(&lm, &head, &w).unwrap(),
            predict_token_score(&lm, &head, &w).unwrap()
        );
    }
}
