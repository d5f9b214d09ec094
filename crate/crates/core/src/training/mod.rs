//! Training objectives and the optimisation loop.
//!
//! Two objectives are provided, both as single-timestep Monte Carlo estimates
//! with `t` drawn uniformly from `1..=T`:
//!
//! * `vb`: the variational bound. For `t >= 2` the term is the summed per-pair
//!   KL divergence between the exact posterior `q(A_{t-1} | A_t, A_0)` and the
//!   model's reverse step; for `t = 1` it is the negative log-likelihood of
//!   the clean graph. The draw is scaled by `T` so its expectation is the full
//!   sum over steps.
//! * `simple`: the per-pair cross-entropy of the clean graph under the model,
//!   weighted by `1 - 2 beta_bar_t + 1/T`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserOutput, MiniPpgn, MiniPpgnParams};
use crate::diffusion::{noise_graph, EdgePosterior};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};
use crate::rng::stream;
use crate::schedule::{NoiseSchedule, ScheduleKind};

/// Floor for probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;
/// Floor for the model's reverse-step probability in KL denominators.
pub const KL_CLAMP: f64 = 1e-6;
/// Batch losses above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Vb,
    Simple,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Vb => "vb",
            LossKind::Simple => "simple",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vb" => Ok(LossKind::Vb),
            "simple" => Ok(LossKind::Simple),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss {other:?} (expected vb or simple)"
            ))),
        }
    }
}

/// `KL(Bernoulli(q1) || Bernoulli(p1))` in nats, with `0 ln 0 = 0`.
pub fn bernoulli_kl(q1: f64, p1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q1) || !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidArgument(format!(
            "probabilities ({q1}, {p1}) outside [0, 1]"
        )));
    }
    let term = |a: f64, b: f64| -> Result<f64> {
        if a == 0.0 {
            Ok(0.0)
        } else if b == 0.0 {
            Err(Error::Overflow(format!(
                "KL(Ber({q1}) || Ber({p1})) is infinite"
            )))
        } else {
            Ok(a * (a / b).ln())
        }
    };
    Ok(term(q1, p1)? + term(1.0 - q1, 1.0 - p1)?)
}

/// Weight of step `t` in the simple objective, `1 - 2 beta_bar_t + 1/T`.
pub fn simple_weight(schedule: &NoiseSchedule, t: usize) -> f64 {
    1.0 - 2.0 * schedule.beta_bar(t) + 1.0 / schedule.steps() as f64
}

/// Summed per-pair cross-entropy of `g0` under `probs`, clamped to
/// `[LOG_CLAMP, 1 - LOG_CLAMP]`.
pub fn cross_entropy(probs: &[f64], g0: &Graph) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let p = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
            if g0.has_pair(k) {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// One evaluated loss draw.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSample {
    pub t: usize,
    pub loss: f64,
    /// Gradient of `loss` with respect to the denoiser's logits.
    pub grad_logits: Vec<f64>,
    /// `KL(q(A_T | A_0) || Bernoulli(1/2))`, reported but not optimised.
    pub prior_term: f64,
}

/// `sum_pairs KL(q(A_T | A_0) || Bernoulli(1/2))`.
pub fn prior_term(schedule: &NoiseSchedule, g0: &Graph) -> Result<f64> {
    let b = schedule.beta_bar(schedule.steps());
    let per_pair = bernoulli_kl(1.0 - b, 0.5)?;
    // Symmetric in the clean state: KL(Ber(1-b)||1/2) == KL(Ber(b)||1/2).
    Ok(per_pair * g0.pair_count() as f64)
}

/// Negative log-likelihood term and its logit gradient.
fn nll_terms(out: &DenoiserOutput, g0: &Graph, scale: f64) -> (f64, Vec<f64>) {
    let loss = scale * cross_entropy(&out.probs, g0);
    let grad = out
        .probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if !(LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) {
                0.0
            } else {
                scale * (p - if g0.has_pair(k) { 1.0 } else { 0.0 })
            }
        })
        .collect();
    (loss, grad)
}

/// Unscaled bound term at step `t` for a given noisy graph: the summed KL for
/// `t >= 2`, the negative log-likelihood for `t = 1`.
pub fn vb_term(
    schedule: &NoiseSchedule,
    out: &DenoiserOutput,
    g0: &Graph,
    a_t: &Graph,
    t: usize,
) -> Result<(f64, Vec<f64>)> {
    if t == 1 {
        return Ok(nll_terms(out, g0, 1.0));
    }
    let post = EdgePosterior::at(schedule, t)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(out.len());
    for (k, &p0) in out.probs.iter().enumerate() {
        let (at, a0) = (a_t.has_pair(k), g0.has_pair(k));
        let q = post.get(at, a0);
        let raw = post.mix(at, p0);
        let p = raw.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
        loss += bernoulli_kl(q, p)?;
        let g = if raw != p {
            0.0
        } else {
            let d_kl_dp = -q / p + (1.0 - q) / (1.0 - p);
            let dp_dp0 = post.get(at, true) - post.get(at, false);
            d_kl_dp * dp_dp0 * p0 * (1.0 - p0)
        };
        grad.push(g);
    }
    Ok((loss, grad))
}

/// Evaluates one objective at a fixed step and noisy graph.
pub fn loss_at<D: Denoiser + ?Sized>(
    kind: LossKind,
    denoiser: &D,
    g0: &Graph,
    a_t: &Graph,
    t: usize,
) -> Result<LossSample> {
    let schedule = denoiser.schedule();
    let out = denoiser.predict(a_t, t)?;
    sample_from_output(kind, schedule, &out, g0, a_t, t)
}

fn sample_from_output(
    kind: LossKind,
    schedule: &NoiseSchedule,
    out: &DenoiserOutput,
    g0: &Graph,
    a_t: &Graph,
    t: usize,
) -> Result<LossSample> {
    let (loss, grad_logits) = match kind {
        LossKind::Simple => nll_terms(out, g0, simple_weight(schedule, t)),
        LossKind::Vb => {
            let scale = schedule.steps() as f64;
            let (l, g) = vb_term(schedule, out, g0, a_t, t)?;
            (scale * l, g.into_iter().map(|x| scale * x).collect())
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: format!("{kind} loss at t={t}"),
        });
    }
    Ok(LossSample {
        t,
        loss,
        grad_logits,
        prior_term: prior_term(schedule, g0)?,
    })
}

/// Draws `t ~ U{1..T}` and `A_t ~ q(. | g0)`.
pub fn draw_step<R: Rng + ?Sized>(schedule: &NoiseSchedule, g0: &Graph, rng: &mut R) -> Result<(usize, Graph)> {
    let t = rng.random_range(1..=schedule.steps());
    let a_t = noise_graph(g0, schedule, t, rng)?;
    Ok((t, a_t))
}

pub fn loss_vb<D: Denoiser + ?Sized, R: Rng + ?Sized>(denoiser: &D, g0: &Graph, rng: &mut R) -> Result<LossSample> {
    let (t, a_t) = draw_step(denoiser.schedule(), g0, rng)?;
    loss_at(LossKind::Vb, denoiser, g0, &a_t, t)
}

pub fn loss_simple<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    g0: &Graph,
    rng: &mut R,
) -> Result<LossSample> {
    let (t, a_t) = draw_step(denoiser.schedule(), g0, rng)?;
    loss_at(LossKind::Simple, denoiser, g0, &a_t, t)
}

/// Loss and parameter gradient of a MiniPPGN at a fixed step and noisy graph.
pub fn model_loss_and_grad(
    kind: LossKind,
    model: &MiniPpgn,
    g0: &Graph,
    a_t: &Graph,
    t: usize,
) -> Result<(f64, Vec<f64>)> {
    model.schedule.check_step(t, 1)?;
    let (out, trace) = model
        .params
        .forward_traced(a_t, model.schedule.beta_bar(t))?;
    let sample = sample_from_output(kind, &model.schedule, &out, g0, a_t, t)?;
    let grads = model.params.backward(&trace, &sample.grad_logits)?;
    Ok((sample.loss, grads))
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub depth: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Simple,
            steps: 32,
            schedule: ScheduleKind::Linear,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay: 0.999,
            depth: 6,
            hidden: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.steps == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("steps, epochs and batch size must be positive");
        }
        if self.depth == 0 || self.hidden == 0 {
            return bad("depth and hidden width must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning-rate decay must lie in (0, 1]");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam epsilon must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule, self.steps)
    }
}

/// Model parameters, optimiser moments and the position in the run.
///
/// Randomness is derived from `(seed, epoch, position)`, so the seed and the
/// number of completed epochs fully determine the remaining RNG streams.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: MiniPpgnParams,
    pub schedule: NoiseSchedule,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Optimiser steps taken.
    pub step: u64,
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    pub best_params: MiniPpgnParams,
    pub best_loss: f64,
    pub best_epoch: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let schedule = config.schedule()?;
        let params = MiniPpgnParams::init(config.depth, config.hidden, &mut stream(config.seed, "init", 0))?;
        let len = params.len();
        Ok(TrainState {
            best_params: params.clone(),
            params,
            schedule,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            epoch: 0,
            seed: config.seed,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        })
    }

    pub fn model(&self) -> MiniPpgn {
        MiniPpgn::new(self.params.clone(), self.schedule.clone())
    }

    /// The parameters with the lowest epoch-mean training loss seen so far.
    pub fn best_model(&self) -> MiniPpgn {
        MiniPpgn::new(self.best_params.clone(), self.schedule.clone())
    }

    fn adam_update(&mut self, grads: &[f64], lr: f64, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, m), v), &g) in self
            .params
            .values_mut()
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
            .zip(grads)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + config.adam_eps);
        }
    }
}

/// One row of the loss trace (`epoch,step,loss,t_mean`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub t_mean: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "epoch,step,loss,t_mean";

    pub fn to_csv(&self) -> String {
        format!("{},{},{:?},{:?}", self.epoch, self.step, self.loss, self.t_mean)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub state: TrainState,
    pub trace: Vec<TraceRow>,
    pub epochs: Vec<EpochSummary>,
}

/// Trains a fresh MiniPPGN.
pub fn train(config: &TrainConfig, dataset: &GraphBatch) -> Result<TrainRun> {
    train_from(config, dataset, TrainState::new(config)?, |_, _, _| Ok(()))
}

/// Continues training from `state` until `config.epochs` epochs are complete,
/// calling `on_epoch` with the epoch's summary, its trace rows and the state
/// after every epoch (e.g. to append to a trace file and write checkpoints).
pub fn train_from<F>(config: &TrainConfig, dataset: &GraphBatch, mut state: TrainState, mut on_epoch: F) -> Result<TrainRun>
where
    F: FnMut(&EpochSummary, &[TraceRow], &TrainState) -> Result<()>,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if state.schedule.steps() != config.steps {
        return Err(Error::ScheduleMismatch(format!(
            "state has T = {}, config has T = {}",
            state.schedule.steps(),
            config.steps
        )));
    }
    if (state.params.depth(), state.params.hidden()) != (config.depth, config.hidden) {
        return Err(Error::InvalidArgument(
            "state and config disagree on the network shape".into(),
        ));
    }
    let graphs = dataset.graphs();
    let mut trace = Vec::new();
    let mut epochs = Vec::new();
    let mut last_good = state.clone();

    while state.epoch < config.epochs {
        let epoch = state.epoch + 1;
        let lr = config.learning_rate * config.lr_decay.powi(state.epoch as i32);
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut stream(state.seed, "shuffle", epoch as u64));

        let mut epoch_loss = 0.0;
        let first_row = trace.len();
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let model = state.model();
            let base = (epoch as u64) * graphs.len() as u64 + (batch_idx * config.batch_size) as u64;
            let results: Vec<Result<(f64, usize, Vec<f64>)>> = batch
                .par_iter()
                .enumerate()
                .map(|(pos, &gi)| {
                    let mut rng = stream(state.seed, "train-sample", base + pos as u64);
                    let (t, a_t) = draw_step(&model.schedule, &graphs[gi], &mut rng)?;
                    let (loss, grads) = model_loss_and_grad(config.loss, &model, &graphs[gi], &a_t, t)?;
                    Ok((loss, t, grads))
                })
                .collect();

            let mut grads = vec![0.0; state.params.len()];
            let (mut loss_sum, mut t_sum) = (0.0, 0usize);
            for r in results {
                let (loss, t, g) = match r {
                    Ok(v) => v,
                    Err(Error::NonFinite { .. }) => (f64::NAN, 0, Vec::new()),
                    Err(e) => return Err(e),
                };
                loss_sum += loss;
                t_sum += t;
                for (acc, x) in grads.iter_mut().zip(&g) {
                    *acc += x;
                }
            }
            let count = batch.len() as f64;
            let batch_loss = loss_sum / count;
            if !batch_loss.is_finite() || batch_loss > DIVERGENCE_THRESHOLD {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                    last_good: Box::new(last_good),
                });
            }
            grads.iter_mut().for_each(|g| *g /= count);
            state.adam_update(&grads, lr, config);
            epoch_loss += loss_sum;
            trace.push(TraceRow {
                epoch,
                step: state.step,
                loss: batch_loss,
                t_mean: t_sum as f64 / count,
            });
        }

        state.epoch = epoch;
        let mean_loss = epoch_loss / graphs.len() as f64;
        let improved = mean_loss < state.best_loss;
        if improved {
            state.best_loss = mean_loss;
            state.best_epoch = epoch;
            state.best_params = state.params.clone();
        }
        let summary = EpochSummary {
            epoch,
            mean_loss,
            learning_rate: lr,
            improved,
        };
        on_epoch(&summary, &trace[first_row..], &state)?;
        epochs.push(summary);
        last_good = state.clone();
    }
    Ok(TrainRun {
        state,
        trace,
        epochs,
    })
}

/// Mean per-pair cross-entropy of `denoiser` over every graph of `dataset`
/// and every step in `steps`, with `samples` noise draws per (graph, step).
pub fn mean_pair_cross_entropy<D, I>(
    denoiser: &D,
    dataset: &GraphBatch,
    steps: I,
    samples: usize,
    seed: u64,
) -> Result<f64>
where
    D: Denoiser + ?Sized,
    I: IntoIterator<Item = usize> + Clone,
{
    let schedule = denoiser.schedule();
    let mut total = 0.0;
    let mut count = 0usize;
    for (gi, g0) in dataset.iter().enumerate() {
        let mut rng = stream(seed, "eval-ce", gi as u64);
        for t in steps.clone() {
            schedule.check_step(t, 1)?;
            for _ in 0..samples {
                let a_t = noise_graph(g0, schedule, t, &mut rng)?;
                let out = denoiser.predict(&a_t, t)?;
                total += cross_entropy(&out.probs, g0);
                count += g0.pair_count();
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
