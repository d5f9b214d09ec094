//! Reverse-chain samplers.
//!
//! [`Algorithm::Vb`] mixes the exact one-step posterior with the denoiser's
//! clean-edge probabilities; [`Algorithm::Simple`] draws a clean graph at each
//! step and renoises it to level `t - 1`. Both finish by sampling `A_0` from the
//! denoiser at `t = 1`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::diffusion::{flip_pairs, sample_pairs, EdgePosterior};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};
use crate::rng::stream;
use crate::schedule::{NoiseSchedule, ScheduleKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Vb,
    Simple,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vb => "vb",
            Algorithm::Simple => "simple",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vb" => Ok(Algorithm::Vb),
            "simple" => Ok(Algorithm::Simple),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sampling algorithm {s:?} (expected vb or simple)"
            ))),
        }
    }
}

/// How the node count of each generated graph is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeCount {
    Fixed(usize),
    /// Drawn uniformly from these values, typically the training set's node counts.
    Empirical(Vec<usize>),
}

impl NodeCount {
    pub fn from_dataset(dataset: &GraphBatch) -> Self {
        NodeCount::Empirical(dataset.node_counts())
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            NodeCount::Fixed(n) => *n >= 1,
            NodeCount::Empirical(v) => !v.is_empty() && v.iter().all(|&n| n >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("node-count policy has no valid node count".into()))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            NodeCount::Fixed(n) => *n,
            NodeCount::Empirical(v) => v[rng.random_range(0..v.len())],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub count: usize,
    pub nodes: NodeCount,
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub seed: u64,
}

impl SampleConfig {
    /// Checks the config against the denoiser's chain.
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        self.nodes.validate()?;
        if self.steps != schedule.steps() || self.schedule != schedule.kind() {
            return Err(Error::ScheduleMismatch(format!(
                "sampler configured for {} steps ({}), denoiser uses {} steps ({})",
                self.steps,
                self.schedule,
                schedule.steps(),
                schedule.kind()
            )));
        }
        Ok(())
    }
}

/// Pure-noise graph: every pair present with probability 1/2.
pub fn sample_prior<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Graph {
    Graph::from_pair_fn(n, |_| rng.random::<bool>())
}

/// Runs one reverse chain and returns the states `A_T, A_{T-1}, ..., A_0`.
pub fn reverse_trajectory<D, R>(
    denoiser: &D,
    algorithm: Algorithm,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Graph>>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let mut states = Vec::with_capacity(denoiser.schedule().steps() + 1);
    reverse_chain(denoiser, algorithm, n, rng, Some(&mut states))?;
    Ok(states)
}

/// Runs one reverse chain from a fresh prior sample and returns `A_0`.
pub fn sample_one<D, R>(denoiser: &D, algorithm: Algorithm, n: usize, rng: &mut R) -> Result<Graph>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    reverse_chain(denoiser, algorithm, n, rng, None)
}

fn reverse_chain<D, R>(
    denoiser: &D,
    algorithm: Algorithm,
    n: usize,
    rng: &mut R,
    mut states: Option<&mut Vec<Graph>>,
) -> Result<Graph>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let schedule = denoiser.schedule();
    let mut a = sample_prior(n, rng);
    for t in (2..=schedule.steps()).rev() {
        if let Some(s) = states.as_deref_mut() {
            s.push(a.clone());
        }
        let out = denoiser.predict(&a, t)?;
        a = match algorithm {
            Algorithm::Vb => {
                let post = EdgePosterior::at(schedule, t)?;
                Graph::from_pair_fn(n, |k| rng.random::<f64>() < post.mix(a.has_pair(k), out.probs[k]))
            }
            Algorithm::Simple => {
                let clean = sample_pairs(n, &out.probs, rng);
                flip_pairs(&clean, schedule.beta_bar(t - 1), rng)
            }
        };
    }
    if let Some(s) = states.as_deref_mut() {
        s.push(a.clone());
    }
    let out = denoiser.predict(&a, 1)?;
    let g = sample_pairs(n, &out.probs, rng);
    if let Some(s) = states {
        s.push(g.clone());
    }
    Ok(g)
}

/// Generates `config.count` graphs. Graph `i` uses its own stream derived from
/// `(seed, "sample", i)`, so the output does not depend on thread count.
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    algorithm: Algorithm,
    config: &SampleConfig,
) -> Result<GraphBatch> {
    config.validate(denoiser.schedule())?;
    let graphs = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, "sample", i as u64);
            let n = config.nodes.draw(&mut rng);
            sample_one(denoiser, algorithm, n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphBatch::new(graphs))
}

/// Algorithm 1 sampling, paired with the variational loss.
pub fn sample_vb<D: Denoiser + ?Sized>(denoiser: &D, config: &SampleConfig) -> Result<GraphBatch> {
    sample(denoiser, Algorithm::Vb, config)
}

/// Algorithm 2 sampling, paired with the simple loss.
pub fn sample_simple<D: Denoiser + ?Sized>(denoiser: &D, config: &SampleConfig) -> Result<GraphBatch> {
    sample(denoiser, Algorithm::Simple, config)
}

/// Trajectory of the first graph `sample` would produce for `config`.
pub fn first_trajectory<D: Denoiser + ?Sized>(
    denoiser: &D,
    algorithm: Algorithm,
    config: &SampleConfig,
) -> Result<Vec<Graph>> {
    config.validate(denoiser.schedule())?;
    let mut rng = stream(config.seed, "sample", 0);
    let n = config.nodes.draw(&mut rng);
    reverse_trajectory(denoiser, algorithm, n, &mut rng)
}
