//! Denoisers predict, for every pair, the probability that the clean graph
//! contains the edge given a noisy graph at step `t`.

mod empirical;
mod ppgn;

pub use empirical::EmpiricalDenoiser;
pub use ppgn::{
    mini_ppgn_backward, mini_ppgn_forward, ForwardTrace, MiniPpgn, MiniPpgnParams, TensorSpec,
};

use crate::error::Result;
use crate::graph::Graph;
use crate::schedule::NoiseSchedule;

/// Per-pair predictions, in row-major pair order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserOutput {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
}

impl DenoiserOutput {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = logits.iter().map(|&l| sigmoid(l)).collect();
        DenoiserOutput { probs, logits }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub trait Denoiser: Sync {
    /// The schedule whose noise levels the denoiser was built for.
    fn schedule(&self) -> &NoiseSchedule;

    /// `p(A_0^{ij} = 1 | A_t = a_t)` for every pair.
    fn predict(&self, a_t: &Graph, t: usize) -> Result<DenoiserOutput>;
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
