//! Noise schedules for the binary edge-flip chain.
//!
//! A schedule is specified by the cumulative flip probabilities
//! `beta_bar[0..=T]` (probability that an edge differs from its clean state
//! after `t` steps). The per-step flip probabilities `beta[1..=T]` are derived
//! from consecutive cumulative values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
    Custom,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Custom => "custom",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule {other:?} (expected linear or cosine)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    beta_bar: Vec<f64>,
    // beta[0] is a placeholder so that beta[t] is the flip probability of step t.
    beta: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        match kind {
            ScheduleKind::Linear => Self::linear(steps),
            ScheduleKind::Cosine => Self::cosine(steps),
            ScheduleKind::Custom => Err(Error::InvalidArgument(
                "custom schedules are built from explicit values".into(),
            )),
        }
    }

    /// `beta_bar[t] = t / (2T)`.
    pub fn linear(steps: usize) -> Result<Self> {
        check_steps(steps)?;
        let beta_bar = (0..=steps)
            .map(|t| 0.5 * t as f64 / steps as f64)
            .collect();
        Self::build(ScheduleKind::Linear, beta_bar, true)
    }

    /// `beta_bar[t] = (1 - cos^2(pi t / 2T)) / 2`, endpoints pinned to 0 and 1/2.
    pub fn cosine(steps: usize) -> Result<Self> {
        check_steps(steps)?;
        let mut beta_bar: Vec<f64> = (0..=steps)
            .map(|t| {
                let c = (std::f64::consts::FRAC_PI_2 * t as f64 / steps as f64).cos();
                0.5 * (1.0 - c * c)
            })
            .collect();
        beta_bar[0] = 0.0;
        beta_bar[steps] = 0.5;
        Self::build(ScheduleKind::Cosine, beta_bar, true)
    }

    /// A schedule from explicit cumulative values. Requires `beta_bar[0] = 0`,
    /// `beta_bar[T] = 1/2` and strict monotonicity.
    pub fn from_beta_bar(beta_bar: Vec<f64>) -> Result<Self> {
        Self::build(ScheduleKind::Custom, beta_bar, true)
    }

    /// Like [`from_beta_bar`](Self::from_beta_bar) but only requires
    /// `beta_bar[0] = 0` and a non-decreasing sequence in `[0, 1/2]`.
    /// Such chains need not reach pure noise; they are useful for analysis.
    pub fn relaxed(beta_bar: Vec<f64>) -> Result<Self> {
        Self::build(ScheduleKind::Custom, beta_bar, false)
    }

    fn build(kind: ScheduleKind, beta_bar: Vec<f64>, strict: bool) -> Result<Self> {
        if beta_bar.len() < 2 {
            return Err(Error::InvalidArgument(
                "a schedule needs at least one step".into(),
            ));
        }
        if beta_bar[0] != 0.0 {
            return Err(Error::InvalidArgument("beta_bar[0] must be 0".into()));
        }
        if let Some(t) = beta_bar
            .iter()
            .position(|b| !b.is_finite() || !(0.0..=0.5).contains(b))
        {
            return Err(Error::InvalidArgument(format!(
                "beta_bar[{t}] = {} outside [0, 1/2]",
                beta_bar[t]
            )));
        }
        for t in 1..beta_bar.len() {
            let ok = if strict {
                beta_bar[t] > beta_bar[t - 1]
            } else {
                beta_bar[t] >= beta_bar[t - 1]
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "beta_bar is not {} at step {t}",
                    if strict { "strictly increasing" } else { "non-decreasing" }
                )));
            }
        }
        if strict && *beta_bar.last().unwrap() != 0.5 {
            return Err(Error::InvalidArgument(
                "beta_bar[T] must be 1/2 (pure noise)".into(),
            ));
        }
        let mut beta = vec![0.0];
        beta.extend(beta_from_beta_bar(&beta_bar)?);
        Ok(NoiseSchedule {
            kind,
            beta_bar,
            beta,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta_bar.len() - 1
    }

    /// Cumulative flip probability after `t` steps, `0 <= t <= T`.
    pub fn beta_bar(&self, t: usize) -> f64 {
        self.beta_bar[t]
    }

    /// Single-step flip probability of step `t`, `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1, "step 0 has no transition");
        self.beta[t]
    }

    pub fn beta_bar_values(&self) -> &[f64] {
        &self.beta_bar
    }

    /// `beta_1..beta_T`.
    pub fn beta_values(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub(crate) fn check_step(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.steps() {
            return Err(Error::StepOutOfRange {
                t,
                min,
                max: self.steps(),
            });
        }
        Ok(())
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step count must be at least 1".into()));
    }
    Ok(())
}

/// Per-step flip probabilities from cumulative ones:
/// `beta_t = (beta_bar[t-1] - beta_bar[t]) / (2 beta_bar[t-1] - 1)`.
///
/// Returns `beta_bar.len() - 1` values. Only the last cumulative value may be
/// exactly 1/2; an earlier one makes the following step undefined.
pub fn beta_from_beta_bar(beta_bar: &[f64]) -> Result<Vec<f64>> {
    beta_bar
        .windows(2)
        .enumerate()
        .map(|(idx, w)| {
            let (prev, cur) = (w[0], w[1]);
            let denom = 2.0 * prev - 1.0;
            if denom == 0.0 {
                return Err(Error::SingularStep { t: idx });
            }
            Ok((prev - cur) / denom)
        })
        .collect()
}

/// Cumulative flip probabilities from per-step ones via the product form
/// `beta_bar[t] = 1/2 - 1/2 prod_{i<=t} (1 - 2 beta_i)`. Returns `T + 1` values.
pub fn beta_bar_from_beta(beta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(beta.len() + 1);
    let mut prod = 1.0;
    out.push(0.0);
    for b in beta {
        prod *= 1.0 - 2.0 * b;
        out.push(0.5 - 0.5 * prod);
    }
    out
}
