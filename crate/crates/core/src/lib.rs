//! Discrete denoising diffusion for simple undirected graphs.
//!
//! Edges of a clean graph are corrupted by independent symmetric flips until
//! the graph is an Erdős–Rényi sample with edge probability 1/2; a denoiser
//! trained to predict the clean edges lets the chain be run backwards.

pub mod datasets;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod training;

pub use denoiser::{Denoiser, DenoiserOutput, EmpiricalDenoiser, MiniPpgn, MiniPpgnParams};
pub use error::{Error, Result};
pub use graph::{Graph, GraphBatch};
pub use schedule::{NoiseSchedule, ScheduleKind};
