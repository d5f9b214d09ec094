use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::ValueEnum;
use graphdiff::sampling::{first_trajectory, sample, Algorithm, NodeCount, SampleConfig};
use graphdiff::training::load_checkpoint;
use graphdiff::{Denoiser, EmpiricalDenoiser, GraphBatch, NoiseSchedule, ScheduleKind};
use serde::Serialize;

use crate::output::{manifest_path, node_distribution, read_batch, write_batch, write_json, FileRef};

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Weights {
    /// Parameters with the lowest epoch-mean training loss.
    Best,
    /// Parameters after the last epoch.
    Final,
}

#[derive(clap::Args)]
#[command(group(clap::ArgGroup::new("model").required(true).args(["checkpoint", "oracle"])))]
pub struct Args {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use the exact posterior-mean denoiser of this dataset instead of a model.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Fixed node count of every sample.
    #[arg(long, conflicts_with = "node_data")]
    nodes: Option<usize>,
    /// Draw node counts uniformly from the graphs of this file.
    #[arg(long)]
    node_data: Option<PathBuf>,
    /// Chain length; defaults to the checkpoint's, or 32 for the oracle.
    #[arg(long)]
    steps: Option<usize>,
    /// Schedule; defaults to the checkpoint's, or linear for the oracle.
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long, value_enum, default_value_t = Weights::Final)]
    weights: Weights,
    #[arg(long)]
    out: PathBuf,
    /// Also write the states A_T, ..., A_0 of the first sample to this file.
    #[arg(long)]
    dump_trajectory: Option<PathBuf>,
}

#[derive(Serialize)]
struct Source {
    kind: &'static str,
    file: FileRef,
    weights: Option<Weights>,
}

/// Node-count policy as recorded in the manifest.
#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum NodePolicy {
    Fixed(usize),
    /// Node count -> number of source graphs with it.
    Empirical(BTreeMap<usize, usize>),
}

impl From<&NodeCount> for NodePolicy {
    fn from(nodes: &NodeCount) -> Self {
        match nodes {
            NodeCount::Fixed(n) => NodePolicy::Fixed(*n),
            NodeCount::Empirical(v) => NodePolicy::Empirical(node_distribution(v)),
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    source: Source,
    algorithm: Algorithm,
    seed: u64,
    steps: usize,
    schedule: ScheduleKind,
    nodes: NodePolicy,
    count: usize,
    node_counts: BTreeMap<usize, usize>,
    output: FileRef,
    trajectory: Option<FileRef>,
}

fn load_denoiser(args: &Args) -> anyhow::Result<(Box<dyn Denoiser>, Source, Option<GraphBatch>)> {
    if let Some(path) = &args.checkpoint {
        let state = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        let model = match args.weights {
            Weights::Best => state.best_model(),
            Weights::Final => state.model(),
        };
        let source = Source { kind: "checkpoint", file: FileRef::of(path)?, weights: Some(args.weights) };
        return Ok((Box::new(model), source, None));
    }
    let path = args.oracle.as_ref().expect("clap requires one source");
    let data = read_batch(path)?;
    let schedule = NoiseSchedule::new(args.schedule.unwrap_or(ScheduleKind::Linear), args.steps.unwrap_or(32))?;
    let oracle = EmpiricalDenoiser::new(data.clone(), schedule)?;
    let source = Source { kind: "oracle", file: FileRef::of(path)?, weights: None };
    Ok((Box::new(oracle), source, Some(data)))
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let (denoiser, source, oracle_data) = load_denoiser(&args)?;
    let schedule = denoiser.schedule();
    let nodes = match (&args.nodes, &args.node_data, &oracle_data) {
        (Some(n), _, _) => NodeCount::Fixed(*n),
        (None, Some(path), _) => NodeCount::from_dataset(&read_batch(path)?),
        (None, None, Some(data)) => NodeCount::from_dataset(data),
        (None, None, None) => anyhow::bail!("sampling from a checkpoint needs --nodes or --node-data"),
    };
    let config = SampleConfig {
        count: args.count,
        nodes,
        steps: args.steps.unwrap_or(schedule.steps()),
        schedule: args.schedule.unwrap_or(schedule.kind()),
        seed: args.seed,
    };
    let batch = sample(denoiser.as_ref(), args.algorithm, &config)?;
    write_batch(&args.out, &batch)?;

    let trajectory = match &args.dump_trajectory {
        Some(path) => {
            let states = first_trajectory(denoiser.as_ref(), args.algorithm, &config)?;
            write_batch(path, &GraphBatch::new(states))?;
            Some(FileRef::of(path)?)
        }
        None => None,
    };
    let manifest = Manifest {
        command: "sample",
        version: env!("CARGO_PKG_VERSION"),
        source,
        algorithm: args.algorithm,
        seed: config.seed,
        steps: config.steps,
        schedule: config.schedule,
        count: batch.len(),
        node_counts: node_distribution(&batch.node_counts()),
        nodes: NodePolicy::from(&config.nodes),
        output: FileRef::of(&args.out)?,
        trajectory,
    };
    write_json(&manifest_path(&args.out), &manifest)?;
    eprintln!("wrote {} graphs to {}", batch.len(), args.out.display());
    Ok(())
}
