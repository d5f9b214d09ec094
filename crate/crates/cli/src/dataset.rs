use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use graphdiff::datasets::{gen_dataset, DatasetKind, DatasetSpec};
use serde::Serialize;

use crate::output::{manifest_path, node_distribution, write_batch, write_json, FileRef};

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Er,
    CommunitySmall,
    #[value(name = "sbm-27")]
    Sbm27,
    #[value(name = "planar-60")]
    Planar60,
    File,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Node count for `er`.
    #[arg(long, required_if_eq("kind", "er"))]
    n: Option<usize>,
    /// Edge probability for `er`.
    #[arg(long, required_if_eq("kind", "er"))]
    p: Option<f64>,
    /// Edge-list file for `file`.
    #[arg(long, required_if_eq("kind", "file"))]
    input: Option<PathBuf>,
    /// Number of graphs; defaults to the benchmark size of the kind.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    spec: DatasetSpec,
    count: usize,
    node_counts: BTreeMap<usize, usize>,
    output: FileRef,
    input: Option<FileRef>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let kind = match args.kind {
        Kind::Er => DatasetKind::Er { n: args.n.unwrap_or_default(), p: args.p.unwrap_or_default() },
        Kind::CommunitySmall => DatasetKind::CommunitySmall,
        Kind::Sbm27 => DatasetKind::Sbm27,
        Kind::Planar60 => DatasetKind::Planar60,
        Kind::File => DatasetKind::File { path: args.input.clone().unwrap_or_default() },
    };
    let spec = DatasetSpec { kind, count: args.count, seed: args.seed };
    let batch = gen_dataset(&spec)?;
    write_batch(&args.out, &batch)?;
    let manifest = Manifest {
        command: "dataset",
        version: env!("CARGO_PKG_VERSION"),
        count: batch.len(),
        node_counts: node_distribution(&batch.node_counts()),
        output: FileRef::of(&args.out)?,
        input: args.input.as_deref().map(FileRef::of).transpose()?,
        spec,
    };
    write_json(&manifest_path(&args.out), &manifest)?;
    eprintln!("wrote {} graphs to {}", batch.len(), args.out.display());
    Ok(())
}
