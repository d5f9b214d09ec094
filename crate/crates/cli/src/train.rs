use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use graphdiff::training::{load_checkpoint, save_checkpoint, train_from, LossKind, TrainConfig, TrainState, TraceRow};
use graphdiff::{Error, ScheduleKind};
use serde::Serialize;

use crate::output::{read_batch, read_toml, write_json, FileRef};

#[derive(clap::Args)]
pub struct Args {
    /// Training graphs (edge-list file).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    /// TOML file with any `TrainConfig` fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Write `epoch-NNNNN.ckpt` every this many epochs (0 disables).
    #[arg(long, default_value_t = 10)]
    checkpoint_every: usize,
    /// Continue from a checkpoint written by an earlier run into the same `--out-dir`.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    config: TrainConfig,
    data: FileRef,
    graphs: usize,
    resumed_from: Option<FileRef>,
    epochs_completed: usize,
    optimizer_steps: u64,
    best_epoch: usize,
    best_loss: f64,
    trace: FileRef,
    checkpoint: FileRef,
    periodic_checkpoints: Vec<PathBuf>,
}

fn resolve_config(args: &Args) -> anyhow::Result<TrainConfig> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => read_toml(path)?,
        None => TrainConfig::default(),
    };
    config.seed = args.seed;
    if let Some(v) = args.loss {
        config.loss = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.schedule {
        config.schedule = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.depth {
        config.depth = v;
    }
    if let Some(v) = args.hidden {
        config.hidden = v;
    }
    config.validate()?;
    Ok(config)
}

/// Keeps the header and the rows of epochs `1..=epoch` of an existing trace.
fn truncate_trace(path: &Path, epoch: usize) -> anyhow::Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("resuming needs the earlier trace {}", path.display()))?;
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some(TraceRow::CSV_HEADER), "{} is not a loss trace", path.display());
    let mut kept = format!("{}\n", TraceRow::CSV_HEADER);
    let mut last = 0;
    for line in lines {
        let row_epoch: usize = line
            .split(',')
            .next()
            .and_then(|f| f.parse().ok())
            .with_context(|| format!("malformed trace row {line:?} in {}", path.display()))?;
        if row_epoch <= epoch {
            last = row_epoch;
            kept.push_str(line);
            kept.push('\n');
        }
    }
    anyhow::ensure!(last == epoch, "{} stops at epoch {last}, checkpoint is at epoch {epoch}", path.display());
    Ok(kept)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config = resolve_config(&args)?;
    let dataset = read_batch(&args.data)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let trace_path = args.out_dir.join("trace.csv");

    let (state, trace_prefix) = match &args.resume {
        Some(path) => {
            let state = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            anyhow::ensure!(
                state.seed == config.seed,
                "checkpoint was trained with seed {}, --seed is {}",
                state.seed,
                config.seed
            );
            let prefix = truncate_trace(&trace_path, state.epoch)?;
            (state, prefix)
        }
        None => (TrainState::new(&config)?, format!("{}\n", TraceRow::CSV_HEADER)),
    };
    fs::write(&trace_path, trace_prefix).with_context(|| format!("writing {}", trace_path.display()))?;
    let mut trace_file: File = OpenOptions::new().append(true).open(&trace_path)?;

    let mut periodic = Vec::new();
    let result = train_from(&config, &dataset, state, |summary, rows, state| {
        let mut chunk = String::new();
        for row in rows {
            chunk.push_str(&row.to_csv());
            chunk.push('\n');
        }
        trace_file
            .write_all(chunk.as_bytes())
            .and_then(|_| trace_file.flush())
            .map_err(|e| Error::Io { path: trace_path.clone(), source: e })?;
        if args.checkpoint_every > 0 && summary.epoch % args.checkpoint_every == 0 {
            let path = args.out_dir.join(format!("epoch-{:05}.ckpt", summary.epoch));
            save_checkpoint(state, &path)?;
            periodic.push(path);
        }
        eprintln!(
            "epoch {:>5}  loss {:.6}  lr {:.3e}{}",
            summary.epoch,
            summary.mean_loss,
            summary.learning_rate,
            if summary.improved { "  *" } else { "" }
        );
        Ok(())
    });
    let run = match result {
        Ok(run) => run,
        Err(Error::Diverged { epoch, loss, last_good }) => {
            let path = args.out_dir.join("last-good.ckpt");
            save_checkpoint(&last_good, &path)?;
            anyhow::bail!(
                "training diverged at epoch {epoch} (loss {loss}); state after epoch {} saved to {}",
                last_good.epoch,
                path.display()
            );
        }
        Err(e) => return Err(e.into()),
    };

    let final_path = args.out_dir.join("final.ckpt");
    save_checkpoint(&run.state, &final_path)?;
    let manifest = Manifest {
        command: "train",
        version: env!("CARGO_PKG_VERSION"),
        data: FileRef::of(&args.data)?,
        graphs: dataset.len(),
        resumed_from: args.resume.as_deref().map(FileRef::of).transpose()?,
        epochs_completed: run.state.epoch,
        optimizer_steps: run.state.step,
        best_epoch: run.state.best_epoch,
        best_loss: run.state.best_loss,
        trace: FileRef::of(&trace_path)?,
        checkpoint: FileRef::of(&final_path)?,
        periodic_checkpoints: periodic,
        config,
    };
    write_json(&args.out_dir.join("manifest.json"), &manifest)?;
    Ok(())
}
