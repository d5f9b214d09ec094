use std::fmt::Write;
use std::path::PathBuf;

use graphdiff::diffusion::flip_pairs;
use graphdiff::rng::stream;
use graphdiff::{Graph, NoiseSchedule, ScheduleKind};

use crate::output::{read_batch, write_file};

#[derive(clap::Args)]
pub struct Args {
    /// Edge-list file holding the clean graph.
    #[arg(long)]
    input: PathBuf,
    /// Which graph of the file to noise.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value_t = ScheduleKind::Linear)]
    schedule: ScheduleKind,
    #[arg(long)]
    seed: u64,
    /// Number of rungs, evenly spaced from t = 0 to t = T.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// DOT output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Steps shown on the ladder: `levels` values spread over `0..=steps`.
fn ladder_steps(steps: usize, levels: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (0..levels)
        .map(|k| (k * steps + (levels - 1) / 2) / (levels - 1))
        .collect();
    ts.dedup();
    ts
}

fn render(rungs: &[(usize, f64, Graph)]) -> String {
    let mut dot = String::from("graph noising {\n  node [shape=point];\n");
    for (t, beta_bar, g) in rungs {
        let _ = writeln!(dot, "  subgraph cluster_t{t} {{");
        let _ = writeln!(dot, "    label=\"t = {t}, flip prob {beta_bar:.3}\";");
        for v in 0..g.n() {
            let _ = writeln!(dot, "    t{t}_{v};");
        }
        for (i, j) in g.edges() {
            let _ = writeln!(dot, "    t{t}_{i} -- t{t}_{j};");
        }
        dot.push_str("  }\n");
    }
    dot.push_str("}\n");
    dot
}

pub fn run(args: Args) -> anyhow::Result<()> {
    anyhow::ensure!(args.levels >= 2, "--levels must be at least 2");
    let batch = read_batch(&args.input)?;
    let clean = batch
        .graphs()
        .get(args.index)
        .ok_or_else(|| anyhow::anyhow!("{} holds {} graphs, index {} requested", args.input.display(), batch.len(), args.index))?;
    let schedule = NoiseSchedule::new(args.schedule, args.steps)?;
    let shown = ladder_steps(args.steps, args.levels);

    // One forward chain A_0 -> A_T, so the rungs are consecutive states of the same run.
    let mut rng = stream(args.seed, "noise-demo", args.index as u64);
    let mut g = clean.clone();
    let mut rungs = vec![(0, 0.0, g.clone())];
    for t in 1..=args.steps {
        g = flip_pairs(&g, schedule.beta(t), &mut rng);
        if shown.contains(&t) {
            rungs.push((t, schedule.beta_bar(t), g.clone()));
        }
    }
    let dot = render(&rungs);
    match &args.out {
        Some(path) => write_file(path, dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_covers_both_ends() {
        assert_eq!(ladder_steps(32, 5), vec![0, 8, 16, 24, 32]);
        assert_eq!(ladder_steps(3, 2), vec![0, 3]);
        assert_eq!(ladder_steps(2, 5), vec![0, 1, 2]);
    }
}
