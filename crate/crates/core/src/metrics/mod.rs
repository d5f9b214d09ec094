//! Graph statistics and maximum mean discrepancy between graph sets.

mod orbits;

pub use orbits::{classify as orbit_of, mean_orbit_counts, orbit_counts, ORBITS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};

/// Normalised degree histogram, length `max_degree + 1`.
pub fn degree_histogram(g: &Graph) -> Vec<f64> {
    let degrees = g.degree_sequence();
    let mut hist = vec![0.0; degrees.iter().max().map_or(1, |d| d + 1)];
    for d in degrees {
        hist[d] += 1.0;
    }
    normalized(hist)
}

/// Local clustering coefficient of every node; 0 for nodes of degree below 2.
pub fn clustering_coefficients(g: &Graph) -> Vec<f64> {
    let adj = g.adjacency_lists();
    adj.iter()
        .map(|ns| {
            let d = ns.len();
            if d < 2 {
                return 0.0;
            }
            let mut triangles = 0usize;
            for (a, &u) in ns.iter().enumerate() {
                for &w in &ns[a + 1..] {
                    if g.has_edge(u, w) {
                        triangles += 1;
                    }
                }
            }
            2.0 * triangles as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

/// Normalised histogram of clustering coefficients over `bins` equal bins on [0, 1].
pub fn clustering_histogram(g: &Graph, bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    for c in clustering_coefficients(g) {
        let b = ((c * bins as f64) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    normalized(hist)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}

/// Kernels on non-negative vectors. Both treat their inputs as distributions:
/// vectors are zero-padded to a common length and scaled to unit mass first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    /// `exp(-W^2 / 2 sigma^2)` where `W` is the 1-D earth mover's distance
    /// between histograms whose bins are `bin_width` apart.
    GaussianEmd { sigma: f64, bin_width: f64 },
    /// `exp(-TV^2 / 2 sigma^2)` with `TV = sum |a - b| / 2`.
    GaussianTv { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let len = a.len().max(b.len());
        let mass = |v: &[f64]| v.iter().sum::<f64>();
        let (ma, mb) = (mass(a), mass(b));
        let at = |v: &[f64], m: f64, i: usize| {
            let x = v.get(i).copied().unwrap_or(0.0);
            if m > 0.0 { x / m } else { x }
        };
        match *self {
            Kernel::GaussianEmd { sigma, bin_width } => {
                let (mut ca, mut cb, mut emd) = (0.0, 0.0, 0.0);
                for i in 0..len {
                    ca += at(a, ma, i);
                    cb += at(b, mb, i);
                    emd += (ca - cb).abs();
                }
                let emd = emd * bin_width;
                (-emd * emd / (2.0 * sigma * sigma)).exp()
            }
            Kernel::GaussianTv { sigma } => {
                let tv = 0.5 * (0..len).map(|i| (at(a, ma, i) - at(b, mb, i)).abs()).sum::<f64>();
                (-tv * tv / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::GaussianEmd { sigma, bin_width } => sigma > 0.0 && bin_width > 0.0,
            Kernel::GaussianTv { sigma } => sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid kernel parameters {self:?}")))
        }
    }
}

fn mean_kernel(kernel: &Kernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = a
        .par_iter()
        .map(|x| b.iter().map(|y| kernel.eval(x, y)).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// Biased squared MMD, clipped at zero.
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>], kernel: &Kernel) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("MMD needs two non-empty sets".into()));
    }
    kernel.validate()?;
    let value = mean_kernel(kernel, a, a) + mean_kernel(kernel, b, b) - 2.0 * mean_kernel(kernel, a, b);
    Ok(value.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub degree: Kernel,
    pub clustering: Kernel,
    pub orbit: Kernel,
    pub clustering_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let bins = 100;
        MetricsConfig {
            degree: Kernel::GaussianEmd { sigma: 1.0, bin_width: 1.0 },
            clustering: Kernel::GaussianEmd { sigma: 1.0, bin_width: 1.0 / bins as f64 },
            orbit: Kernel::GaussianTv { sigma: 1.0 },
            clustering_bins: bins,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub degree: f64,
    pub clustering: f64,
    pub orbit: f64,
    pub avg: f64,
}

/// The three statistics of every graph in a set.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub degree: Vec<Vec<f64>>,
    pub clustering: Vec<Vec<f64>>,
    pub orbit: Vec<Vec<f64>>,
}

impl GraphStats {
    pub fn compute(batch: &GraphBatch, clustering_bins: usize) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("cannot evaluate an empty graph set".into()));
        }
        if clustering_bins == 0 {
            return Err(Error::InvalidArgument("clustering histogram needs at least one bin".into()));
        }
        let per_graph: Vec<_> = batch
            .graphs()
            .par_iter()
            .map(|g| (degree_histogram(g), clustering_histogram(g, clustering_bins), mean_orbit_counts(g)))
            .collect();
        let mut stats = GraphStats { degree: vec![], clustering: vec![], orbit: vec![] };
        for (d, c, o) in per_graph {
            stats.degree.push(d);
            stats.clustering.push(c);
            stats.orbit.push(o);
        }
        Ok(stats)
    }
}

pub fn evaluate_stats(generated: &GraphStats, reference: &GraphStats, config: &MetricsConfig) -> Result<MmdReport> {
    let degree = mmd(&generated.degree, &reference.degree, &config.degree)?;
    let clustering = mmd(&generated.clustering, &reference.clustering, &config.clustering)?;
    let orbit = mmd(&generated.orbit, &reference.orbit, &config.orbit)?;
    Ok(MmdReport { degree, clustering, orbit, avg: (degree + clustering + orbit) / 3.0 })
}

/// Degree, clustering and orbit MMD between a generated set and a reference set.
pub fn evaluate(generated: &GraphBatch, reference: &GraphBatch, config: &MetricsConfig) -> Result<MmdReport> {
    let g = GraphStats::compute(generated, config.clustering_bins)?;
    let r = GraphStats::compute(reference, config.clustering_bins)?;
    evaluate_stats(&g, &r, config)
}
