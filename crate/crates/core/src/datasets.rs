//! Synthetic graph generators and the dataset front end.

use std::fmt;
use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::graph::{read_graphs, Graph, GraphBatch};
use crate::rng::stream;

pub const COMMUNITY_P_INTRA: f64 = 0.7;
pub const COMMUNITY_P_INTER: f64 = 0.05;
pub const SBM_P_INTRA: f64 = 0.85;
/// Three expected edges between two communities of eight nodes.
pub const SBM_P_INTER: f64 = 3.0 / 64.0;
pub const PLANAR_NODES: usize = 60;

/// Erdős–Rényi graph: every pair present independently with probability `p`.
pub fn gen_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_er(n, p)?;
    Ok(Graph::from_pair_fn(n, |_| rng.random::<f64>() < p))
}

fn check_er(n: usize, p: f64) -> Result<()> {
    if n == 0 || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("invalid ER parameters n={n} p={p}")));
    }
    Ok(())
}

/// Stochastic block model over consecutive blocks of the given sizes.
/// Returns the graph and each node's block.
pub fn gen_sbm<R: Rng + ?Sized>(
    sizes: &[usize],
    p_intra: f64,
    p_inter: f64,
    rng: &mut R,
) -> Result<(Graph, Vec<usize>)> {
    let n: usize = sizes.iter().sum();
    if n == 0 || !(0.0..=1.0).contains(&p_intra) || !(0.0..=1.0).contains(&p_inter) {
        return Err(Error::InvalidArgument("invalid block model parameters".into()));
    }
    let block: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { p_intra } else { p_inter };
            if rng.random::<f64>() < p {
                g.insert_edge(i, j)?;
            }
        }
    }
    Ok((g, block))
}

/// Two equal communities with `n` drawn uniformly from {12, 14, 16, 18, 20}.
pub fn gen_community_small_labeled<R: Rng + ?Sized>(rng: &mut R) -> (Graph, Vec<usize>) {
    let half = rng.random_range(6..=10);
    gen_sbm(&[half, half], COMMUNITY_P_INTRA, COMMUNITY_P_INTER, rng).expect("valid parameters")
}

pub fn gen_community_small<R: Rng + ?Sized>(rng: &mut R) -> Graph {
    gen_community_small_labeled(rng).0
}

/// Three community sizes drawn from {7, 8, 9}, redrawn until the total lies in [24, 27].
pub fn sbm27_sizes<R: Rng + ?Sized>(rng: &mut R) -> [usize; 3] {
    loop {
        let sizes = [(); 3].map(|_| rng.random_range(7..=9));
        if sizes.iter().sum::<usize>() >= 24 {
            return sizes;
        }
    }
}

pub fn gen_sbm27_labeled<R: Rng + ?Sized>(rng: &mut R) -> (Graph, Vec<usize>) {
    let sizes = sbm27_sizes(rng);
    gen_sbm(&sizes, SBM_P_INTRA, SBM_P_INTER, rng).expect("valid parameters")
}

pub fn gen_sbm27<R: Rng + ?Sized>(rng: &mut R) -> Graph {
    gen_sbm27_labeled(rng).0
}

/// Delaunay graph of the given points. Duplicate points are rejected.
pub fn delaunay_graph(points: &[(f64, f64)]) -> Result<Graph> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to triangulate".into()));
    }
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for &(x, y) in points {
        tri.insert(Point2::new(x, y))
            .map_err(|e| Error::InvalidArgument(format!("cannot triangulate point ({x}, {y}): {e:?}")))?;
    }
    if tri.num_vertices() != points.len() {
        return Err(Error::InvalidArgument("duplicate points".into()));
    }
    let mut g = Graph::empty(points.len());
    for e in tri.undirected_edges() {
        let [a, b] = e.vertices().map(|v| v.fix().index());
        g.insert_edge(a.min(b), a.max(b))?;
    }
    Ok(g)
}

/// Delaunay triangulation of 60 uniform points in the unit square.
pub fn gen_planar60<R: Rng + ?Sized>(rng: &mut R) -> Graph {
    loop {
        let points: Vec<(f64, f64)> = (0..PLANAR_NODES).map(|_| (rng.random(), rng.random())).collect();
        // Coincident points have probability zero but would break the node count.
        if let Ok(g) = delaunay_graph(&points) {
            return g;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetKind {
    Er { n: usize, p: f64 },
    CommunitySmall,
    #[serde(rename = "sbm-27")]
    Sbm27,
    #[serde(rename = "planar-60")]
    Planar60,
    File { path: PathBuf },
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Er { .. } => "er",
            DatasetKind::CommunitySmall => "community-small",
            DatasetKind::Sbm27 => "sbm-27",
            DatasetKind::Planar60 => "planar-60",
            DatasetKind::File { .. } => "file",
        }
    }

    /// Dataset sizes used for the benchmark sets; `None` for files.
    pub fn default_count(&self) -> Option<usize> {
        match self {
            DatasetKind::Er { .. } | DatasetKind::CommunitySmall => Some(100),
            DatasetKind::Sbm27 | DatasetKind::Planar60 => Some(200),
            DatasetKind::File { .. } => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub kind: DatasetKind,
    /// Number of graphs; defaults per kind. For files, keeps the first `count`.
    pub count: Option<usize>,
    pub seed: u64,
}

/// Builds the dataset. Graph `i` of a synthetic kind is drawn from its own
/// stream `(seed, "dataset/<kind>", i)`.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<GraphBatch> {
    if let DatasetKind::File { path } = &spec.kind {
        let mut graphs = read_graphs(path)?.into_inner();
        if let Some(c) = spec.count {
            if c > graphs.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} holds {} graphs, {c} requested",
                    path.display(),
                    graphs.len()
                )));
            }
            graphs.truncate(c);
        }
        if graphs.is_empty() {
            return Err(Error::InvalidArgument(format!("{} holds no graphs", path.display())));
        }
        return Ok(GraphBatch::new(graphs));
    }
    if let DatasetKind::Er { n, p } = spec.kind {
        check_er(n, p)?;
    }
    let count = spec.count.or(spec.kind.default_count()).unwrap_or(0);
    if count == 0 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    let tag = format!("dataset/{}", spec.kind.name());
    let graphs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, &tag, i as u64);
            match &spec.kind {
                DatasetKind::Er { n, p } => gen_er(*n, *p, &mut rng).expect("validated"),
                DatasetKind::CommunitySmall => gen_community_small(&mut rng),
                DatasetKind::Sbm27 => gen_sbm27(&mut rng),
                DatasetKind::Planar60 => gen_planar60(&mut rng),
                DatasetKind::File { .. } => unreachable!(),
            }
        })
        .collect();
    Ok(GraphBatch::new(graphs))
}

/// Splits off the first `ceil(fraction * len)` graphs as the training part.
pub fn split(batch: &GraphBatch, fraction: f64) -> (GraphBatch, GraphBatch) {
    let k = ((batch.len() as f64 * fraction).ceil() as usize).min(batch.len());
    let (a, b) = batch.graphs().split_at(k);
    (GraphBatch::new(a.to_vec()), GraphBatch::new(b.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pair_count;

    fn connected(g: &Graph) -> bool {
        let adj = g.adjacency_lists();
        let mut seen = vec![false; g.n()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    #[test]
    fn er_extremes_and_mean() {
        let mut rng = stream(1, "er", 0);
        assert_eq!(gen_er(7, 0.0, &mut rng).unwrap().edge_count(), 0);
        assert_eq!(gen_er(7, 1.0, &mut rng).unwrap(), Graph::complete(7));
        assert!(gen_er(0, 0.5, &mut rng).is_err());
        assert!(gen_er(3, 1.5, &mut rng).is_err());
        let trials = 10_000;
        let total: usize = (0..trials).map(|_| gen_er(20, 0.7, &mut rng).unwrap().edge_count()).sum();
        let mean = total as f64 / trials as f64;
        let sd = (190.0 * 0.7 * 0.3 / trials as f64).sqrt();
        assert!((mean - 133.0).abs() < 3.0 * sd, "{mean}");
    }

    /// Counts present and possible pairs inside and across blocks.
    fn block_tallies(g: &Graph, block: &[usize]) -> [(usize, usize); 2] {
        let mut out = [(0, 0); 2];
        for i in 0..g.n() {
            for j in i + 1..g.n() {
                let slot = &mut out[usize::from(block[i] != block[j])];
                slot.1 += 1;
                slot.0 += usize::from(g.has_edge(i, j));
            }
        }
        out
    }

    fn within_3_sigma(hits: usize, trials: usize, p: f64) -> bool {
        let freq = hits as f64 / trials as f64;
        (freq - p).abs() < 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
    }

    #[test]
    fn community_small_statistics() {
        let mut rng = stream(2, "cs", 0);
        let mut intra = (0, 0);
        let mut inter = (0, 0);
        for _ in 0..10_000 {
            let (g, block) = gen_community_small_labeled(&mut rng);
            assert!((12..=20).contains(&g.n()) && g.n() % 2 == 0);
            assert_eq!(block.iter().filter(|&&b| b == 0).count() * 2, g.n());
            let [a, b] = block_tallies(&g, &block);
            intra = (intra.0 + a.0, intra.1 + a.1);
            inter = (inter.0 + b.0, inter.1 + b.1);
        }
        assert!(within_3_sigma(intra.0, intra.1, 0.7));
        assert!(within_3_sigma(inter.0, inter.1, 0.05));
    }

    #[test]
    fn sbm27_sizes_and_density() {
        let mut rng = stream(3, "sbm", 0);
        let mut intra = (0, 0);
        for _ in 0..2000 {
            let (g, block) = gen_sbm27_labeled(&mut rng);
            assert!((24..=27).contains(&g.n()));
            for b in 0..3 {
                assert!((7..=9).contains(&block.iter().filter(|&&x| x == b).count()));
            }
            let [a, _] = block_tallies(&g, &block);
            intra = (intra.0 + a.0, intra.1 + a.1);
        }
        assert!(within_3_sigma(intra.0, intra.1, 0.85));
        assert_eq!(64.0 * SBM_P_INTER, 3.0);
    }

    /// Delaunay edges by definition: a triangle belongs to the triangulation
    /// when no other point lies inside its circumcircle.
    fn brute_delaunay(points: &[(f64, f64)]) -> Graph {
        let n = points.len();
        let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        let in_circle = |a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)| {
            let rows = [a, b, c].map(|p| {
                let (x, y) = (p.0 - d.0, p.1 - d.1);
                [x, y, x * x + y * y]
            });
            let det = rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
                - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
                + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0]);
            det * orient(a, b, c).signum() > 0.0
        };
        let mut g = Graph::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (points[i], points[j], points[k]);
                    if orient(a, b, c) == 0.0 {
                        continue;
                    }
                    if (0..n).filter(|&m| m != i && m != j && m != k).all(|m| !in_circle(a, b, c, points[m])) {
                        for (u, v) in [(i, j), (i, k), (j, k)] {
                            if !g.has_edge(u, v) {
                                g.insert_edge(u, v).unwrap();
                            }
                        }
                    }
                }
            }
        }
        g
    }

    fn hull_size(points: &[(f64, f64)]) -> usize {
        let n = points.len();
        (0..n)
            .filter(|&i| {
                // A vertex is on the hull when some line through it has every other point on one side.
                (0..n).filter(|&j| j != i).any(|j| {
                    let (a, b) = (points[i], points[j]);
                    let side = |c: (f64, f64)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                    (0..n).filter(|&k| k != i && k != j).all(|k| side(points[k]) > 0.0)
                })
            })
            .count()
    }

    #[test]
    fn delaunay_matches_brute_force() {
        let mut rng = stream(4, "del", 0);
        for trial in 0..200 {
            let n = 3 + trial % 8;
            let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let g = delaunay_graph(&points).unwrap();
            assert_eq!(g, brute_delaunay(&points), "trial {trial}");
            assert_eq!(g.edge_count(), 3 * n - 3 - hull_size(&points));
        }
    }

    #[test]
    fn delaunay_rejects_duplicates() {
        assert!(delaunay_graph(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]).is_err());
        assert!(delaunay_graph(&[]).is_err());
    }

    #[test]
    fn planar60_shape() {
        let mut rng = stream(5, "planar", 0);
        for _ in 0..50 {
            let g = gen_planar60(&mut rng);
            assert_eq!(g.n(), 60);
            assert!(g.edge_count() <= 174);
            assert!(connected(&g));
        }
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let spec = |kind, count| DatasetSpec { kind, count, seed: 9 };
        let sbm = gen_dataset(&spec(DatasetKind::Sbm27, None)).unwrap();
        assert_eq!(sbm.len(), 200);
        assert!(sbm.iter().all(|g| (24..=27).contains(&g.n())));
        assert_eq!(gen_dataset(&spec(DatasetKind::CommunitySmall, None)).unwrap().len(), 100);
        let a = gen_dataset(&spec(DatasetKind::Er { n: 9, p: 0.3 }, Some(17))).unwrap();
        let b = gen_dataset(&spec(DatasetKind::Er { n: 9, p: 0.3 }, Some(17))).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|g| g.pair_count() == pair_count(9)));
        assert!(gen_dataset(&spec(DatasetKind::Er { n: 9, p: -0.1 }, Some(2))).is_err());
        assert!(gen_dataset(&spec(DatasetKind::CommunitySmall, Some(0))).is_err());
    }

    #[test]
    fn file_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ego.gl");
        std::fs::write(&path, "n=3\n0 1\n\nn=2\n0 1\n\nn=4\n").unwrap();
        let spec = |count| DatasetSpec { kind: DatasetKind::File { path: path.clone() }, count, seed: 0 };
        assert_eq!(gen_dataset(&spec(None)).unwrap().len(), 3);
        assert_eq!(gen_dataset(&spec(Some(2))).unwrap().node_counts(), vec![3, 2]);
        assert!(gen_dataset(&spec(Some(4))).is_err());
    }

    #[test]
    fn spec_serde_names() {
        let spec = DatasetSpec { kind: DatasetKind::Sbm27, count: Some(5), seed: 1 };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"sbm-27\""), "{json}");
        let er: DatasetSpec = serde_json::from_str(r#"{"kind":"er","n":4,"p":0.5,"count":null,"seed":2}"#).unwrap();
        assert_eq!(er.kind, DatasetKind::Er { n: 4, p: 0.5 });
    }

    #[test]
    fn split_halves() {
        let batch: GraphBatch = (1..=5).map(Graph::empty).collect();
        let (a, b) = split(&batch, 0.5);
        assert_eq!(a.node_counts(), vec![1, 2, 3]);
        assert_eq!(b.node_counts(), vec![4, 5]);
    }
}
