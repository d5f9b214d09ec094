//! Simple undirected graphs stored as a bit-packed upper triangle.
//!
//! Unordered pairs `{i, j}` with `i < j` are numbered row-major:
//! `(0,1), (0,2), ..., (0,n-1), (1,2), ...`. Self-loops and multi-edges
//! cannot be represented.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of unordered node pairs of an `n`-node graph.
pub const fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of the pair `{i, j}`, `i < j < n`.
pub fn edge_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i >= j || j >= n {
        return Err(Error::Index { i, j, n });
    }
    Ok(pair_index_unchecked(i, j, n))
}

#[inline]
pub(crate) fn pair_index_unchecked(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`edge_index`].
pub fn pair_from_index(k: usize, n: usize) -> Result<(usize, usize)> {
    if k >= pair_count(n) {
        return Err(Error::InvalidArgument(format!(
            "pair index {k} out of range for n = {n}"
        )));
    }
    let mut i = 0;
    let mut row_start = 0;
    loop {
        let row_len = n - i - 1;
        if k < row_start + row_len {
            return Ok((i, i + 1 + (k - row_start)));
        }
        row_start += row_len;
        i += 1;
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Graph {
    n: usize,
    bits: Vec<u64>,
}

impl Graph {
    /// Edgeless graph on `n` nodes.
    ///
    /// Panics if `n == 0`.
    pub fn empty(n: usize) -> Self {
        assert!(n >= 1, "a graph needs at least one node");
        Graph {
            n,
            bits: vec![0; pair_count(n).div_ceil(64)],
        }
    }

    pub fn complete(n: usize) -> Self {
        Self::from_pair_fn(n, |_| true)
    }

    /// Builds a graph by asking `present(k)` for every pair index `k`.
    pub fn from_pair_fn(n: usize, mut present: impl FnMut(usize) -> bool) -> Self {
        let mut g = Self::empty(n);
        for k in 0..g.pair_count() {
            if present(k) {
                g.set_pair(k, true);
            }
        }
        g
    }

    /// Builds a graph from an edge list; endpoint order within a pair is irrelevant.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (a, b) in edges {
            g.insert_edge(a, b)?;
        }
        Ok(g)
    }

    /// Builds a graph from edges over arbitrary node labels. Labels are
    /// re-indexed densely in sorted order; isolated nodes are not representable
    /// this way.
    pub fn from_labeled_edges<L, I>(edges: I) -> Result<Self>
    where
        L: Ord + Clone,
        I: IntoIterator<Item = (L, L)>,
    {
        let edges: Vec<(L, L)> = edges.into_iter().collect();
        let mut labels: Vec<L> = edges
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        labels.sort();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::InvalidArgument("no edges to relabel".into()));
        }
        let index = |l: &L| labels.binary_search(l).expect("label collected above");
        let mut g = Self::empty(labels.len());
        for (a, b) in &edges {
            let (i, j) = (index(a), index(b));
            if i == j {
                return Err(Error::Index { i, j, n: g.n });
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.n)
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn density(&self) -> f64 {
        match self.pair_count() {
            0 => 0.0,
            p => self.edge_count() as f64 / p as f64,
        }
    }

    #[inline]
    pub fn has_pair(&self, k: usize) -> bool {
        (self.bits[k / 64] >> (k % 64)) & 1 == 1
    }

    #[inline]
    pub fn set_pair(&mut self, k: usize, present: bool) {
        debug_assert!(k < self.pair_count());
        let mask = 1u64 << (k % 64);
        if present {
            self.bits[k / 64] |= mask;
        } else {
            self.bits[k / 64] &= !mask;
        }
    }

    #[inline]
    pub fn toggle_pair(&mut self, k: usize) {
        self.bits[k / 64] ^= 1u64 << (k % 64);
    }

    /// Symmetric lookup; `has_edge(i, i)` is always false.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j || i >= self.n || j >= self.n {
            return false;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.has_pair(pair_index_unchecked(a, b, self.n))
    }

    fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.set_pair(pair_index_unchecked(a, b, self.n), present);
    }

    /// Adds the edge `{i, j}`. Fails on self-loops, out-of-range nodes and duplicates.
    pub fn insert_edge(&mut self, i: usize, j: usize) -> Result<()> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = edge_index(a, b, self.n)?;
        if self.has_pair(k) {
            return Err(Error::InvalidArgument(format!("duplicate edge {a} {b}")));
        }
        self.set_pair(k, true);
        Ok(())
    }

    /// Edges as `(i, j)` with `i < j`, in row-major pair order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            ((i + 1)..n)
                .filter(move |&j| self.has_pair(pair_index_unchecked(i, j, n)))
                .map(move |j| (i, j))
        })
    }

    /// Number of pairs on which the two graphs disagree.
    pub fn hamming(&self, other: &Graph) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::NodeCountMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Sorted neighbour lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::NodeCountMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let mut g = Graph::empty(self.n);
        for (i, j) in self.edges() {
            g.set_edge(perm[i], perm[j], true);
        }
        Ok(g)
    }

    /// Graphviz DOT rendering: one declaration per node, one line per edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph G {\n");
        for v in 0..self.n {
            let _ = writeln!(out, "  {v};");
        }
        for (i, j) in self.edges() {
            let _ = writeln!(out, "  {i} -- {j};");
        }
        out.push_str("}\n");
        out
    }
}

/// An ordered collection of graphs, possibly with different node counts.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct GraphBatch {
    graphs: Vec<Graph>,
}

impl GraphBatch {
    pub fn new(graphs: Vec<Graph>) -> Self {
        GraphBatch { graphs }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Graph> {
        self.graphs.iter()
    }

    pub fn into_inner(self) -> Vec<Graph> {
        self.graphs
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::n).collect()
    }

    /// The shared node count, if every graph has the same one.
    pub fn uniform_n(&self) -> Option<usize> {
        let first = self.graphs.first()?.n();
        self.graphs.iter().all(|g| g.n() == first).then_some(first)
    }

    pub fn push(&mut self, g: Graph) {
        self.graphs.push(g);
    }
}

impl From<Vec<Graph>> for GraphBatch {
    fn from(graphs: Vec<Graph>) -> Self {
        GraphBatch::new(graphs)
    }
}

impl FromIterator<Graph> for GraphBatch {
    fn from_iter<I: IntoIterator<Item = Graph>>(iter: I) -> Self {
        GraphBatch::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a GraphBatch {
    type Item = &'a Graph;
    type IntoIter = std::slice::Iter<'a, Graph>;

    fn into_iter(self) -> Self::IntoIter {
        self.graphs.iter()
    }
}

/// Parses the multi-graph edge-list format.
///
/// Each graph starts with `n=<count>` followed by `<i> <j>` lines; graphs are
/// separated by blank lines and `#` starts a comment. Pairs given as `j i`
/// are accepted and normalised.
pub fn parse_edge_list(text: &str) -> Result<GraphBatch> {
    let mut graphs = Vec::new();
    let mut current: Option<Graph> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };

        if raw.trim().is_empty() {
            graphs.extend(current.take());
            continue;
        }
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }

        if let Some(count) = content.strip_prefix("n=") {
            let n: usize = count
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid node count {count:?}")))?;
            if n == 0 {
                return Err(err("node count must be at least 1".into()));
            }
            graphs.extend(current.replace(Graph::empty(n)));
            continue;
        }

        let g = current
            .as_mut()
            .ok_or_else(|| err(format!("expected `n=<count>`, found {content:?}")))?;
        let mut fields = content.split_whitespace();
        let mut endpoint = || -> Result<usize> {
            let tok = fields
                .next()
                .ok_or_else(|| err("expected two node indices".into()))?;
            tok.parse()
                .map_err(|_| err(format!("invalid node index {tok:?}")))
        };
        let (i, j) = (endpoint()?, endpoint()?);
        if fields.next().is_some() {
            return Err(err("trailing fields after edge".into()));
        }
        if i == j {
            return Err(err(format!("self-loop on node {i}")));
        }
        if i.max(j) >= g.n() {
            return Err(err(format!(
                "node index {} out of range for n={}",
                i.max(j),
                g.n()
            )));
        }
        g.insert_edge(i, j).map_err(|_| err(format!("duplicate edge {i} {j}")))?;
    }
    graphs.extend(current);
    Ok(GraphBatch::new(graphs))
}

/// Canonical text form: `n=` header, edges in row-major order, one blank
/// line between graphs.
pub fn format_edge_list(batch: &GraphBatch) -> String {
    let mut out = String::new();
    for (idx, g) in batch.iter().enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "n={}", g.n());
        for (i, j) in g.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
    }
    out
}

pub fn read_graphs(path: impl AsRef<Path>) -> Result<GraphBatch> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

pub fn write_graphs(batch: &GraphBatch, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_edge_list(batch)).map_err(|e| Error::io(path, e))
}
