//! Per-node counts of the eleven automorphism orbits of connected 4-node graphlets.
//!
//! Orbit numbering follows the usual graphlet convention, offset so index 0 is
//! orbit 4:
//!
//! | graphlet | orbits |
//! |---|---|
//! | path P4 | 4 end, 5 middle |
//! | star | 6 leaf, 7 centre |
//! | cycle C4 | 8 |
//! | paw (triangle with a pendant) | 9 pendant, 10 degree-2, 11 degree-3 |
//! | diamond | 12 degree-2, 13 degree-3 |
//! | K4 | 14 |

use crate::graph::Graph;

pub const ORBITS: usize = 11;

/// Orbit of a node inside a connected 4-node induced subgraph, given the
/// subgraph's edge count and the node's degree within it.
pub fn classify(edges: usize, degree: usize, degrees: &[usize; 4]) -> usize {
    let orbit = match (edges, degree) {
        (3, 1) if degrees.contains(&3) => 6,
        (3, 3) => 7,
        (3, 1) => 4,
        (3, 2) => 5,
        (4, 2) if degrees.contains(&3) => 10,
        (4, 2) => 8,
        (4, 1) => 9,
        (4, 3) => 11,
        (5, 2) => 12,
        (5, 3) => 13,
        (6, 3) => 14,
        _ => unreachable!("not a connected 4-node graphlet: {edges} edges, degree {degree}"),
    };
    orbit - 4
}

/// Adjacency rows as bitsets.
struct Bits {
    words: usize,
    rows: Vec<u64>,
}

impl Bits {
    fn new(g: &Graph) -> Self {
        let n = g.n();
        let words = n.div_ceil(64);
        let mut rows = vec![0u64; n * words];
        for (i, j) in g.edges() {
            rows[i * words + j / 64] |= 1 << (j % 64);
            rows[j * words + i / 64] |= 1 << (i % 64);
        }
        Bits { words, rows }
    }

    fn row(&self, v: usize) -> &[u64] {
        &self.rows[v * self.words..(v + 1) * self.words]
    }

    fn has(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }
}

fn pop_lowest(set: &mut [u64]) -> Option<usize> {
    for (w, word) in set.iter_mut().enumerate() {
        if *word != 0 {
            let b = word.trailing_zeros() as usize;
            *word &= *word - 1;
            return Some(w * 64 + b);
        }
    }
    None
}

/// Adds the orbit of every member of the 4-set `nodes` to `counts`.
fn tally(adj: &Bits, nodes: [usize; 4], counts: &mut [[u64; ORBITS]]) {
    let mut degrees = [0usize; 4];
    for a in 0..4 {
        for b in a + 1..4 {
            if adj.has(nodes[a], nodes[b]) {
                degrees[a] += 1;
                degrees[b] += 1;
            }
        }
    }
    let edges = degrees.iter().sum::<usize>() / 2;
    for (k, &v) in nodes.iter().enumerate() {
        counts[v][classify(edges, degrees[k], &degrees)] += 1;
    }
}

/// Per-node orbit counts, enumerating each connected 4-node subset exactly
/// once by growing it from its smallest vertex (ESU). The extension set only
/// admits vertices above the root that are not already adjacent to the
/// partial subgraph.
pub fn orbit_counts(g: &Graph) -> Vec<[u64; ORBITS]> {
    let n = g.n();
    let mut counts = vec![[0u64; ORBITS]; n];
    if n < 4 {
        return counts;
    }
    let adj = Bits::new(g);
    let words = adj.words;
    let mut above = vec![0u64; words];
    let (mut ext1, mut closed1) = (vec![0u64; words], vec![0u64; words]);
    let (mut ext2, mut closed2) = (vec![0u64; words], vec![0u64; words]);
    let mut ext3 = vec![0u64; words];
    for v in 0..n {
        for (w, a) in above.iter_mut().enumerate() {
            let lo = w * 64;
            *a = if v < lo {
                !0
            } else if v + 1 >= lo + 64 {
                0
            } else {
                !0 << (v + 1 - lo)
            };
        }
        for w in 0..words {
            ext1[w] = adj.row(v)[w] & above[w];
            closed1[w] = adj.row(v)[w];
        }
        closed1[v / 64] |= 1 << (v % 64);
        while let Some(w1) = pop_lowest(&mut ext1) {
            let r1 = adj.row(w1);
            for w in 0..words {
                ext2[w] = ext1[w] | (r1[w] & !closed1[w] & above[w]);
                closed2[w] = closed1[w] | r1[w];
            }
            while let Some(w2) = pop_lowest(&mut ext2) {
                let r2 = adj.row(w2);
                for w in 0..words {
                    ext3[w] = ext2[w] | (r2[w] & !closed2[w] & above[w]);
                }
                while let Some(w3) = pop_lowest(&mut ext3) {
                    tally(&adj, [v, w1, w2, w3], &mut counts);
                }
            }
        }
    }
    counts
}

/// Mean per-node orbit counts of a graph.
pub fn mean_orbit_counts(g: &Graph) -> Vec<f64> {
    let counts = orbit_counts(g);
    let mut mean = vec![0.0; ORBITS];
    for c in &counts {
        for (m, &x) in mean.iter_mut().zip(c) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= g.n() as f64);
    mean
}
