use super::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch};
use crate::schedule::NoiseSchedule;

/// Exact posterior mean of the clean graph under a uniform prior over a
/// finite dataset.
///
/// Because corruption is independent per pair, the likelihood of a noisy graph
/// given a dataset graph depends only on their Hamming distance `d`:
/// `beta_bar^d (1 - beta_bar)^(P - d)`. Weights are accumulated in log space.
#[derive(Clone, Debug)]
pub struct EmpiricalDenoiser {
    dataset: GraphBatch,
    schedule: NoiseSchedule,
    n: usize,
}

impl EmpiricalDenoiser {
    pub fn new(dataset: GraphBatch, schedule: NoiseSchedule) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let n = dataset.uniform_n().ok_or_else(|| {
            Error::InvalidArgument("empirical denoiser needs a uniform node count".into())
        })?;
        Ok(EmpiricalDenoiser {
            dataset,
            schedule,
            n,
        })
    }

    pub fn dataset(&self) -> &GraphBatch {
        &self.dataset
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalised log posterior weight of every dataset graph.
    pub fn log_weights(&self, a_t: &Graph, t: usize) -> Result<Vec<f64>> {
        if a_t.n() != self.n {
            return Err(Error::NodeCountMismatch {
                expected: self.n,
                got: a_t.n(),
            });
        }
        self.schedule.check_step(t, 1)?;
        let flip = self.schedule.beta_bar(t);
        let pairs = a_t.pair_count();
        let (ln_flip, ln_keep) = (flip.ln(), (1.0 - flip).ln());
        self.dataset
            .iter()
            .map(|g| {
                let d = a_t.hamming(g)?;
                Ok(xlny(d, ln_flip) + xlny(pairs - d, ln_keep))
            })
            .collect()
    }

    /// Normalised posterior over dataset graphs.
    pub fn posterior_weights(&self, a_t: &Graph, t: usize) -> Result<Vec<f64>> {
        let lw = self.log_weights(a_t, t)?;
        let total = log_sum_exp(lw.iter().copied());
        if total == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(
                "noisy graph has zero likelihood under every dataset graph".into(),
            ));
        }
        Ok(lw.iter().map(|l| (l - total).exp()).collect())
    }
}

impl Denoiser for EmpiricalDenoiser {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict(&self, a_t: &Graph, t: usize) -> Result<DenoiserOutput> {
        let lw = self.log_weights(a_t, t)?;
        let total = log_sum_exp(lw.iter().copied());
        if total == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(
                "noisy graph has zero likelihood under every dataset graph".into(),
            ));
        }
        let pairs = a_t.pair_count();
        let mut probs = Vec::with_capacity(pairs);
        let mut logits = Vec::with_capacity(pairs);
        for k in 0..pairs {
            let with = log_sum_exp(
                self.dataset
                    .iter()
                    .zip(&lw)
                    .filter(|(g, _)| g.has_pair(k))
                    .map(|(_, &l)| l),
            );
            let without = log_sum_exp(
                self.dataset
                    .iter()
                    .zip(&lw)
                    .filter(|(g, _)| !g.has_pair(k))
                    .map(|(_, &l)| l),
            );
            probs.push((with - total).exp().clamp(0.0, 1.0));
            logits.push(with - without);
        }
        Ok(DenoiserOutput { probs, logits })
    }
}

/// `k * ln(y)` with `0 * ln(0) = 0`.
fn xlny(k: usize, ln_y: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_y
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pair_count;

    fn single(g: Graph, steps: usize) -> EmpiricalDenoiser {
        EmpiricalDenoiser::new(GraphBatch::new(vec![g]), NoiseSchedule::linear(steps).unwrap()).unwrap()
    }

    #[test]
    fn one_point_dataset_returns_its_edges() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let d = single(g.clone(), 8);
        let noisy = Graph::complete(5);
        for t in 1..8 {
            let out = d.predict(&noisy, t).unwrap();
            for k in 0..pair_count(5) {
                let want = if g.has_pair(k) { 1.0 } else { 0.0 };
                assert!((out.probs[k] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_graph_hand_bayes() {
        // {empty, complete} on n=2, noisy graph has the edge, beta_bar = 0.25.
        let schedule = NoiseSchedule::from_beta_bar(vec![0.0, 0.25, 0.5]).unwrap();
        let d = EmpiricalDenoiser::new(
            GraphBatch::new(vec![Graph::empty(2), Graph::complete(2)]),
            schedule,
        )
        .unwrap();
        let out = d.predict(&Graph::complete(2), 1).unwrap();
        assert!((out.probs[0] - 0.75).abs() < 1e-12);
        assert!((out.logits[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pure_noise_gives_edge_frequencies() {
        let data = GraphBatch::new(vec![
            Graph::from_edges(3, [(0, 1)]).unwrap(),
            Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap(),
            Graph::empty(3),
            Graph::complete(3),
        ]);
        let d = EmpiricalDenoiser::new(data, NoiseSchedule::linear(4).unwrap()).unwrap();
        for noisy in [Graph::empty(3), Graph::complete(3)] {
            let out = d.predict(&noisy, 4).unwrap();
            let want = [0.75, 0.25, 0.5];
            for (p, w) in out.probs.iter().zip(want) {
                assert!((p - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        let d = single(Graph::complete(4), 8);
        assert!(matches!(
            d.predict(&Graph::empty(3), 2),
            Err(Error::NodeCountMismatch { .. })
        ));
        assert!(d.predict(&Graph::empty(4), 0).is_err());
        assert!(d.predict(&Graph::empty(4), 9).is_err());
        assert!(EmpiricalDenoiser::new(GraphBatch::default(), NoiseSchedule::linear(2).unwrap()).is_err());
        let mixed = GraphBatch::new(vec![Graph::empty(3), Graph::empty(4)]);
        assert!(EmpiricalDenoiser::new(mixed, NoiseSchedule::linear(2).unwrap()).is_err());
    }

    #[test]
    fn zero_likelihood_is_reported() {
        let s = NoiseSchedule::relaxed(vec![0.0, 0.0]).unwrap();
        let d = EmpiricalDenoiser::new(GraphBatch::new(vec![Graph::empty(3)]), s).unwrap();
        assert!(d.predict(&Graph::complete(3), 1).is_err());
        let out = d.predict(&Graph::empty(3), 1).unwrap();
        assert!(out.probs.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn matches_exhaustive_summation() {
        // Oracle: direct products of per-pair likelihoods, no log-space shortcuts.
        let n = 4;
        let data: Vec<Graph> = [0b000111usize, 0b101010, 0b110001, 0b000111, 0b011110]
            .iter()
            .map(|&m| Graph::from_pair_fn(n, |k| m >> k & 1 == 1))
            .collect();
        let schedule = NoiseSchedule::linear(6).unwrap();
        let d = EmpiricalDenoiser::new(GraphBatch::new(data.clone()), schedule.clone()).unwrap();
        for mask in 0..64usize {
            let noisy = Graph::from_pair_fn(n, |k| mask >> k & 1 == 1);
            for t in 1..=6 {
                let b = schedule.beta_bar(t);
                let lik: Vec<f64> = data
                    .iter()
                    .map(|g| {
                        (0..6)
                            .map(|k| if g.has_pair(k) == noisy.has_pair(k) { 1.0 - b } else { b })
                            .product()
                    })
                    .collect();
                let z: f64 = lik.iter().sum();
                let out = d.predict(&noisy, t).unwrap();
                for k in 0..6 {
                    let want: f64 = data
                        .iter()
                        .zip(&lik)
                        .filter(|(g, _)| g.has_pair(k))
                        .map(|(_, l)| l)
                        .sum::<f64>()
                        / z;
                    assert!((out.probs[k] - want).abs() < 1e-10);
                }
            }
        }
    }
}
