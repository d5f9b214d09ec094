//! Forward edge-flip kernel, closed-form marginals and the exact reverse posterior.
//!
//! Every unordered pair evolves as an independent two-state chain whose
//! transition matrix is `[[1-b, b], [b, 1-b]]`, so all quantities reduce to
//! scalar flip probabilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::schedule::NoiseSchedule;

/// Single-step flip probability `beta_t`, `1 <= t <= T`.
pub fn forward_flip_prob(schedule: &NoiseSchedule, t: usize) -> Result<f64> {
    schedule.check_step(t, 1)?;
    Ok(schedule.beta(t))
}

/// `q(A_t = 1 | A_0 = a0)`.
pub fn marginal_one(schedule: &NoiseSchedule, t: usize, a0: bool) -> Result<f64> {
    schedule.check_step(t, 0)?;
    let b = schedule.beta_bar(t);
    Ok(if a0 { 1.0 - b } else { b })
}

/// Flips every pair of `g` independently with probability `p`.
pub fn flip_pairs<R: Rng + ?Sized>(g: &Graph, p: f64, rng: &mut R) -> Graph {
    let mut out = g.clone();
    if p > 0.0 {
        for k in 0..out.pair_count() {
            if rng.random::<f64>() < p {
                out.toggle_pair(k);
            }
        }
    }
    out
}

/// Samples each pair independently from `Bernoulli(probs[k])`.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, probs: &[f64], rng: &mut R) -> Graph {
    debug_assert_eq!(probs.len(), crate::graph::pair_count(n));
    Graph::from_pair_fn(n, |k| rng.random::<f64>() < probs[k])
}

/// Draws `A_t ~ q(A_t | A_0 = g)`: each pair flipped with probability `beta_bar_t`.
pub fn noise_graph<R: Rng + ?Sized>(
    g: &Graph,
    schedule: &NoiseSchedule,
    t: usize,
    rng: &mut R,
) -> Result<Graph> {
    schedule.check_step(t, 0)?;
    Ok(flip_pairs(g, schedule.beta_bar(t), rng))
}

/// `q(A_{t-1} = 1 | A_t, A_0)` for all four `(A_t, A_0)` cases of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgePosterior {
    /// Indexed as `p_one[a_t][a_0]`.
    pub p_one: [[f64; 2]; 2],
}

impl EdgePosterior {
    /// Posterior table at step `t`, `2 <= t <= T`.
    pub fn at(schedule: &NoiseSchedule, t: usize) -> Result<Self> {
        schedule.check_step(t, 2)?;
        let beta = schedule.beta(t);
        let prev = schedule.beta_bar(t - 1);
        let cur = schedule.beta_bar(t);
        // A zero denominator means q(A_t | A_0) is a point mass; the only
        // reachable case then has A_{t-1} = A_0.
        let ratio = |num: f64, den: f64, a0: f64| if den == 0.0 { a0 } else { num / den };
        Ok(EdgePosterior {
            p_one: [
                [
                    ratio(beta * prev, 1.0 - cur, 0.0),
                    ratio(beta * (1.0 - prev), cur, 1.0),
                ],
                [
                    ratio((1.0 - beta) * prev, cur, 0.0),
                    ratio((1.0 - beta) * (1.0 - prev), 1.0 - cur, 1.0),
                ],
            ],
        })
    }

    #[inline]
    pub fn get(&self, a_t: bool, a_0: bool) -> f64 {
        self.p_one[a_t as usize][a_0 as usize]
    }

    /// `sum_{a0} p(a0) q(A_{t-1} = 1 | a_t, a0)` with `p(a0 = 1) = p0`.
    #[inline]
    pub fn mix(&self, a_t: bool, p0: f64) -> f64 {
        let row = self.p_one[a_t as usize];
        p0 * row[1] + (1.0 - p0) * row[0]
    }
}

/// `q(A_{t-1} = 1 | A_t = a_t, A_0 = a_0)` for one pair, `2 <= t <= T`.
pub fn posterior(schedule: &NoiseSchedule, t: usize, a_t: bool, a_0: bool) -> Result<f64> {
    Ok(EdgePosterior::at(schedule, t)?.get(a_t, a_0))
}

/// Reverse transition probability `p(A_{t-1} = 1 | A_t = a_t)` when the clean
/// state is believed to be present with probability `p0`.
pub fn reverse_marginal(schedule: &NoiseSchedule, t: usize, a_t: bool, p0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidArgument(format!(
            "probability {p0} outside [0, 1]"
        )));
    }
    Ok(EdgePosterior::at(schedule, t)?.mix(a_t, p0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn triple() -> NoiseSchedule {
        // beta_2 = 0.1, beta_bar_1 = 0.2, beta_bar_2 = 0.26
        NoiseSchedule::relaxed(vec![0.0, 0.2, 0.26]).unwrap()
    }

    // Two-state chain helpers used as an independent oracle.
    fn step(from: bool, to: bool, flip: f64) -> f64 {
        if from == to { 1.0 - flip } else { flip }
    }

    fn bayes(s: &NoiseSchedule, t: usize, a_t: bool, a_0: bool) -> f64 {
        let joint = |prev: bool| step(prev, a_t, s.beta(t)) * step(a_0, prev, s.beta_bar(t - 1));
        joint(true) / (joint(true) + joint(false))
    }

    #[test]
    fn flip_prob_examples() {
        let s = NoiseSchedule::linear(32).unwrap();
        assert!((forward_flip_prob(&s, 1).unwrap() - 0.015625).abs() < 1e-15);
        assert!((forward_flip_prob(&s, 32).unwrap() - 0.5).abs() < 1e-12);
        assert!(forward_flip_prob(&s, 0).is_err());
        assert!(forward_flip_prob(&s, 33).is_err());
        let flat = NoiseSchedule::relaxed(vec![0.0, 0.1, 0.1]).unwrap();
        assert_eq!(forward_flip_prob(&flat, 2).unwrap(), 0.0);
    }

    #[test]
    fn posterior_examples() {
        let s = triple();
        assert!((s.beta(2) - 0.1).abs() < 1e-12);
        let cases = [
            (true, true, 0.9 * 0.8 / 0.74),
            (true, false, 0.9 * 0.2 / 0.26),
            (false, false, 0.1 * 0.2 / 0.74),
            (false, true, 0.1 * 0.8 / 0.26),
        ];
        for (a_t, a_0, want) in cases {
            let got = posterior(&s, 2, a_t, a_0).unwrap();
            assert!((got - want).abs() < 1e-12, "{a_t} {a_0}: {got} vs {want}");
            assert!((got - bayes(&s, 2, a_t, a_0)).abs() < 1e-12);
        }
        assert!((posterior(&s, 2, true, true).unwrap() - 0.972973).abs() < 1e-6);
        assert!((posterior(&s, 2, true, false).unwrap() - 0.692308).abs() < 1e-6);
        assert!((posterior(&s, 2, false, false).unwrap() - 0.027027).abs() < 1e-6);
    }

    #[test]
    fn posterior_step_range() {
        let s = NoiseSchedule::linear(8).unwrap();
        assert!(matches!(posterior(&s, 1, true, true), Err(Error::StepOutOfRange { .. })));
        assert!(posterior(&s, 9, true, true).is_err());
        assert!(posterior(&s, 8, true, true).is_ok());
    }

    #[test]
    fn reverse_marginal_examples() {
        let s = triple();
        for a_t in [false, true] {
            assert_eq!(reverse_marginal(&s, 2, a_t, 1.0).unwrap(), posterior(&s, 2, a_t, true).unwrap());
            assert_eq!(reverse_marginal(&s, 2, a_t, 0.0).unwrap(), posterior(&s, 2, a_t, false).unwrap());
        }
        let half = reverse_marginal(&s, 2, true, 0.5).unwrap();
        assert!((half - 0.832641).abs() < 1e-6);
        assert!(reverse_marginal(&s, 2, true, 1.5).is_err());
        assert!(reverse_marginal(&s, 2, true, -0.1).is_err());
    }

    #[test]
    fn posterior_matches_bayes_for_all_steps() {
        for s in [NoiseSchedule::linear(32).unwrap(), NoiseSchedule::cosine(32).unwrap()] {
            for t in 2..=32 {
                let table = EdgePosterior::at(&s, t).unwrap();
                for a_t in [false, true] {
                    for a_0 in [false, true] {
                        let p = table.get(a_t, a_0);
                        assert!((0.0..=1.0).contains(&p));
                        assert!((p - bayes(&s, t, a_t, a_0)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn posterior_reconstructs_previous_marginal() {
        let s = NoiseSchedule::linear(16).unwrap();
        for t in 2..=16 {
            for a_0 in [false, true] {
                let via_posterior: f64 = [false, true]
                    .iter()
                    .map(|&a_t| {
                        let q_t = step(a_0, a_t, s.beta_bar(t));
                        q_t * posterior(&s, t, a_t, a_0).unwrap()
                    })
                    .sum();
                assert!((via_posterior - marginal_one(&s, t - 1, a_0).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_posterior_follows_clean_state() {
        let s = NoiseSchedule::relaxed(vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(posterior(&s, 2, true, true).unwrap(), 1.0);
        assert_eq!(posterior(&s, 2, false, false).unwrap(), 0.0);
    }

    #[test]
    fn noise_at_zero_is_identity() {
        let s = NoiseSchedule::linear(8).unwrap();
        let g = Graph::from_edges(5, [(0, 1), (2, 4)]).unwrap();
        let mut rng = stream(0, "t", 0);
        assert_eq!(noise_graph(&g, &s, 0, &mut rng).unwrap(), g);
        assert!(noise_graph(&g, &s, 9, &mut rng).is_err());
    }

    #[test]
    fn noise_is_deterministic_given_seed() {
        let s = NoiseSchedule::linear(8).unwrap();
        let g = Graph::complete(10);
        let a = noise_graph(&g, &s, 4, &mut stream(3, "t", 1)).unwrap();
        let b = noise_graph(&g, &s, 4, &mut stream(3, "t", 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complete_graph_edge_count_within_binomial_bound() {
        let s = NoiseSchedule::linear(32).unwrap();
        let (n, t, reps) = (30, 3, 200);
        let g = Graph::complete(n);
        let pairs = crate::graph::pair_count(n) as f64;
        let mut rng = stream(11, "t", 0);
        let total: usize = (0..reps)
            .map(|_| noise_graph(&g, &s, t, &mut rng).unwrap().edge_count())
            .sum();
        let b = s.beta_bar(t);
        let mean = total as f64 / reps as f64;
        let expected = (1.0 - b) * pairs;
        let sigma_of_mean = (pairs * b * (1.0 - b) / reps as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma_of_mean, "{mean} vs {expected}");
    }
}
