use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Evaluator, OptRng, Optimizer};
use crate::error::{Error, Result};
use crate::space::{mutate, sample_binomial_positive, Candidate, SearchSpace};

pub const DEFAULT_LEARNING_RATE: f64 = 0.22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalConfig {
    pub initial_p: f64,
    pub lambda: usize,
    pub gamma: f64,
}

impl LogNormalConfig {
    pub fn new(initial_p: f64, lambda: usize) -> Result<Self> {
        if !(initial_p > 0.0 && initial_p < 1.0) {
            return Err(Error::InvalidArgument(format!("initial rate must lie in (0,1), got {initial_p}")));
        }
        if lambda == 0 {
            return Err(Error::InvalidArgument("population size must be at least 1".into()));
        }
        Ok(Self { initial_p, lambda, gamma: DEFAULT_LEARNING_RATE })
    }
}

/// Log-normal self-adaptation of a mutation rate: the odds `(1-p)/p` are
/// scaled by `exp(gamma * q)`. `q = 0` is a fixed point, so with `q` standard
/// normal the median new rate equals `p`.
///
/// The result is kept inside `(0, 1)` at the floating-point extremes.
pub fn lognormal_update_rate(p: f64, q: f64, gamma: f64) -> f64 {
    let odds = (1.0 - p) / p * (gamma * q).exp();
    (1.0 / (1.0 + odds)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Picks the first offspring with the smallest loss and decides whether it
/// replaces a parent of loss `parent_loss` (ties accepted).
pub fn select_offspring(parent_loss: f64, losses: &[f64]) -> Option<(usize, bool)> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if best.is_none_or(|b| l < losses[b]) {
            best = Some(i);
        }
    }
    best.map(|i| (i, losses[i] <= parent_loss))
}

/// (1+λ) EA with log-normal mutation-rate self-adaptation over any mixed space.
pub struct LogNormal {
    space: Arc<SearchSpace>,
    config: LogNormalConfig,
    parent: Candidate,
    rate: f64,
    rng: OptRng,
}

impl LogNormal {
    pub fn new(space: Arc<SearchSpace>, config: LogNormalConfig, start: Candidate, rng: OptRng) -> Self {
        Self { space, rate: config.initial_p, config, parent: start, rng }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Optimizer for LogNormal {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let n = self.space.dim();
        let mut losses = Vec::with_capacity(self.config.lambda);
        let mut rates = Vec::with_capacity(self.config.lambda);
        let mut best: Option<Vec<f64>> = None;
        let mut best_loss = f64::INFINITY;
        for _ in 0..self.config.lambda {
            if eval.is_done() {
                break;
            }
            let q: f64 = self.rng.sample(StandardNormal);
            let rate = lognormal_update_rate(self.rate, q, self.config.gamma);
            let ell = sample_binomial_positive(n, rate, &mut self.rng)?;
            let child = mutate(&self.space, &self.parent.values, ell, &mut self.rng)?;
            let Some(loss) = eval.evaluate(&child.values)? else {
                break;
            };
            if best.is_none() || loss < best_loss {
                best_loss = loss;
                best = Some(child.values);
            }
            losses.push(loss);
            rates.push(rate);
        }
        if let Some((i, accept)) = select_offspring(self.parent.loss_or_inf(), &losses) {
            self.rate = rates[i];
            if accept {
                let values = best.expect("selected offspring was kept");
                self.parent = Candidate::evaluated(values, losses[i]);
            }
        }
        Ok(())
    }

    fn incumbent(&self) -> &Candidate {
        &self.parent
    }

    fn replace_incumbent(&mut self, candidate: Candidate) {
        self.parent = candidate;
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::{run, stream, Evaluator};
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_draw_is_fixed_point() {
        assert_eq!(lognormal_update_rate(0.2, 0.0, 0.22), 0.2);
        for p in [1e-6, 0.01, 0.5, 0.93] {
            assert!((lognormal_update_rate(p, 0.0, 0.22) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_value() {
        // 1 / (1 + e^0.22)
        assert!((lognormal_update_rate(0.5, 1.0, 0.22) - 0.445_220_764_892_785_2).abs() < 1e-15);
    }

    #[test]
    fn limits_and_monotonicity() {
        assert!(lognormal_update_rate(0.2, 1e4, 0.22) < 1e-300);
        assert!(lognormal_update_rate(0.2, -1e4, 0.22) > 1.0 - 1e-15);
        let qs: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.2).collect();
        let ps: Vec<f64> = qs.iter().map(|&q| lognormal_update_rate(0.2, q, 0.22)).collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
        assert!(ps.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn median_is_preserved() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut draws: Vec<f64> =
            (0..100_000).map(|_| lognormal_update_rate(0.3, rng.sample(StandardNormal), 0.22)).collect();
        draws.sort_by(f64::total_cmp);
        assert!((draws[draws.len() / 2] - 0.3).abs() < 0.01);
    }

    #[test]
    fn first_best_offspring_wins_ties() {
        assert_eq!(select_offspring(2.0, &[3.0, 1.0, 1.0]), Some((1, true)));
        assert_eq!(select_offspring(0.5, &[3.0, 1.0, 1.0]), Some((1, false)));
        assert_eq!(select_offspring(1.0, &[1.0, 1.0]), Some((0, true)));
        assert_eq!(select_offspring(1.0, &[]), None);
    }

    #[test]
    fn generation_adopts_rate_of_first_best() {
        let space = Arc::new(SearchSpace::boolean(16).unwrap());
        let config = LogNormalConfig::new(0.2, 3).unwrap();
        let start = Candidate::evaluated(vec![0.0; 16], 2.0);
        let mut obj = Scripted::new((*space).clone(), vec![3.0, 1.0, 1.0], 9.0);

        // Replay the optimizer's draws to recover the second offspring's rate.
        let mut replay = stream(5, 0);
        let mut expected_rates = Vec::new();
        for _ in 0..3 {
            let q: f64 = replay.sample(StandardNormal);
            let r = lognormal_update_rate(0.2, q, 0.22);
            let ell = sample_binomial_positive(16, r, &mut replay).unwrap();
            let child = mutate(&space, &start.values, ell, &mut replay).unwrap().values;
            expected_rates.push((r, child));
        }

        let mut opt = LogNormal::new(space, config, start, stream(5, 0));
        let mut eval = Evaluator::new(&mut obj, 10);
        opt.step(&mut eval).unwrap();
        assert_eq!(opt.rate(), expected_rates[1].0);
        assert_eq!(opt.incumbent().loss, Some(1.0));
        assert_eq!(opt.incumbent().values, expected_rates[1].1);
    }

    #[test]
    fn constant_objective_always_moves_and_keeps_rate_valid() {
        let space = Arc::new(SearchSpace::boolean(12).unwrap());
        let config = LogNormalConfig::new(0.2, 1).unwrap();
        let mut obj = FnObjective { space: (*space).clone(), f: |_: &[f64]| 1.0 };
        let mut opt = LogNormal::new(space, config, Candidate::evaluated(vec![0.0; 12], 1.0), stream(3, 0));
        let mut eval = Evaluator::new(&mut obj, 5000);
        let mut prev = opt.incumbent().values.clone();
        while !eval.is_done() {
            opt.step(&mut eval).unwrap();
            assert_ne!(opt.incumbent().values, prev);
            prev = opt.incumbent().values.clone();
            assert!(opt.rate() > 0.0 && opt.rate() < 1.0);
        }
    }

    #[test]
    fn partial_generation_is_still_selected() {
        let space = Arc::new(SearchSpace::boolean(8).unwrap());
        let config = LogNormalConfig::new(0.2, 12).unwrap();
        let mut obj = Scripted::new((*space).clone(), vec![4.0, 0.5], 9.0);
        let mut opt = LogNormal::new(space, config, Candidate::evaluated(vec![0.0; 8], 2.0), stream(0, 0));
        let mut eval = Evaluator::new(&mut obj, 2);
        opt.step(&mut eval).unwrap();
        assert_eq!(eval.used(), 2);
        assert_eq!(opt.incumbent().loss, Some(0.5));
    }

    #[test]
    fn onemax_small_is_solved_on_every_seed() {
        for seed in 0..30 {
            let mut obj = onemax(20);
            let rec = run("lognormal", &mut obj, 5000, seed).unwrap();
            assert_eq!(rec.final_loss, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(LogNormalConfig::new(0.0, 1).is_err());
        assert!(LogNormalConfig::new(1.0, 1).is_err());
        assert!(LogNormalConfig::new(0.2, 0).is_err());
    }
}
