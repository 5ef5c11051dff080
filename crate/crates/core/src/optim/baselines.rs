//! Comparator heuristics: random search, self-adjusting and scheduled
//! (1+1) EAs, per-coordinate self-adaptation, and the (1+1)-ES with the
//! one-fifth success rule.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::lognormal::{lognormal_update_rate, DEFAULT_LEARNING_RATE};
use super::{Evaluator, OptRng, Optimizer};
use crate::error::{Error, Result};
use crate::space::{mutate, sample_binomial_positive, sample_uniform, Candidate, CoordinateDomain, SearchSpace};

macro_rules! incumbent_accessors {
    () => {
        fn incumbent(&self) -> &Candidate {
            &self.parent
        }

        fn replace_incumbent(&mut self, candidate: Candidate) {
            self.parent = candidate;
        }
    };
}

pub struct RandomSearch {
    space: Arc<SearchSpace>,
    parent: Candidate,
    rng: OptRng,
}

impl RandomSearch {
    pub fn new(space: Arc<SearchSpace>, start: Candidate, rng: OptRng) -> Self {
        Self { space, parent: start, rng }
    }
}

impl Optimizer for RandomSearch {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let y = sample_uniform(&self.space, &mut self.rng);
        if let Some(loss) = eval.evaluate(&y.values)? {
            if loss <= self.parent.loss_or_inf() {
                self.parent = Candidate::evaluated(y.values, loss);
            }
        }
        Ok(())
    }

    incumbent_accessors!();
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub factor: f64,
    pub exponent: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub initial_p: f64,
}

impl AdaptiveConfig {
    /// `F = 2`, `s = 1`, rates clamped to `[1/(4n), 1/2]`, starting at `1/n`.
    pub fn for_dim(n: usize) -> Self {
        let p_min = 1.0 / (4.0 * n as f64);
        let p_max = 0.5;
        Self { factor: 2.0, exponent: 1.0, p_min, p_max, initial_p: (1.0 / n as f64).clamp(p_min, p_max) }
    }
}

/// Self-adjusting (1+1) EA: `p <- F^s p` after an offspring at least as good
/// as its parent, `p <- p / F` otherwise.
pub struct Adaptive {
    space: Arc<SearchSpace>,
    config: AdaptiveConfig,
    parent: Candidate,
    rate: f64,
    rng: OptRng,
}

impl Adaptive {
    pub fn new(space: Arc<SearchSpace>, config: AdaptiveConfig, start: Candidate, rng: OptRng) -> Result<Self> {
        if !(config.factor > 1.0) {
            return Err(Error::InvalidArgument(format!("adaptive factor must exceed 1, got {}", config.factor)));
        }
        if !(0.0 < config.p_min && config.p_min <= config.p_max && config.p_max < 1.0) {
            return Err(Error::InvalidArgument("adaptive clamps must satisfy 0 < p_min <= p_max < 1".into()));
        }
        let rate = config.initial_p.clamp(config.p_min, config.p_max);
        Ok(Self { space, config, parent: start, rate, rng })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Rate after one success or failure.
    pub fn next_rate(&self, success: bool) -> f64 {
        let c = &self.config;
        if success {
            (self.rate * c.factor.powf(c.exponent)).min(c.p_max)
        } else {
            (self.rate / c.factor).max(c.p_min)
        }
    }
}

impl Optimizer for Adaptive {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let ell = sample_binomial_positive(self.space.dim(), self.rate, &mut self.rng)?;
        let y = mutate(&self.space, &self.parent.values, ell, &mut self.rng)?;
        if let Some(loss) = eval.evaluate(&y.values)? {
            let success = loss <= self.parent.loss_or_inf();
            self.rate = self.next_rate(success);
            if success {
                self.parent = Candidate::evaluated(y.values, loss);
            }
        }
        Ok(())
    }

    incumbent_accessors!();
}

/// Deterministic harmonic strength schedule `max(1, floor(n / (t + 2)))`.
pub fn lengler_strength(n: usize, t: u64) -> usize {
    let divisor = t.saturating_add(2);
    ((n as u64 / divisor) as usize).max(1)
}

/// (1+1) EA with a scheduled, decreasing mutation strength.
pub struct Lengler {
    space: Arc<SearchSpace>,
    parent: Candidate,
    iteration: u64,
    rng: OptRng,
}

impl Lengler {
    pub fn new(space: Arc<SearchSpace>, start: Candidate, rng: OptRng) -> Self {
        Self { space, parent: start, iteration: 0, rng }
    }
}

impl Optimizer for Lengler {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let ell = lengler_strength(self.space.dim(), self.iteration);
        self.iteration += 1;
        let y = mutate(&self.space, &self.parent.values, ell, &mut self.rng)?;
        if let Some(loss) = eval.evaluate(&y.values)? {
            if loss <= self.parent.loss_or_inf() {
                self.parent = Candidate::evaluated(y.values, loss);
            }
        }
        Ok(())
    }

    incumbent_accessors!();
}

/// Indices of an independent Bernoulli(`rates[i]`) mask conditioned on being
/// non-empty.
///
/// The first selected index is drawn from its exact conditional law and the
/// later ones independently, which is the distribution obtained by redrawing
/// the empty mask until it is not empty.
pub fn sample_nonempty_mask<R: Rng + ?Sized>(rates: &[f64], rng: &mut R) -> Vec<usize> {
    assert!(!rates.is_empty(), "mask over zero coordinates");
    let log_none: f64 = rates.iter().map(|&p| (-p).ln_1p()).sum();
    let total = -log_none.exp_m1();
    let target = rng.random::<f64>() * total;

    let mut first = rates.len() - 1;
    let mut cum = 0.0;
    let mut log_prefix: f64 = 0.0;
    for (j, &p) in rates.iter().enumerate() {
        cum += p * log_prefix.exp();
        if cum >= target {
            first = j;
            break;
        }
        log_prefix += (-p).ln_1p();
    }
    let mut mask = vec![first];
    for (i, &p) in rates.iter().enumerate().skip(first + 1) {
        if rng.random::<f64>() < p {
            mask.push(i);
        }
    }
    mask
}

/// (1+1) EA with one self-adapted mutation rate per coordinate.
///
/// Every rate is perturbed log-normally for the offspring; coordinate `i`
/// changes with its own rate. The offspring's rates are kept when it is
/// accepted.
pub struct Anisotropic {
    space: Arc<SearchSpace>,
    parent: Candidate,
    rates: Vec<f64>,
    gamma: f64,
    rng: OptRng,
}

impl Anisotropic {
    pub const INITIAL_RATE: f64 = 0.2;

    pub fn new(space: Arc<SearchSpace>, start: Candidate, rng: OptRng) -> Self {
        let rates = vec![Self::INITIAL_RATE; space.dim()];
        Self { space, parent: start, rates, gamma: DEFAULT_LEARNING_RATE, rng }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl Optimizer for Anisotropic {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let rates: Vec<f64> = self
            .rates
            .iter()
            .map(|&p| {
                let q: f64 = self.rng.sample(StandardNormal);
                lognormal_update_rate(p, q, self.gamma)
            })
            .collect();
        let mut y = self.parent.values.clone();
        for i in sample_nonempty_mask(&rates, &mut self.rng) {
            y[i] = self.space.coords()[i].resample_distinct(y[i], &mut self.rng)?;
        }
        if let Some(loss) = eval.evaluate(&y)? {
            if loss <= self.parent.loss_or_inf() {
                self.parent = Candidate::evaluated(y, loss);
                self.rates = rates;
            }
        }
        Ok(())
    }

    incumbent_accessors!();
}

/// (1+1)-ES with isotropic Gaussian steps, clamped to the box, and the
/// multiplicative one-fifth rule on a strict improvement.
pub struct OneFifthEs {
    bounds: Vec<(f64, f64)>,
    parent: Candidate,
    sigma: f64,
    rng: OptRng,
}

impl OneFifthEs {
    pub const GROW: f64 = 1.0 / 3.0;
    pub const SHRINK: f64 = -1.0 / 12.0;

    pub fn new(space: &SearchSpace, start: Candidate, rng: OptRng) -> Result<Self> {
        let bounds = space
            .coords()
            .iter()
            .map(|d| match *d {
                CoordinateDomain::Real { lo, hi } => Ok((lo, hi)),
                other => Err(Error::InvalidSpace(format!("one-fifth-es needs real coordinates, found {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let sigma = bounds.iter().map(|(lo, hi)| (hi - lo) / 6.0).sum::<f64>() / bounds.len() as f64;
        Ok(Self { bounds, parent: start, sigma, rng })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Optimizer for OneFifthEs {
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()> {
        let y: Vec<f64> = self
            .parent
            .values
            .iter()
            .zip(&self.bounds)
            .map(|(&x, &(lo, hi))| {
                let z: f64 = self.rng.sample(StandardNormal);
                (x + self.sigma * z).clamp(lo, hi)
            })
            .collect();
        if let Some(loss) = eval.evaluate(&y)? {
            let parent_loss = self.parent.loss_or_inf();
            self.sigma *= if loss < parent_loss { Self::GROW.exp() } else { Self::SHRINK.exp() };
            if loss <= parent_loss {
                self.parent = Candidate::evaluated(y, loss);
            }
        }
        Ok(())
    }

    incumbent_accessors!();
}
