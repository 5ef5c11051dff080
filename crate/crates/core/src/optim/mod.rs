//! Black-box optimizers and the fixed-budget run driver.
//!
//! All optimizers minimize. An [`Optimizer`] owns an evaluated incumbent and
//! advances one iteration per [`Optimizer::step`], spending evaluations through
//! an [`Evaluator`] that enforces the budget and records the best-so-far trace.

mod baselines;
mod lognormal;
mod registry;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::modifiers::LossWrapperConfig;
use crate::space::{sample_uniform, Candidate, SearchSpace};

pub use baselines::{
    lengler_strength, sample_nonempty_mask, Adaptive, AdaptiveConfig, Anisotropic, Lengler, OneFifthEs, RandomSearch,
};
pub use lognormal::{lognormal_update_rate, select_offspring, LogNormal, LogNormalConfig, DEFAULT_LEARNING_RATE};
pub use registry::{
    resolve_alias, AlgorithmSpec, BaseAlgorithm, LogNormalPreset, ALGORITHM_ALIASES, BASE_ALGORITHM_IDS,
};

/// Seeded stream used by every optimizer.
pub type OptRng = ChaCha8Rng;

pub(crate) fn stream(seed: u64, stream: u64) -> OptRng {
    let mut rng = OptRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic black-box loss over a search space.
pub trait Objective {
    fn space(&self) -> &SearchSpace;

    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;

    fn name(&self) -> &str {
        "objective"
    }
}

/// Budget-enforcing gateway between an optimizer and its objective.
pub struct Evaluator<'a> {
    objective: &'a mut dyn Objective,
    budget: usize,
    trace: Vec<f64>,
    best: Option<Candidate>,
    stop_below: Option<f64>,
    stopped: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a mut dyn Objective, budget: usize) -> Self {
        Self {
            objective,
            budget,
            trace: Vec::with_capacity(budget.min(1 << 16)),
            best: None,
            stop_below: None,
            stopped: false,
        }
    }

    /// Stops accepting evaluations right after the first loss strictly below `threshold`.
    pub fn stop_below(mut self, threshold: f64) -> Self {
        self.stop_below = Some(threshold);
        self
    }

    /// Returns `None` once the budget is spent or the stop condition fired.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<Option<f64>> {
        if self.is_done() {
            return Ok(None);
        }
        let loss = self.objective.evaluate(x)?;
        if loss.is_nan() {
            return Err(Error::Evaluation("objective returned NaN".into()));
        }
        let best = match &self.best {
            Some(b) if b.loss_or_inf() <= loss => b.loss_or_inf(),
            _ => {
                self.best = Some(Candidate::evaluated(x.to_vec(), loss));
                loss
            }
        };
        self.trace.push(best);
        if matches!(self.stop_below, Some(t) if loss < t) {
            self.stopped = true;
        }
        Ok(Some(loss))
    }

    pub fn is_done(&self) -> bool {
        self.stopped || self.trace.len() >= self.budget
    }

    pub fn stopped_early(&self) -> bool {
        self.stopped
    }

    pub fn used(&self) -> usize {
        self.trace.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.best.as_ref()
    }

    fn into_parts(self) -> (Vec<f64>, Option<Candidate>) {
        (self.trace, self.best)
    }
}

pub trait Optimizer: Send {
    /// One iteration. Must evaluate at least once unless the evaluator is done.
    fn step(&mut self, eval: &mut Evaluator<'_>) -> Result<()>;

    fn incumbent(&self) -> &Candidate;

    /// Overrides the incumbent; `candidate.loss` must be set.
    fn replace_incumbent(&mut self, candidate: Candidate);
}

/// Outcome of one fixed-budget run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algo: String,
    pub problem: String,
    pub budget: usize,
    pub seed: u64,
    pub final_loss: f64,
    /// Best-so-far loss after each evaluation.
    pub trace: Vec<f64>,
    /// Best point as handed to the underlying objective (after any loss modifier).
    pub best: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting point; a uniform sample when absent.
    pub initial: Option<Vec<f64>>,
    /// Early stop on the first loss strictly below this value.
    pub stop_below: Option<f64>,
    /// Parameters of the G/SM/GSM loss modifiers.
    pub loss_wrapper: LossWrapperConfig,
}

/// Runs `algo_id` on `objective` for exactly `budget` evaluations.
pub fn run(algo_id: &str, objective: &mut dyn Objective, budget: usize, seed: u64) -> Result<RunRecord> {
    let spec = AlgorithmSpec::parse(algo_id)?;
    run_with(&spec, objective, budget, seed, &RunOptions::default())
}

pub fn run_with(
    spec: &AlgorithmSpec,
    objective: &mut dyn Objective,
    budget: usize,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let problem = objective.name().to_string();
    let space = Arc::new(objective.space().clone());
    let transform = spec.loss_transform(&space, &options.loss_wrapper)?;
    let mut wrapped;
    let target: &mut dyn Objective = match &transform {
        Some(t) => {
            wrapped = t.wrap(objective);
            &mut wrapped
        }
        None => objective,
    };

    let mut rng = stream(seed, 0);
    let start = match &options.initial {
        Some(x) if space.contains(x) => x.clone(),
        Some(_) => return Err(Error::InvalidArgument("initial point does not conform to the search space".into())),
        None => sample_uniform(&space, &mut rng).values,
    };

    let mut eval = Evaluator::new(target, budget);
    if let Some(t) = options.stop_below {
        eval = eval.stop_below(t);
    }
    let start_loss = eval.evaluate(&start)?.expect("a fresh evaluator with a positive budget accepts one evaluation");
    let mut optimizer = spec.build(space, Candidate::evaluated(start, start_loss), rng, seed)?;
    while !eval.is_done() {
        let before = eval.used();
        optimizer.step(&mut eval)?;
        if eval.used() == before && !eval.is_done() {
            return Err(Error::Evaluation(format!("{} made no progress in one step", spec.id())));
        }
    }

    let evaluations = eval.used();
    let (trace, best) = eval.into_parts();
    let best = best.expect("at least one evaluation happened");
    let final_loss = best.loss_or_inf();
    let best = match &transform {
        Some(t) => t.apply(&best.values),
        None => best.values,
    };
    Ok(RunRecord { algo: spec.id().to_string(), problem, budget, seed, final_loss, trace, best, evaluations })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Objective replaying a fixed loss sequence, then a constant.
    pub struct Scripted {
        pub space: SearchSpace,
        pub losses: Vec<f64>,
        pub fallback: f64,
        pub calls: usize,
        pub seen: Vec<Vec<f64>>,
    }

    impl Scripted {
        pub fn new(space: SearchSpace, losses: Vec<f64>, fallback: f64) -> Self {
            Self { space, losses, fallback, calls: 0, seen: Vec::new() }
        }
    }

    impl Objective for Scripted {
        fn space(&self) -> &SearchSpace {
            &self.space
        }

        fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
            let loss = self.losses.get(self.calls).copied().unwrap_or(self.fallback);
            self.calls += 1;
            self.seen.push(x.to_vec());
            Ok(loss)
        }
    }

    pub struct FnObjective<F: FnMut(&[f64]) -> f64> {
        pub space: SearchSpace,
        pub f: F,
    }

    impl<F: FnMut(&[f64]) -> f64> Objective for FnObjective<F> {
        fn space(&self) -> &SearchSpace {
            &self.space
        }

        fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
            Ok((self.f)(x))
        }
    }

    pub fn onemax(n: usize) -> FnObjective<impl FnMut(&[f64]) -> f64> {
        FnObjective { space: SearchSpace::boolean(n).unwrap(), f: move |x: &[f64]| n as f64 - x.iter().sum::<f64>() }
    }
}
