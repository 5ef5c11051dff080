//! Fixed-budget experiment grids, pairwise scoring and report emission.

mod report;
mod scores;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::{run_with, AlgorithmSpec, RunOptions, RunRecord};
use crate::problems::ProblemInstance;

pub use report::{
    emit_report, format_label, read_results_csv, read_trace_sidecar, write_results_csv, write_scores_csv,
    write_stability_csv, write_trace_sidecar, ReportFiles, ReportHeader,
};
pub use scores::{compute_scores, mean_losses, stability_report, ScoreTable, StabilityEntry};

/// A run that errored instead of producing a record.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub algo: String,
    pub problem: String,
    pub budget: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub budgets: Vec<usize>,
    pub seeds: u64,
    pub parallelism: usize,
    pub global_seed: u64,
    /// Keep best-so-far traces in the records (memory grows with the budget sum).
    pub keep_traces: bool,
}

/// Seed of one grid cell, independent of every other cell.
pub fn cell_seed(global_seed: u64, algo: &str, problem: &str, budget: usize, seed_index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    for part in [algo.as_bytes(), problem.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update((budget as u64).to_le_bytes());
    h.update(seed_index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs every (algorithm, problem, budget, seed index) cell once.
///
/// Records come back in grid order (algorithm, problem, budget, seed)
/// regardless of parallelism; `RunRecord::seed` holds the seed index.
pub fn run_grid(algos: &[String], problems: &[ProblemInstance], config: &GridConfig) -> Result<GridOutcome> {
    if algos.is_empty() || problems.is_empty() || config.budgets.is_empty() || config.seeds == 0 {
        return Err(Error::InvalidArgument("grid needs algorithms, problems, budgets and seeds".into()));
    }
    if config.budgets.contains(&0) {
        return Err(Error::InvalidArgument("budgets must be at least 1".into()));
    }
    let specs: Vec<AlgorithmSpec> = algos.iter().map(|a| AlgorithmSpec::parse(a)).collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (ai, spec) in specs.iter().enumerate() {
        for (pi, _) in problems.iter().enumerate() {
            for &budget in &config.budgets {
                for s in 0..config.seeds {
                    cells.push((ai, spec, pi, budget, s));
                }
            }
        }
    }

    let run_cell = |&(ai, spec, pi, budget, s): &(usize, &AlgorithmSpec, usize, usize, u64)| {
        let mut problem = problems[pi].clone();
        let seed = cell_seed(config.global_seed, &algos[ai], problem.id(), budget, s);
        run_with(spec, &mut problem, budget, seed, &RunOptions::default())
            .map(|mut rec| {
                rec.algo = algos[ai].clone();
                rec.seed = s;
                if !config.keep_traces {
                    rec.trace = Vec::new();
                }
                rec
            })
            .map_err(|e| RunFailure {
                algo: algos[ai].clone(),
                problem: problems[pi].id().to_string(),
                budget,
                seed: s,
                message: e.to_string(),
            })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut out = GridOutcome::default();
    for r in results {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(f) => {
                log::warn!("run {}/{}/{}/{} failed: {}", f.algo, f.problem, f.budget, f.seed, f.message);
                out.failures.push(f);
            }
        }
    }
    Ok(out)
}
