use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::optim::RunRecord;

type CellKey = (String, usize);

/// Mean final loss per algorithm and (problem, budget) cell.
pub fn mean_losses(records: &[RunRecord]) -> BTreeMap<String, BTreeMap<CellKey, f64>> {
    let mut sums: BTreeMap<String, BTreeMap<CellKey, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.algo.clone()).or_default().entry((r.problem.clone(), r.budget)).or_insert((0.0, 0));
        e.0 += r.final_loss;
        e.1 += 1;
    }
    sums.into_iter().map(|(a, cells)| (a, cells.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Algorithm ids in lexicographic order; all other fields are indexed alike.
    pub algos: Vec<String>,
    /// `pairwise[i][j]`: fraction of common cells where `algos[i]` has a
    /// strictly lower mean loss than `algos[j]`.
    pub pairwise: Vec<Vec<f64>>,
    /// Row means of `pairwise`, diagonal included.
    pub score: Vec<f64>,
    /// 0 is best; descending score, ties by id.
    pub rank: Vec<usize>,
}

impl ScoreTable {
    pub fn index_of(&self, algo: &str) -> Option<usize> {
        self.algos.iter().position(|a| a == algo)
    }

    pub fn score_of(&self, algo: &str) -> Option<f64> {
        self.index_of(algo).map(|i| self.score[i])
    }

    /// Algorithm ids from best to worst.
    pub fn ranking(&self) -> Vec<&str> {
        let mut order: Vec<usize> = (0..self.algos.len()).collect();
        order.sort_by_key(|&i| self.rank[i]);
        order.into_iter().map(|i| self.algos[i].as_str()).collect()
    }
}

pub fn compute_scores(records: &[RunRecord]) -> Result<ScoreTable> {
    let means = mean_losses(records);
    if means.is_empty() {
        return Err(Error::Scoring("no records to score".into()));
    }
    let algos: Vec<String> = means.keys().cloned().collect();
    let tables: Vec<&BTreeMap<CellKey, f64>> = means.values().collect();
    let n = algos.len();
    let mut pairwise = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (mut common, mut wins) = (0usize, 0usize);
            for (cell, &li) in tables[i] {
                if let Some(&lj) = tables[j].get(cell) {
                    common += 1;
                    if li < lj {
                        wins += 1;
                    }
                }
            }
            if common == 0 {
                return Err(Error::Scoring(format!(
                    "`{}` and `{}` share no (problem, budget) cell",
                    algos[i], algos[j]
                )));
            }
            pairwise[i][j] = wins as f64 / common as f64;
        }
    }
    let score: Vec<f64> = pairwise.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then_with(|| algos[a].cmp(&algos[b])));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Ok(ScoreTable { algos, pairwise, score, rank })
}

/// How long `algo_a` has led `algo_b` on one problem, counted from the largest budget down.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEntry {
    pub problem: String,
    /// Number of largest consecutive budgets where A's mean loss is strictly below B's.
    pub k: usize,
    /// `2^-k`: chance of such a streak if A and B had the same distribution.
    pub bound: f64,
    /// Budgets where both algorithms have results.
    pub budgets: usize,
}

pub fn stability_report(records: &[RunRecord], algo_a: &str, algo_b: &str) -> Vec<StabilityEntry> {
    let means = mean_losses(records);
    let empty = BTreeMap::new();
    let a = means.get(algo_a).unwrap_or(&empty);
    let b = means.get(algo_b).unwrap_or(&empty);
    let problems: BTreeSet<&String> = a.keys().map(|(p, _)| p).collect();
    let mut out = Vec::new();
    for problem in problems {
        let mut pairs: Vec<(usize, f64, f64)> = a
            .iter()
            .filter(|((p, _), _)| p == problem)
            .filter_map(|((p, budget), &la)| b.get(&(p.clone(), *budget)).map(|&lb| (*budget, la, lb)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        pairs.sort_by_key(|&(budget, _, _)| std::cmp::Reverse(budget));
        let k = pairs.iter().take_while(|&&(_, la, lb)| la < lb).count();
        out.push(StabilityEntry { problem: problem.clone(), k, bound: 0.5f64.powi(k as i32), budgets: pairs.len() });
    }
    out
}
