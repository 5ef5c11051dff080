//! `bbo` command line: benchmark grids, ranking and detector attacks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 partial failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attack::{
    attack_dataset, generate_synthetic_fakes, write_attack_csv, AttackConfig, AttackStatus, DetectorSpec, Image,
    DEFAULT_BUDGET, DEFAULT_LINF, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::harness::{
    compute_scores, emit_report, read_results_csv, run_grid, stability_report, write_scores_csv, write_stability_csv,
    GridConfig, ReportHeader, ScoreTable, StabilityEntry,
};
use crate::optim::{AlgorithmSpec, RunRecord};
use crate::problems::{default_budget_grid, suite};

pub const SEED_ENV: &str = "BBO_SEED";
/// Seed of the `synthetic:<count>` image set, fixed so that attack seeds stay paired.
pub const SYNTHETIC_DATASET_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "bbo", version, about = "Log-normal evolutionary optimization: benchmarks, ranking, detector attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Benchmark grids.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
    /// Score and rank algorithms from a results CSV.
    Rank(RankArgs),
    /// Black-box attacks on a detector.
    Attack {
        #[command(subcommand)]
        action: AttackAction,
    },
}

#[derive(Debug, Subcommand)]
enum BenchAction {
    /// Run every (algorithm, problem, budget, seed) cell once.
    Run(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum AttackAction {
    /// Attack every image the detector flags as fake.
    Run(AttackArgs),
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Suite id: discrete, deceptive or sphere.
    #[arg(long)]
    suite: String,
    /// Comma-separated algorithm ids.
    #[arg(long, value_delimiter = ',', required = true)]
    algos: Vec<String>,
    /// `default` or a comma-separated list of budgets.
    #[arg(long, default_value = "default")]
    budgets: String,
    /// Runs per cell.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Global seed; the BBO_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write best-so-far traces to traces.bin.
    #[arg(long)]
    traces: bool,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// `builtin:<seed>` or `subprocess:<command>`.
    #[arg(long)]
    detector: String,
    /// Directory of binary PPM files, or `synthetic:<count>`.
    #[arg(long)]
    images: String,
    #[arg(long, default_value = "algo1")]
    algo: String,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_LINF)]
    linf: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write attacked images as PPM under images/.
    #[arg(long)]
    save_images: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Spend the whole budget even after the score drops below the threshold.
    #[arg(long)]
    no_early_stop: bool,
}

/// Canonical description of a command, written into every output header.
/// Execution settings that cannot change results (output directory, thread
/// count) are left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Bench {
        suite: String,
        algos: Vec<String>,
        budgets: Vec<usize>,
        seeds: u64,
        seed: u64,
        traces: bool,
    },
    Rank {
        results: String,
    },
    Attack {
        detector: String,
        images: String,
        algo: String,
        budget: usize,
        linf: f64,
        seed: u64,
        threshold: f64,
        early_stop: bool,
        save_images: bool,
    },
}

impl RunConfig {
    /// Single-line JSON with a fixed key order.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_canonical(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("bad config: {e}")))
    }

    fn header(&self) -> ReportHeader {
        ReportHeader::new(self.canonical())
    }
}

enum Failure {
    Usage(String),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Evaluation(_) | Error::Protocol(_) => Failure::Partial(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn parallelism(requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(0) => Err(Error::InvalidArgument("parallelism must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}=`{v}` is not a seed"))),
        Err(_) => Ok(flag),
    }
}

fn parse_budgets(s: &str) -> Result<Vec<usize>> {
    if s.trim() == "default" {
        return Ok(default_budget_grid());
    }
    let budgets: Vec<usize> = s
        .split(',')
        .map(|b| {
            b.trim()
                .parse()
                .ok()
                .filter(|&v: &usize| v > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("bad budget `{b}`")))
        })
        .collect::<Result<_>>()?;
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("no budgets given".into()));
    }
    Ok(budgets)
}

/// The best-ranked algorithm against each of the others.
fn stability_against_leader(records: &[RunRecord], scores: &ScoreTable) -> Vec<(String, String, Vec<StabilityEntry>)> {
    let ranking = scores.ranking();
    let Some((leader, rest)) = ranking.split_first() else { return Vec::new() };
    rest.iter().map(|other| (leader.to_string(), other.to_string(), stability_report(records, leader, other))).collect()
}

fn cmd_bench(args: BenchArgs) -> std::result::Result<(), Failure> {
    let problems = suite(&args.suite)?;
    let algos: Vec<String> =
        args.algos.iter().map(|a| AlgorithmSpec::parse(a).map(|s| s.id())).collect::<Result<_>>()?;
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let budgets = parse_budgets(&args.budgets)?;
    let seed = effective_seed(args.seed)?;
    let grid = GridConfig {
        budgets: budgets.clone(),
        seeds: args.seeds,
        parallelism: parallelism(args.parallelism)?,
        global_seed: seed,
        keep_traces: args.traces,
    };
    let config = RunConfig::Bench {
        suite: args.suite.clone(),
        algos: algos.clone(),
        budgets,
        seeds: args.seeds,
        seed,
        traces: args.traces,
    };
    let outcome = run_grid(&algos, &problems, &grid)?;
    let scores = match compute_scores(&outcome.records) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("no ranking: {e}");
            None
        }
    };
    let stability = scores.as_ref().map(|s| stability_against_leader(&outcome.records, s)).unwrap_or_default();
    let files = emit_report(&args.out, &config.header(), &outcome.records, scores.as_ref(), &stability, args.traces)?;
    println!("{} runs written to {}", outcome.records.len(), files.results.display());
    if let Some(s) = &scores {
        for (i, algo) in s.ranking().iter().enumerate() {
            println!("{i:>3}  {algo}  {:.4}", s.score_of(algo).unwrap_or_default());
        }
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Partial(format!(
            "{} of {} runs failed",
            outcome.failures.len(),
            outcome.failures.len() + outcome.records.len()
        )))
    }
}

fn cmd_rank(args: RankArgs) -> std::result::Result<(), Failure> {
    let records = read_results_csv(&args.results).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("{}: {io}", args.results.display())),
        other => Failure::Usage(other.to_string()),
    })?;
    if records.is_empty() {
        return Err(Failure::Usage(format!("{}: no result rows", args.results.display())));
    }
    let config = RunConfig::Rank { results: args.results.display().to_string() };
    let scores = compute_scores(&records)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    write_scores_csv(&args.out.join("scores.csv"), &config.header(), &scores)?;
    write_stability_csv(
        &args.out.join("stability.csv"),
        &config.header(),
        &stability_against_leader(&records, &scores),
    )?;
    for (i, algo) in scores.ranking().iter().enumerate() {
        println!("{i:>3}  {algo}  {:.4}", scores.score_of(algo).unwrap_or_default());
    }
    Ok(())
}

/// Images from `synthetic:<count>` or a directory of `.ppm` files (sorted by
/// name). Unreadable files are skipped with a warning; their count is returned.
fn load_images(source: &str) -> Result<(Vec<(String, Image)>, usize)> {
    if let Some(count) = source.strip_prefix("synthetic:") {
        let count: usize =
            count.parse().map_err(|_| Error::InvalidArgument(format!("bad synthetic image count `{count}`")))?;
        let images = generate_synthetic_fakes(count, SYNTHETIC_DATASET_SEED)
            .into_iter()
            .enumerate()
            .map(|(i, img)| (format!("synthetic-{i:04}"), img))
            .collect();
        return Ok((images, 0));
    }
    let dir = Path::new(source);
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("`{source}` is neither a directory nor synthetic:<count>")));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    let mut skipped = 0;
    for path in paths {
        let id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        match Image::read_ppm(&path) {
            Ok(img) => images.push((id, img)),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                eprintln!("warning: skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    Ok((images, skipped))
}

fn cmd_attack(args: AttackArgs) -> std::result::Result<(), Failure> {
    let detector = DetectorSpec::parse(&args.detector)?;
    let mut attack = AttackConfig::new(&args.algo, args.budget, args.linf)?;
    attack.early_stop = !args.no_early_stop;
    let seed = effective_seed(args.seed)?;
    let workers = parallelism(args.parallelism)?;
    let config = RunConfig::Attack {
        detector: detector.to_string(),
        images: args.images.clone(),
        algo: attack.algo.id(),
        budget: attack.budget,
        linf: attack.linf,
        seed,
        threshold: DEFAULT_THRESHOLD,
        early_stop: attack.early_stop,
        save_images: args.save_images,
    };
    let (images, unreadable) = load_images(&args.images)?;
    if images.is_empty() && unreadable > 0 {
        return Err(Failure::Partial("no readable images".into()));
    }
    let summary = attack_dataset(&images, &detector, &attack, seed, workers)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    let csv = args.out.join("attack.csv");
    write_attack_csv(&csv, &config.header(), &summary, &attack, seed)?;
    if args.save_images {
        let dir = args.out.join("images");
        fs::create_dir_all(&dir).map_err(Error::from)?;
        for (row, (_, image)) in summary.rows.iter().zip(&images) {
            if let AttackStatus::Attacked(r) = &row.status {
                image.perturbed(&r.perturbation).write_ppm(&dir.join(format!("{}.ppm", row.image_id)))?;
            }
        }
    }
    let rate = summary.success_rate().map_or_else(|| "undefined".to_string(), |r| format!("{:.1}%", 100.0 * r));
    println!(
        "{} images: {} attacked, {} succeeded, {} skipped, {} errored; success rate {rate}",
        summary.rows.len(),
        summary.attacked,
        summary.successes,
        summary.skipped,
        summary.errored
    );
    println!("results written to {}", csv.display());
    if summary.errored > 0 {
        return Err(Failure::Partial(format!("{} errored attacks", summary.errored)));
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Bench { action: BenchAction::Run(a) } => cmd_bench(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Attack { action: AttackAction::Run(a) } => cmd_attack(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips() {
        let configs = [
            RunConfig::Bench {
                suite: "sphere".into(),
                algos: vec!["rs".into(), "gsm-supersmooth-lognormal".into()],
                budgets: default_budget_grid(),
                seeds: 3,
                seed: 11,
                traces: false,
            },
            RunConfig::Rank { results: "out/results.csv".into() },
            RunConfig::Attack {
                detector: "subprocess:python3 -m det".into(),
                images: "synthetic:10".into(),
                algo: "rs".into(),
                budget: 100,
                linf: 0.03,
                seed: 0,
                threshold: 0.5,
                early_stop: true,
                save_images: false,
            },
        ];
        for c in configs {
            let text = c.canonical();
            assert!(!text.contains('\n'));
            assert_eq!(RunConfig::from_canonical(&text).unwrap(), c);
            assert_eq!(RunConfig::from_canonical(&text).unwrap().canonical(), text);
        }
        assert!(RunConfig::Rank { results: "r".into() }.canonical().starts_with(r#"{"command":"rank""#));
    }

    #[test]
    fn budgets_flag() {
        assert_eq!(parse_budgets("default").unwrap(), default_budget_grid());
        assert_eq!(parse_budgets("25, 50").unwrap(), vec![25, 50]);
        assert!(parse_budgets("0").is_err());
        assert!(parse_budgets("ten").is_err());
    }
}
