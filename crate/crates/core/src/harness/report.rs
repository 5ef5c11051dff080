use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optim::RunRecord;

use super::scores::{mean_losses, ScoreTable, StabilityEntry};

pub const RESULTS_COLUMNS: [&str; 5] = ["algo", "problem", "budget", "seed", "final_loss"];

/// Provenance line written at the top of every text output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportHeader {
    pub version: String,
    /// Canonical single-line JSON of the run configuration.
    pub config: String,
}

impl ReportHeader {
    pub fn new(config: String) -> Self {
        Self { version: env!("CARGO_PKG_VERSION").to_string(), config }
    }

    pub fn line(&self) -> String {
        format!("bbo {} config={}", self.version, self.config)
    }

    fn write_comment(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# {}", self.line())
    }

    fn xml_comment(&self) -> String {
        format!("<!-- {} -->", self.line().replace("--", "- -"))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_results_csv(path: &Path, header: &ReportHeader, records: &[RunRecord]) -> Result<()> {
    let mut out = create(path)?;
    header.write_comment(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.algo.clone(),
            r.problem.clone(),
            r.budget.to_string(),
            r.seed.to_string(),
            r.final_loss.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results CSV; `#` lines are comments. Traces are not stored in the
/// CSV, so records come back with empty traces.
pub fn read_results_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let context = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse { context: context.clone(), line, message };
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(BufReader::new(File::open(path)?));
    let headers = reader.headers().map_err(|e| parse_err(line_of(&e), e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_COLUMNS {
        let line = headers.position().map_or(1, |p| p.line());
        return Err(parse_err(line, format!("expected columns {}", RESULTS_COLUMNS.join(","))));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(line_of(&e), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or_default();
        let budget: usize = field(2).parse().map_err(|_| parse_err(line, format!("bad budget `{}`", field(2))))?;
        let seed: u64 = field(3).parse().map_err(|_| parse_err(line, format!("bad seed `{}`", field(3))))?;
        let final_loss: f64 =
            field(4).parse().map_err(|_| parse_err(line, format!("bad final_loss `{}`", field(4))))?;
        if field(0).is_empty() || field(1).is_empty() {
            return Err(parse_err(line, "empty algo or problem".into()));
        }
        records.push(RunRecord {
            algo: field(0).to_string(),
            problem: field(1).to_string(),
            budget,
            seed,
            final_loss,
            trace: Vec::new(),
            best: Vec::new(),
            evaluations: budget,
        });
    }
    Ok(records)
}

fn line_of(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

pub fn write_scores_csv(path: &Path, header: &ReportHeader, scores: &ScoreTable) -> Result<()> {
    let mut out = create(path)?;
    header.write_comment(&mut out)?;
    writeln!(out, "algo,score,rank")?;
    for algo in scores.ranking() {
        let i = scores.index_of(algo).expect("ranked algorithms are in the table");
        writeln!(out, "{},{},{}", algo, scores.score[i], scores.rank[i])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stability_csv(
    path: &Path,
    header: &ReportHeader,
    entries: &[(String, String, Vec<StabilityEntry>)],
) -> Result<()> {
    let mut out = create(path)?;
    header.write_comment(&mut out)?;
    writeln!(out, "algo_a,algo_b,problem,budgets,k,bound")?;
    for (a, b, rows) in entries {
        for e in rows {
            writeln!(out, "{a},{b},{},{},{},{}", e.problem, e.budgets, e.k, e.bound)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Concatenated blocks, one per record in order: a little-endian u64 count
/// followed by that many little-endian f64 best-so-far losses.
pub fn write_trace_sidecar(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = create(path)?;
    for r in records {
        out.write_all(&(r.trace.len() as u64).to_le_bytes())?;
        for v in &r.trace {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_sidecar(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let truncated = || Error::Io(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated trace file"));
    let mut traces = Vec::new();
    let mut rest = &bytes[..];
    while !rest.is_empty() {
        let (count, tail) = rest.split_first_chunk::<8>().ok_or_else(truncated)?;
        let count = u64::from_le_bytes(*count) as usize;
        let need = count.checked_mul(8).filter(|&n| n <= tail.len()).ok_or_else(truncated)?;
        traces.push(
            tail[..need].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect(),
        );
        rest = &tail[need..];
    }
    Ok(traces)
}

fn short_number(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e5) || !v.is_finite() {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

/// Series label: mean at the largest budget in parentheses and, when given,
/// mean at the penultimate budget in brackets.
pub fn format_label(name: &str, at_max: f64, penultimate: Option<f64>) -> String {
    match penultimate {
        Some(p) => format!("{name} ({}) [{}]", short_number(at_max), short_number(p)),
        None => format!("{name} ({})", short_number(at_max)),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: &[&str] =
    &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

struct Series {
    label: String,
    points: Vec<(usize, f64)>,
}

/// Line chart with a logarithmic budget axis and a linear loss axis.
fn render_chart(header: &ReportHeader, title: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (860.0, 480.0);
    let (left, right, top, bottom) = (70.0, 300.0, 40.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let budgets: Vec<usize> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let losses: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(|v| v.is_finite()).collect();
    let bmin = budgets.iter().copied().min().unwrap_or(1).max(1) as f64;
    let bmax = budgets.iter().copied().max().unwrap_or(1).max(1) as f64;
    let (lx0, lx1) = (bmin.log10(), if bmax > bmin { bmax.log10() } else { bmin.log10() + 1.0 });
    let ymin = losses.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let mut ymax = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > ymin) {
        ymax = ymin + 1.0;
    }
    let x = |b: usize| left + ((b.max(1) as f64).log10() - lx0) / (lx1 - lx0) * plot_w;
    let y = |v: f64| top + (1.0 - (v.clamp(ymin, ymax) - ymin) / (ymax - ymin)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, "{}", header.xml_comment());
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + plot_w / 2.0,
        escape(title)
    );
    let _ =
        writeln!(svg, r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);

    let distinct: BTreeSet<usize> = budgets.iter().copied().collect();
    for &b in &distinct {
        let px = x(b);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{:.2}" stroke="gainsboro"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="9">{b}</text>"#,
            top + plot_h,
            top + plot_h + 14.0
        );
    }
    for i in 0..=4 {
        let v = ymin + (ymax - ymin) * f64::from(i) / 4.0;
        let py = y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="whitesmoke"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="9">{}</text>"#,
            left + plot_w,
            left - 4.0,
            py + 3.0,
            short_number(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">budget (log scale)</text>"#,
        left + plot_w / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().filter(|p| p.1.is_finite()).map(|&(b, v)| format!("{:.2},{:.2}", x(b), y(v))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 * i as f64 + 8.0;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn label_for(name: &str, points: &[(usize, f64)]) -> String {
    let n = points.len();
    match n {
        0 => name.to_string(),
        1 | 2 => format_label(name, points[n - 1].1, None),
        _ => format_label(name, points[n - 1].1, Some(points[n - 2].1)),
    }
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Chart data per problem: algorithm -> sorted (budget, mean loss).
fn per_problem(records: &[RunRecord]) -> BTreeMap<String, BTreeMap<String, Vec<(usize, f64)>>> {
    let mut out: BTreeMap<String, BTreeMap<String, Vec<(usize, f64)>>> = BTreeMap::new();
    for (algo, cells) in mean_losses(records) {
        for ((problem, budget), mean) in cells {
            out.entry(problem).or_default().entry(algo.clone()).or_default().push((budget, mean));
        }
    }
    out
}

/// Per (problem, budget), losses rescaled linearly to [0, 1] across
/// algorithms, then averaged over problems.
fn normalized_series(records: &[RunRecord]) -> BTreeMap<String, Vec<(usize, f64)>> {
    let means = mean_losses(records);
    let mut cells: BTreeMap<(String, usize), Vec<(&String, f64)>> = BTreeMap::new();
    for (algo, table) in &means {
        for (cell, &v) in table {
            cells.entry(cell.clone()).or_default().push((algo, v));
        }
    }
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for ((_, budget), entries) in cells {
        let lo = entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let hi = entries.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        for (algo, v) in entries {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let slot = acc.entry(algo.clone()).or_default().entry(budget).or_insert((0.0, 0));
            slot.0 += norm;
            slot.1 += 1;
        }
    }
    acc.into_iter().map(|(a, m)| (a, m.into_iter().map(|(b, (s, n))| (b, s / n as f64)).collect())).collect()
}

#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub scores: Option<PathBuf>,
    pub stability: Option<PathBuf>,
    pub charts: Vec<PathBuf>,
    pub traces: Option<PathBuf>,
}

/// Writes `results.csv`, `scores.csv`, `stability.csv`, one SVG per problem
/// plus `plots/normalized.svg`, and optionally `traces.bin`.
pub fn emit_report(
    out_dir: &Path,
    header: &ReportHeader,
    records: &[RunRecord],
    scores: Option<&ScoreTable>,
    stability: &[(String, String, Vec<StabilityEntry>)],
    traces: bool,
) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let mut files = ReportFiles { results: out_dir.join("results.csv"), ..Default::default() };
    write_results_csv(&files.results, header, records)?;
    if let Some(table) = scores {
        let path = out_dir.join("scores.csv");
        write_scores_csv(&path, header, table)?;
        files.scores = Some(path);
    }
    if !stability.is_empty() {
        let path = out_dir.join("stability.csv");
        write_stability_csv(&path, header, stability)?;
        files.stability = Some(path);
    }

    let plots = out_dir.join("plots");
    for (problem, algos) in per_problem(records) {
        let series: Vec<Series> =
            algos.into_iter().map(|(algo, points)| Series { label: label_for(&algo, &points), points }).collect();
        let path = plots.join(format!("{}.svg", file_stem(&problem)));
        create(&path)?.write_all(render_chart(header, &problem, "mean loss", &series).as_bytes())?;
        files.charts.push(path);
    }
    if !records.is_empty() {
        let series: Vec<Series> = normalized_series(records)
            .into_iter()
            .map(|(algo, points)| Series { label: label_for(&algo, &points), points })
            .collect();
        let path = plots.join("normalized.svg");
        let svg = render_chart(header, "all problems", "mean normalized loss", &series);
        create(&path)?.write_all(svg.as_bytes())?;
        files.charts.push(path);
    }

    if traces {
        let path = out_dir.join("traces.bin");
        write_trace_sidecar(&path, records)?;
        files.traces = Some(path);
    }
    Ok(files)
}
