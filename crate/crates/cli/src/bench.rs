//! Benchmark matrix: problems × offer catalogs × strategies, one CSV row per cell.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use deployopt::confgraph::FvMode;
use deployopt::pipeline::{plan, PlanOptions};
use deployopt::symbreak::Strategy;
use deployopt::OfferCatalog;

use crate::{read_offers, read_spec, CmdResult, Failure, EXIT_FAILURE, EXIT_OK, EXIT_PARSE};

fn default_timeout_s() -> u64 {
    2400
}

fn default_threads() -> usize {
    1
}

fn default_fv_modes() -> Vec<FvMode> {
    vec![FvMode::Full]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchProblem {
    pub name: String,
    /// Relative paths resolve against the matrix file's directory.
    pub spec: PathBuf,
    #[serde(default)]
    pub min_wordpress_instances: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOffers {
    pub count: usize,
    pub file: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchMatrix {
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    /// Solver threads per cell.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub problems: Vec<BenchProblem>,
    #[serde(default)]
    pub offers: Vec<BenchOffers>,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_fv_modes")]
    pub fv_modes: Vec<FvMode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub problem: String,
    pub offer_count: usize,
    pub strategy: Strategy,
    pub fv_mode: FvMode,
    /// `optimal`, `infeasible`, `timeout` or `error`.
    pub status: String,
    pub objective: Option<u64>,
    pub time_ms: u64,
    pub nodes: u64,
    pub fixed_cells: usize,
    pub m_estimated: usize,
    pub m_occupied: Option<usize>,
    pub instances_deployed: Option<u64>,
}

pub const CSV_HEADER: [&str; 12] = [
    "problem",
    "offer_count",
    "strategy",
    "fv_mode",
    "status",
    "objective",
    "time_ms",
    "nodes",
    "fixed_cells",
    "m_estimated",
    "m_occupied",
    "instances_deployed",
];

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Worker pool width; 0 lets rayon decide.
    pub jobs: usize,
    /// Overrides the matrix timeout.
    pub timeout: Option<Duration>,
}

pub fn load_matrix(path: &Path) -> CmdResult<BenchMatrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid bench matrix", path.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))
}

struct Cell<'a> {
    problem: &'a BenchProblem,
    spec: Result<deployopt::ApplicationSpec, String>,
    offers: &'a (usize, Result<OfferCatalog, String>),
    strategy: Strategy,
    fv_mode: FvMode,
}

fn run_cell(cell: &Cell, timeout: Duration, threads: usize) -> BenchRow {
    let mut row = BenchRow {
        problem: cell.problem.name.clone(),
        offer_count: cell.offers.0,
        strategy: cell.strategy,
        fv_mode: cell.fv_mode,
        status: "error".into(),
        objective: None,
        time_ms: 0,
        nodes: 0,
        fixed_cells: 0,
        m_estimated: 0,
        m_occupied: None,
        instances_deployed: None,
    };
    let (spec, catalog) = match (&cell.spec, &cell.offers.1) {
        (Ok(s), Ok(c)) => (s, c),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("{} / {} / {}: {e}", row.problem, row.offer_count, row.strategy);
            return row;
        }
    };
    let opts = PlanOptions {
        strategy: cell.strategy,
        fv_mode: cell.fv_mode,
        timeout: Some(timeout),
        threads,
        ..Default::default()
    };
    match plan(spec, catalog, &opts) {
        Ok(out) => {
            row.status = out.result.status.to_string();
            row.objective = out.result.objective;
            row.time_ms = out.result.stats.time_ms;
            row.nodes = out.result.stats.nodes_explored;
            row.fixed_cells = out.prepared.breakers.fixed.count_fixed();
            row.m_estimated = out.prepared.machines;
            row.m_occupied = out.plan.as_ref().map(|p| p.occupied());
            row.instances_deployed = out.plan.as_ref().map(|p| p.deployed_instances());
            if out.report.as_ref().is_some_and(|r| !r.passed()) {
                eprintln!("{} / {} / {}: plan failed the independent check", row.problem, row.offer_count, row.strategy);
                row.status = "error".into();
            }
        }
        Err(e) => eprintln!("{} / {} / {}: {e}", row.problem, row.offer_count, row.strategy),
    }
    row
}

/// Runs every cell of the matrix. Rows come back in matrix order.
pub fn run_matrix(matrix: &BenchMatrix, base: &Path, opts: &BenchOptions) -> Vec<BenchRow> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let catalogs: Vec<(usize, Result<OfferCatalog, String>)> = matrix
        .offers
        .iter()
        .map(|o| (o.count, read_offers(&resolve(&o.file)).map_err(|e| e.to_string())))
        .collect();
    let mut cells = Vec::new();
    for problem in &matrix.problems {
        let spec = read_spec(&resolve(&problem.spec), problem.min_wordpress_instances).map_err(|e| e.to_string());
        for offers in &catalogs {
            for &strategy in &matrix.strategies {
                let modes: &[FvMode] = if strategy.uses_fixing() { &matrix.fv_modes } else { &[FvMode::Full] };
                for &fv_mode in modes {
                    cells.push(Cell { problem, spec: spec.clone(), offers, strategy, fv_mode });
                }
            }
        }
    }
    let timeout = opts.timeout.unwrap_or(Duration::from_secs(matrix.timeout_s));
    let threads = matrix.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().expect("thread pool starts");
    pool.install(|| cells.par_iter().map(|c| run_cell(c, timeout, threads)).collect())
}

/// Cells whose proven optimum differs from another proven optimum of the same
/// problem and catalog.
pub fn objective_mismatches(rows: &[BenchRow]) -> Vec<String> {
    let mut groups: BTreeMap<(&str, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == "optimal") {
        groups.entry((r.problem.as_str(), r.offer_count)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((problem, count), group) in groups {
        let first = group[0];
        for r in &group[1..] {
            if r.objective != first.objective {
                out.push(format!(
                    "{problem} with {count} offers: {} gives {:?} but {} gives {:?}",
                    first.strategy, first.objective, r.strategy, r.objective
                ));
            }
        }
    }
    out
}

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(matrix_path: &Path, out: Option<&Path>, opts: &BenchOptions) -> CmdResult<i32> {
    let matrix = load_matrix(matrix_path)?;
    let base = matrix_path.parent().unwrap_or(Path::new("."));
    let rows = run_matrix(&matrix, base, opts);
    let io_fail = |e: anyhow::Error| Failure::new(EXIT_FAILURE, e);
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display())).map_err(io_fail)?;
            write_csv(&rows, file).map_err(io_fail)?;
        }
        None => write_csv(&rows, std::io::stdout().lock()).map_err(io_fail)?,
    }
    let mismatches = objective_mismatches(&rows);
    for m in &mismatches {
        eprintln!("objective mismatch: {m}");
    }
    let errors = rows.iter().filter(|r| r.status == "error").count();
    if errors > 0 {
        eprintln!("{errors} cells failed");
    }
    Ok(if mismatches.is_empty() && errors == 0 { EXIT_OK } else { EXIT_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(problem: &str, strategy: Strategy, status: &str, objective: Option<u64>) -> BenchRow {
        BenchRow {
            problem: problem.into(),
            offer_count: 20,
            strategy,
            fv_mode: FvMode::Full,
            status: status.into(),
            objective,
            time_ms: 1,
            nodes: 1,
            fixed_cells: 0,
            m_estimated: 3,
            m_occupied: Some(2),
            instances_deployed: Some(2),
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_columns_follow_row_fields() {
        let mut buf = Vec::new();
        write_csv(&[row("x", Strategy::Fvpr, "timeout", None)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("x,20,fvpr,full,timeout,,1,1,0,3,2,2"));
    }

    #[test]
    fn mismatch_only_between_proven_rows() {
        let rows = vec![
            row("x", Strategy::None, "optimal", Some(5)),
            row("x", Strategy::Pr, "timeout", Some(7)),
            row("x", Strategy::Lx, "optimal", Some(5)),
            row("y", Strategy::None, "optimal", Some(1)),
        ];
        assert!(objective_mismatches(&rows).is_empty());
        let mut bad = rows.clone();
        bad[2].objective = Some(6);
        assert_eq!(objective_mismatches(&bad).len(), 1);
    }
}
