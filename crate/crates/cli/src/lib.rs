//! Command implementations behind the `deployopt` binary.
//!
//! Every command returns the process exit code on success. Failures carry
//! their own code through [`Failure`].

pub mod bench;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::Serialize;

use deployopt::confgraph::{build_conflict_graph, enumerate_maximal_cliques, fix_assignments, select_clique, FvMode};
use deployopt::encode::lower_h_terms;
use deployopt::estimator::{estimate_with, SurrogatePolicy};
use deployopt::io::{load_offers, load_spec, LoadError};
use deployopt::pipeline::{machine_count, prepare, PlanOptions, PlanOutcome};
use deployopt::preprocess::merge_colocated;
use deployopt::smtlib::{emit_smtlib, emit_smtlib_bounded, solve_external, SmtError};
use deployopt::solver::{solve, SolveOptions, SolveStatus};
use deployopt::symbreak::Strategy;
use deployopt::{check_plan, validate_spec, ApplicationSpec, DeploymentPlan, OfferCatalog, ValidatedSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TIMEOUT: i32 = 4;
pub const EXIT_EXTERNAL_UNAVAILABLE: i32 = 5;

/// Environment variable holding the external solver command template.
pub const EXTERNAL_SOLVER_ENV: &str = "DEPLOYOPT_EXTERNAL_SOLVER";

/// Default wall-clock limit per solve.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2400);

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl Failure {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &deployopt::Error) -> i32 {
    match err {
        deployopt::Error::Load(_) | deployopt::Error::Validation(_) => EXIT_PARSE,
        deployopt::Error::Smt(SmtError::ExternalUnavailable(_)) => EXIT_EXTERNAL_UNAVAILABLE,
        _ => EXIT_FAILURE,
    }
}

impl From<deployopt::Error> for Failure {
    fn from(e: deployopt::Error) -> Self {
        Failure::new(exit_code(&e), e)
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure::new(EXIT_PARSE, e)
    }
}

pub type CmdResult<T> = Result<T, Failure>;

fn fail(code: i32) -> impl FnOnce(anyhow::Error) -> Failure {
    move |e| Failure::new(code, e)
}

/// Loads a spec and applies the optional Wordpress instance override.
pub fn read_spec(path: &Path, min_wordpress: Option<u64>) -> CmdResult<ApplicationSpec> {
    let mut spec = load_spec(path)?;
    if let Some(k) = min_wordpress {
        apply_min_wordpress(&mut spec, k).map_err(fail(EXIT_PARSE))?;
    }
    Ok(spec)
}

/// Sets the `>=` bound on the component named "Wordpress" to `k`.
pub fn apply_min_wordpress(spec: &mut ApplicationSpec, k: u64) -> anyhow::Result<()> {
    let id = spec
        .components
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case("wordpress"))
        .map(|c| c.id)
        .ok_or_else(|| anyhow!("spec '{}' has no component named Wordpress", spec.name))?;
    if spec.set_min_instances(id, k) == 0 {
        return Err(anyhow!("spec '{}' has no lower bound on Wordpress to override", spec.name));
    }
    Ok(())
}

pub fn read_offers(path: &Path) -> CmdResult<OfferCatalog> {
    Ok(load_offers(path)?)
}

fn structural(spec: ApplicationSpec) -> CmdResult<ValidatedSpec> {
    ValidatedSpec::structural(spec).map_err(|e| Failure::new(EXIT_PARSE, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOutput {
    /// Component names after merging co-located components.
    pub components: Vec<String>,
    pub nu: Vec<u64>,
    pub m_upper: u64,
}

/// Instance counts and machine upper bound of the merged application.
pub fn estimate(spec: ApplicationSpec, policy: SurrogatePolicy) -> CmdResult<EstimateOutput> {
    let validated = structural(spec)?;
    let (merged, _) = merge_colocated(&validated).map_err(|e| Failure::from(deployopt::Error::from(e)))?;
    let est = estimate_with(&merged, policy).map_err(|e| Failure::from(deployopt::Error::from(e)))?;
    Ok(EstimateOutput {
        components: merged.spec().components.iter().map(|c| c.name.clone()).collect(),
        nu: est.nu,
        m_upper: est.m_upper,
    })
}

pub fn cmd_estimate(spec: &Path, min_wordpress: Option<u64>, policy: SurrogatePolicy) -> CmdResult<i32> {
    let out = estimate(read_spec(spec, min_wordpress)?, policy)?;
    println!("{}", to_json(&out));
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct CliqueReport {
    pub members: Vec<String>,
    pub deployment_size: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutput {
    pub components: Vec<String>,
    pub conflicts: Vec<(String, String)>,
    pub cliques: Vec<CliqueReport>,
    pub selected: Option<CliqueReport>,
    pub machines: usize,
    pub fv_mode: FvMode,
    pub fixed_cells: usize,
    pub fixed_cells_full: usize,
    pub fixed_cells_conservative: usize,
    pub table: String,
}

/// Conflict graph, cliques and the value-fixing layout of the merged application.
pub fn analyze(spec: ApplicationSpec, mode: FvMode, policy: SurrogatePolicy) -> CmdResult<AnalysisOutput> {
    let to_failure = |e: deployopt::Error| Failure::from(e);
    let validated = structural(spec)?;
    let (merged, _) = merge_colocated(&validated).map_err(|e| to_failure(e.into()))?;
    let est = estimate_with(&merged, policy).map_err(|e| to_failure(e.into()))?;
    let m = machine_count(&merged, &est, &PlanOptions::default());
    let graph = build_conflict_graph(&merged);
    let name = |id| merged.spec().component(id).map(|c| c.name.clone()).unwrap_or_else(|| format!("#{}", id.0));
    let report = |c: &deployopt::confgraph::Clique| CliqueReport {
        members: c.members.iter().map(|&id| name(id)).collect(),
        deployment_size: c.deployment_size(&est),
    };
    let cliques = enumerate_maximal_cliques(&graph);
    let selected = if cliques.is_empty() { None } else { select_clique(&cliques, &est) };
    let fixed_for = |mode| match &selected {
        Some(c) => fix_assignments(c, &est, m, mode, &graph).map_err(|e| Failure::new(EXIT_FAILURE, e)),
        None => Ok(Default::default()),
    };
    let fixed = fixed_for(mode)?;
    let full = fixed_for(FvMode::Full)?.count_fixed();
    let conservative = fixed_for(FvMode::Conservative)?.count_fixed();
    let rows: Vec<_> = merged.spec().components.iter().map(|c| (c.id, c.name.clone())).collect();
    Ok(AnalysisOutput {
        components: rows.iter().map(|r| r.1.clone()).collect(),
        conflicts: graph.edges().into_iter().map(|(a, b)| (name(a), name(b))).collect(),
        cliques: cliques.iter().map(report).collect(),
        selected: selected.as_ref().map(report),
        machines: m,
        fv_mode: mode,
        fixed_cells: fixed.count_fixed(),
        fixed_cells_full: full,
        fixed_cells_conservative: conservative,
        table: fixed.render(&rows, m),
    })
}

pub fn cmd_analyze(spec: &Path, min_wordpress: Option<u64>, mode: FvMode, policy: SurrogatePolicy, json: bool) -> CmdResult<i32> {
    let out = analyze(read_spec(spec, min_wordpress)?, mode, policy)?;
    if json {
        println!("{}", to_json(&out));
        return Ok(EXIT_OK);
    }
    println!("conflicts:");
    for (a, b) in &out.conflicts {
        println!("  {a} -- {b}");
    }
    println!("maximal cliques:");
    for c in &out.cliques {
        println!("  {{{}}} deployment size {}", c.members.join(", "), c.deployment_size);
    }
    match &out.selected {
        Some(c) => println!("selected: {{{}}}", c.members.join(", ")),
        None => println!("selected: none"),
    }
    let total = out.components.len() * out.machines;
    println!(
        "fixed cells ({}): {}/{total} (full {}, conservative {})",
        out.fv_mode, out.fixed_cells, out.fixed_cells_full, out.fixed_cells_conservative
    );
    print!("{}", out.table);
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Builtin,
    Smt,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "builtin" => Ok(Backend::Builtin),
            "smt" => Ok(Backend::Smt),
            other => Err(format!("unknown backend '{other}' (expected builtin or smt)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub options: PlanOptions,
    pub backend: Backend,
    /// External command template; falls back to the environment variable.
    pub external: Option<String>,
    /// Use plain satisfiability queries with a bisected cost bound.
    pub no_opt: bool,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            options: PlanOptions { timeout: Some(DEFAULT_TIMEOUT), ..Default::default() },
            backend: Backend::Builtin,
            external: None,
            no_opt: false,
        }
    }
}

/// Command template from the request or the environment.
pub fn external_template(explicit: Option<&str>) -> Option<String> {
    explicit
        .map(str::to_owned)
        .or_else(|| std::env::var(EXTERNAL_SOLVER_ENV).ok())
        .filter(|s| !s.trim().is_empty())
}

/// Runs the whole pipeline with the requested backend.
pub fn run_plan(spec: &ApplicationSpec, catalog: &OfferCatalog, req: &PlanRequest) -> CmdResult<PlanOutcome> {
    let prepared = prepare(spec, catalog, &req.options)?;
    let result = match req.backend {
        Backend::Builtin => solve(&prepared.ir, &SolveOptions { timeout: req.options.timeout, threads: req.options.threads })
            .map_err(deployopt::Error::from)?,
        Backend::Smt => {
            let template = external_template(req.external.as_deref()).ok_or_else(|| {
                deployopt::Error::from(SmtError::ExternalUnavailable(format!(
                    "no external solver configured (use --external or {EXTERNAL_SOLVER_ENV})"
                )))
            })?;
            solve_external(&prepared.ir, &template, req.options.timeout, req.no_opt).map_err(deployopt::Error::from)?
        }
    };
    Ok(prepared.finish(result, catalog)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineReport {
    /// 1-based machine number.
    pub machine: usize,
    pub offer: u32,
    pub offer_name: String,
    pub price_micro: u64,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanOutput {
    pub problem: String,
    pub strategy: Strategy,
    pub fv_mode: FvMode,
    pub status: SolveStatus,
    pub objective: Option<u64>,
    pub proven: bool,
    pub m_estimated: usize,
    pub fixed_cells: usize,
    pub nodes: u64,
    pub time_ms: u64,
    pub check_passed: Option<bool>,
    pub machines: Vec<MachineReport>,
    pub plan: Option<DeploymentPlan>,
}

pub fn plan_output(spec: &ApplicationSpec, catalog: &OfferCatalog, opts: &PlanOptions, out: &PlanOutcome) -> PlanOutput {
    let machines = out
        .plan
        .as_ref()
        .map(|p| {
            (0..p.machines())
                .filter(|&k| p.occupancy[k] == 1)
                .map(|k| {
                    let offer = catalog.offer(p.types[k]);
                    MachineReport {
                        machine: k + 1,
                        offer: p.types[k],
                        offer_name: offer.map(|o| o.name.clone()).unwrap_or_default(),
                        price_micro: offer.map(|o| o.price).unwrap_or(0),
                        components: (0..p.assignment.len())
                            .filter(|&i| p.assignment[i][k] == 1)
                            .map(|i| spec.components[i].name.clone())
                            .collect(),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    PlanOutput {
        problem: spec.name.clone(),
        strategy: opts.strategy,
        fv_mode: opts.fv_mode,
        status: out.result.status,
        objective: out.result.objective,
        proven: out.result.proven,
        m_estimated: out.prepared.machines,
        fixed_cells: out.prepared.ir.count(deployopt::encode::Family::Fixed),
        nodes: out.result.stats.nodes_explored,
        time_ms: out.result.stats.time_ms,
        check_passed: out.report.as_ref().map(|r| r.passed()),
        machines,
        plan: out.plan.clone(),
    }
}

/// Exit code for a solve status.
pub fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::Timeout => EXIT_TIMEOUT,
    }
}

pub fn cmd_plan(spec: &Path, offers: &Path, min_wordpress: Option<u64>, req: &PlanRequest, out_file: Option<&Path>) -> CmdResult<i32> {
    let spec = read_spec(spec, min_wordpress)?;
    let catalog = read_offers(offers)?;
    let outcome = run_plan(&spec, &catalog, req)?;
    let output = plan_output(&spec, &catalog, &req.options, &outcome);
    let text = to_json(&output);
    match out_file {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail(EXIT_FAILURE))?,
        None => println!("{text}"),
    }
    eprintln!(
        "{}: {} with {} (fv-mode {}), objective {}, {} of {} machines occupied, {} nodes in {} ms",
        output.problem,
        output.status,
        output.strategy,
        output.fv_mode,
        output.objective.map_or("-".to_string(), |o| o.to_string()),
        output.machines.len(),
        output.m_estimated,
        output.nodes,
        output.time_ms
    );
    for m in &output.machines {
        eprintln!("  VM{} {} ({}): {}", m.machine, m.offer_name, m.price_micro, m.components.join(", "));
    }
    if output.check_passed == Some(false) {
        if let Some(r) = &outcome.report {
            eprintln!("{r}");
        }
        return Ok(EXIT_FAILURE);
    }
    Ok(status_code(output.status))
}

/// Reads a plan file: either a bare plan or the output of `plan`.
pub fn read_plan(path: &Path) -> CmdResult<DeploymentPlan> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_PARSE))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))
        .map_err(fail(EXIT_PARSE))?;
    let inner = match value.get("plan") {
        Some(p) if !p.is_null() => p.clone(),
        Some(_) => return Err(Failure::new(EXIT_PARSE, anyhow!("{} holds no plan", path.display()))),
        None => value,
    };
    serde_json::from_value(inner)
        .with_context(|| format!("{} is not a deployment plan", path.display()))
        .map_err(fail(EXIT_PARSE))
}

pub fn cmd_check(spec: &Path, offers: &Path, plan: &Path, min_wordpress: Option<u64>) -> CmdResult<i32> {
    let spec = read_spec(spec, min_wordpress)?;
    let catalog = read_offers(offers)?;
    let plan = read_plan(plan)?;
    let validated = validate_spec(&spec, &catalog).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let report = check_plan(&validated, &catalog, &plan).map_err(|e| Failure::new(EXIT_PARSE, e))?;
    println!("{report}");
    if report.recomputed_price != plan.total_price {
        println!("stated price {} differs from recomputed price {}", plan.total_price, report.recomputed_price);
        return Ok(EXIT_FAILURE);
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILURE })
}

#[derive(Debug, Clone)]
pub struct EmitRequest {
    pub options: PlanOptions,
    pub no_opt: bool,
    /// Cost bound asserted in `--no-opt` mode.
    pub bound: Option<i64>,
}

/// SMT-LIB2 text for a spec, catalog and strategy.
pub fn emit(spec: &ApplicationSpec, catalog: &OfferCatalog, req: &EmitRequest) -> CmdResult<String> {
    let prepared = prepare(spec, catalog, &req.options)?;
    let ir = lower_h_terms(&prepared.ir);
    let text = if req.no_opt { emit_smtlib_bounded(&ir, req.bound) } else { emit_smtlib(&ir) };
    Ok(text.map_err(deployopt::Error::from)?)
}

pub fn cmd_emit_smt(spec: &Path, offers: &Path, min_wordpress: Option<u64>, req: &EmitRequest, out: Option<&PathBuf>) -> CmdResult<i32> {
    let text = emit(&read_spec(spec, min_wordpress)?, &read_offers(offers)?, req)?;
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail(EXIT_FAILURE))?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
