use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use deployopt::confgraph::FvMode;
use deployopt::estimator::SurrogatePolicy;
use deployopt::pipeline::PlanOptions;
use deployopt::symbreak::Strategy;
use deployopt_cli::bench::{cmd_bench, BenchOptions};
use deployopt_cli::{
    cmd_analyze, cmd_check, cmd_emit_smt, cmd_estimate, cmd_plan, Backend, EmitRequest, PlanRequest, EXIT_PARSE,
};

#[derive(Parser)]
#[command(name = "deployopt", version, about = "Minimum-cost deployment of component-based applications on VM offers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateArg {
    AllDeployed,
    Branches,
}

impl From<SurrogateArg> for SurrogatePolicy {
    fn from(s: SurrogateArg) -> Self {
        match s {
            SurrogateArg::AllDeployed => SurrogatePolicy::AllDeployed,
            SurrogateArg::Branches => SurrogatePolicy::ExclusiveBranches,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Builtin,
    Smt,
}

#[derive(Args)]
struct SpecArgs {
    /// Application spec (JSON).
    spec: PathBuf,
    /// Override the lower bound on the Wordpress component.
    #[arg(long, value_name = "K")]
    min_wordpress_instances: Option<u64>,
    /// Instance estimation policy.
    #[arg(long, value_enum, default_value = "all-deployed")]
    surrogate: SurrogateArg,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Offer catalog (JSON).
    offers: PathBuf,
    /// Symmetry breaking strategy: none, pr, lx, prlx, fv, fvpr, fvlx, tpr, tlx.
    #[arg(long, default_value = "none")]
    strategy: Strategy,
    /// Value fixing mode: full or conservative.
    #[arg(long, default_value = "full")]
    fv_mode: FvMode,
    /// Override the estimated number of machines.
    #[arg(long)]
    machines: Option<usize>,
}

impl ModelArgs {
    fn options(&self, timeout_s: u64, threads: usize) -> PlanOptions {
        PlanOptions {
            strategy: self.strategy,
            fv_mode: self.fv_mode,
            timeout: Some(Duration::from_secs(timeout_s)),
            threads,
            surrogate: self.spec.surrogate.into(),
            machines: self.machines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate instance counts and an upper bound on the number of machines.
    Estimate(SpecArgs),
    /// Show conflicts, maximal cliques and the fixed-value layout.
    Analyze {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "full")]
        fv_mode: FvMode,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Compute a minimum-cost deployment plan.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        /// Time limit in seconds.
        #[arg(long, default_value_t = 2400)]
        timeout: u64,
        #[arg(long, value_enum, default_value = "builtin")]
        backend: BackendArg,
        /// External solver command template, `{file}` is replaced by the SMT-LIB file.
        #[arg(long, value_name = "CMD")]
        external: Option<String>,
        /// With the SMT backend, bisect the cost with satisfiability queries.
        #[arg(long)]
        no_opt: bool,
        /// Solver threads.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Write the plan JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a plan against every constraint of a spec.
    Check {
        /// Application spec (JSON).
        spec: PathBuf,
        /// Offer catalog (JSON).
        offers: PathBuf,
        /// Plan JSON, bare or as written by `plan`.
        plan: PathBuf,
        #[arg(long, value_name = "K")]
        min_wordpress_instances: Option<u64>,
    },
    /// Write the SMT-LIB2 encoding.
    EmitSmt {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit a satisfiability query instead of a minimize command.
        #[arg(long)]
        no_opt: bool,
        /// Cost bound asserted with --no-opt.
        #[arg(long, requires = "no_opt")]
        bound: Option<i64>,
    },
    /// Run a benchmark matrix and write CSV.
    Bench {
        /// Matrix JSON.
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker pool width, 0 for one per core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the matrix time limit, in seconds.
        #[arg(long)]
        timeout: Option<u64>,
    },
}

fn run(cli: Cli) -> deployopt_cli::CmdResult<i32> {
    match cli.command {
        Command::Estimate(s) => cmd_estimate(&s.spec, s.min_wordpress_instances, s.surrogate.into()),
        Command::Analyze { spec, fv_mode, json } => {
            cmd_analyze(&spec.spec, spec.min_wordpress_instances, fv_mode, spec.surrogate.into(), json)
        }
        Command::Plan { model, timeout, backend, external, no_opt, threads, out } => {
            let req = PlanRequest {
                options: model.options(timeout, threads),
                backend: match backend {
                    BackendArg::Builtin => Backend::Builtin,
                    BackendArg::Smt => Backend::Smt,
                },
                external,
                no_opt,
            };
            cmd_plan(&model.spec.spec, &model.offers, model.spec.min_wordpress_instances, &req, out.as_deref())
        }
        Command::Check { spec, offers, plan, min_wordpress_instances } => {
            cmd_check(&spec, &offers, &plan, min_wordpress_instances)
        }
        Command::EmitSmt { model, out, no_opt, bound } => {
            let req = EmitRequest { options: model.options(2400, 1), no_opt, bound };
            cmd_emit_smt(&model.spec.spec, &model.offers, model.spec.min_wordpress_instances, &req, out.as_ref())
        }
        Command::Bench { matrix, out, jobs, timeout } => {
            cmd_bench(&matrix, out.as_deref(), &BenchOptions { jobs, timeout: timeout.map(Duration::from_secs) })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
