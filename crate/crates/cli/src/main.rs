//! gridsched: enumerate candidate resource blocks, solve single scheduling
//! instances, and run Monte Carlo comparisons from a JSON scenario config.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or IO
//! failure. Logging goes to stderr, controlled by GRIDSCHED_LOG
//! (error | info | debug; default error).

mod config;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::ConfigFile;
use gridsched::harness::{self, prepare, summarize, summary_csv, trials_csv};
use gridsched::{Schedule, SolverKind};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

#[derive(Debug, Parser)]
#[command(
    name = "gridsched",
    about = "Conflict-aware URLLC/eMBB scheduling over flexible-numerology grids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the per-shape candidate block census for the configured grid.
    Enumerate(EnumerateArgs),
    /// Solve a single seeded instance with one solver and dump the schedule.
    Solve(SolveArgs),
    /// Run the configured Monte Carlo scenario and write trial/summary CSVs.
    Montecarlo(MontecarloArgs),
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// One of: exact, bruteforce, p1, baseline, ca-total, ca-avg,
    /// ca-lastpl, bpb, mbp.
    #[arg(long)]
    solver: String,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Branch-and-bound time budget, overriding the config.
    #[arg(long)]
    time_limit_ms: Option<u64>,
    /// Branch-and-bound relative gap tolerance, overriding the config.
    #[arg(long)]
    gap_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct MontecarloArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for trials.csv and summary.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads: 1 = sequential (default), 0 = all cores.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Branch-and-bound time budget, overriding the config.
    #[arg(long)]
    time_limit_ms: Option<u64>,
    /// Branch-and-bound relative gap tolerance, overriding the config.
    #[arg(long)]
    gap_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

enum CliError {
    /// Bad flags or configuration -> exit 1.
    Usage(String),
    /// Runtime or IO failure -> exit 2.
    Runtime(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("GRIDSCHED_LOG", "error"),
    )
    .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Enumerate(args) => cmd_enumerate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    ConfigFile::parse(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// enumerate
// ---------------------------------------------------------------------------

fn cmd_enumerate(args: EnumerateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let spec = cfg.grid_spec().map_err(CliError::Usage)?;
    let shapes = cfg.shapes();
    let blocks = gridsched::enumerate_blocks(&spec, &shapes);
    let counts: Vec<(&'static str, usize)> = shapes
        .iter()
        .map(|s| {
            (
                s.id.name(),
                blocks.iter().filter(|b| b.shape_id == s.id).count(),
            )
        })
        .collect();
    let total = blocks.len();

    match args.format {
        Format::Text => {
            let parts: Vec<String> = counts
                .iter()
                .map(|(name, count)| format!("{name}={count}"))
                .collect();
            println!("{} total={}", parts.join(" "), total);
        }
        Format::Csv => {
            println!("shape,count");
            for (name, count) in &counts {
                println!("{name},{count}");
            }
            println!("total,{total}");
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Census {
                shape1: usize,
                shape2: usize,
                shape3: usize,
                shape4: usize,
                total: usize,
            }
            let census = Census {
                shape1: counts[0].1,
                shape2: counts[1].1,
                shape3: counts[2].1,
                shape4: counts[3].1,
                total,
            };
            println!("{}", serde_json::to_string_pretty(&census).unwrap());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AssignmentDump {
    block_id: usize,
    service_id: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct ScheduleDump {
    solver: &'static str,
    seed: u64,
    status: &'static str,
    objective_kbps: f64,
    delivered_kbps: Vec<f64>,
    assignments: Vec<AssignmentDump>,
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let solver = SolverKind::from_name(&args.solver).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown solver '{}' (expected one of: {})",
            args.solver,
            SolverKind::ALL
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;

    let mut scenario = cfg.scenario(args.seed).map_err(CliError::Usage)?;
    if args.time_limit_ms.is_some() {
        scenario.params.time_limit_ms = args.time_limit_ms;
    }
    if let Some(g) = args.gap_tol {
        scenario.params.gap_tol = g;
    }

    let ctx = prepare(&scenario);
    let inst = harness::build_instance(&scenario, &ctx, 0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let schedule = harness::solve_instance(solver, &inst, &scenario.params).map_err(|e| match e {
        harness::HarnessError::Exact(gridsched::ExactError::InstanceTooLarge { .. }) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    })?;

    let dump = ScheduleDump {
        solver: solver.name(),
        seed: scenario.trial_seed(0),
        status: schedule.status.name(),
        objective_kbps: schedule.objective_kbps,
        delivered_kbps: schedule.delivered_kbps.clone(),
        assignments: schedule
            .assignments
            .iter()
            .map(|a| AssignmentDump {
                block_id: a.block_id,
                service_id: inst.services.service_id(a.service),
                fraction: a.fraction,
            })
            .collect(),
    };
    print_schedule(&dump, &schedule, args.format);
    Ok(())
}

fn print_schedule(dump: &ScheduleDump, schedule: &Schedule, format: Format) {
    match format {
        Format::Text => {
            println!("solver: {}", dump.solver);
            println!("seed: {}", dump.seed);
            println!("status: {}", dump.status);
            if let gridsched::ScheduleStatus::TimeLimit {
                best_objective,
                best_bound,
            } = &schedule.status
            {
                match best_objective {
                    Some(b) => println!("incumbent_kbps: {b}"),
                    None => println!("incumbent_kbps: none"),
                }
                println!("best_bound_kbps: {best_bound}");
            }
            println!("objective_kbps: {}", dump.objective_kbps);
            println!("assignments: {}", dump.assignments.len());
            println!("block_id service_id fraction");
            for a in &dump.assignments {
                println!("{} {} {}", a.block_id, a.service_id, a.fraction);
            }
        }
        Format::Csv => {
            println!("block_id,service_id,fraction");
            for a in &dump.assignments {
                println!("{},{},{}", a.block_id, a.service_id, a.fraction);
            }
        }
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(dump).unwrap());
        }
    }
}

// ---------------------------------------------------------------------------
// montecarlo
// ---------------------------------------------------------------------------

fn cmd_montecarlo(args: MontecarloArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    if cfg.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let mut scenario = cfg.scenario(args.seed).map_err(CliError::Usage)?;
    if args.time_limit_ms.is_some() {
        scenario.params.time_limit_ms = args.time_limit_ms;
    }
    if let Some(g) = args.gap_tol {
        scenario.params.gap_tol = g;
    }

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;

    let every = (scenario.trials / 10).max(1);
    let done = AtomicUsize::new(0);
    log::info!(
        "running scenario '{}': {} trials, {} solvers, jobs={}",
        scenario.scenario_id,
        scenario.trials,
        scenario.roster.len(),
        args.jobs
    );
    let total = scenario.trials;
    let reports = harness::run_scenario(&scenario, args.jobs, |t| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::debug!("trial {t} finished");
        if n % every == 0 || n == total {
            eprintln!("progress: {n}/{total} trials");
        }
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    let violations: usize = reports
        .iter()
        .flat_map(|r| r.results.iter().map(|s| s.violations))
        .sum();
    if violations > 0 {
        return Err(CliError::Runtime(format!(
            "validator reported {violations} violations; aborting without writing output"
        )));
    }

    let trials_path = args.out.join("trials.csv");
    let summary_path = args.out.join("summary.csv");
    std::fs::write(
        &trials_path,
        trials_csv(&scenario.scenario_id, &reports, cfg.record_timing),
    )
    .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", trials_path.display())))?;
    let summary = summarize(&reports);
    std::fs::write(
        &summary_path,
        summary_csv(&scenario.scenario_id, &summary, cfg.record_timing),
    )
    .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", summary_path.display())))?;

    for s in &summary.solvers {
        log::info!(
            "{}: {}/{} feasible, mean objective {:?} kbps",
            s.solver.name(),
            s.feasible_trials,
            s.trials,
            s.mean_objective_kbps
        );
    }
    eprintln!(
        "wrote {} and {}",
        trials_path.display(),
        summary_path.display()
    );
    Ok(())
}
