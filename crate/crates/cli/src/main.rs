//! `fsm-agent`: run tasks and suites, export FSMs, inspect the knowledge store.
//!
//! Exit codes: 0 success (and every `bench` or `score`, whatever the task
//! outcomes), 1 configuration or I/O error, 2 run terminated, 3 step budget
//! exhausted.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{DeviceKind, ModelSpec, ResolvedConfig, RunArgs};
use fsm_agent::agents::{orchestrate, Agents, KnowledgeStore, RunStatus, Trace};
use fsm_agent::bench::{self, fsm_file_stem, graded_record, run_suite, run_task, Suite, FSM_DIR};
use fsm_agent::device::{load_package_map, AdbDevice, ProcessTransport, ADB_SERIAL_VAR};
use fsm_agent::eval::{compute_metrics, load_grades, load_solutions, load_suite, load_task, TaskSpec};
use fsm_agent::fsm::{export_fsm, import_fsm_json, ExportFormat};
use fsm_agent::gateway::{Gateway, LiveBackend, ModelBackend, RecordingBackend, ReplayBackend};
use fsm_agent::perception::ServicePerceiver;
use fsm_agent::simenv::{load_world, OracleModel, WorldSpec};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_TERMINATED: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "fsm-agent", version, about = "State-aware mobile GUI agent")]
struct Cli {
    /// TOML config file; flags and MAPLE_* variables take precedence.
    #[arg(long, env = "MAPLE_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task.
    Run(RunArgs),
    /// Run every task of a suite directory and report the metrics.
    Bench(RunArgs),
    /// Export one app's FSM from a run directory.
    Export(ExportArgs),
    /// Report metrics for recorded runs using human grades for SS and SR.
    Score(ScoreArgs),
    /// Inspect or clear the knowledge store.
    Kb {
        #[arg(long, env = "MAPLE_KB")]
        store: PathBuf,
        #[command(subcommand)]
        action: KbAction,
    },
}

#[derive(clap::Args)]
struct ExportArgs {
    /// Run directory containing `fsm/`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    app: String,
    #[arg(long, default_value = "dot")]
    format: String,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ScoreArgs {
    /// Suite directory whose `tasks/` hold the reference operations.
    #[arg(long)]
    suite: PathBuf,
    /// Directory with one run directory per task id.
    #[arg(long)]
    runs: PathBuf,
    /// Grade sheet JSON.
    #[arg(long)]
    grades: PathBuf,
    /// Also write `metrics.{txt,csv,json}` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbAction {
    /// Counts of cues, sequences and FSMs.
    List,
    /// The whole document.
    Show,
    /// Remove everything.
    Clear,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MAPLE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => config::resolve(args, cli.config.as_deref()).map_err(CliError).and_then(|c| cmd_run(&c)),
        Command::Bench(args) => {
            config::resolve(args, cli.config.as_deref()).map_err(CliError).and_then(|c| cmd_bench(&c))
        }
        Command::Export(args) => cmd_export(&args),
        Command::Score(args) => cmd_score(&args),
        Command::Kb { store, action } => cmd_kb(&store, &action),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn load_world_file(path: &Path) -> CliResult<WorldSpec> {
    Ok(load_world(&read(path)?)?)
}

fn wrap(backend: impl ModelBackend + 'static, record: Option<&Path>) -> CliResult<Gateway> {
    Ok(match record {
        Some(dir) => Gateway::new(RecordingBackend::new(backend, dir)?),
        None => Gateway::new(backend),
    })
}

fn replay_backend(cfg: &ResolvedConfig) -> CliResult<ReplayBackend> {
    let archive = cfg.replay.as_ref().ok_or_else(|| CliError("replay needs --replay <archive>".into()))?;
    Ok(ReplayBackend::open(archive)?)
}

/// The configured backend, plus any per-agent overrides. Recording wraps
/// each backend so the archive covers every request.
fn build_gateway(cfg: &ResolvedConfig, oracle: impl FnOnce() -> CliResult<OracleModel>) -> CliResult<Gateway> {
    let record = cfg.record.as_deref();
    let mut gateway = match &cfg.model {
        ModelSpec::Replay => wrap(replay_backend(cfg)?, record)?,
        ModelSpec::Oracle => wrap(oracle()?, record)?,
        ModelSpec::Live(provider) => wrap(LiveBackend::from_env(*provider)?, record)?,
    };
    for (prefix, spec) in cfg.overrides() {
        gateway = match (spec, record) {
            (ModelSpec::Replay, None) => gateway.with_override(prefix, replay_backend(cfg)?),
            (ModelSpec::Replay, Some(dir)) => gateway.with_override(prefix, RecordingBackend::new(replay_backend(cfg)?, dir)?),
            (ModelSpec::Live(p), None) => gateway.with_override(prefix, LiveBackend::from_env(p)?),
            (ModelSpec::Live(p), Some(dir)) => gateway.with_override(prefix, RecordingBackend::new(LiveBackend::from_env(p)?, dir)?),
            (ModelSpec::Oracle, _) => unreachable!("rejected when the config is resolved"),
        };
    }
    Ok(gateway)
}

/// The knowledge store of a run: the configured one, or a fresh store in
/// the output directory.
fn open_store(cfg: &ResolvedConfig) -> CliResult<KnowledgeStore> {
    match &cfg.kb {
        Some(path) => Ok(KnowledgeStore::new(path)),
        None => {
            let store = KnowledgeStore::new(cfg.out.join("knowledge.json"));
            store.clear()?;
            Ok(store)
        }
    }
}

fn write_common(cfg: &ResolvedConfig, gateway: &Gateway) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    let transcript: String = gateway
        .transcript()
        .iter()
        .map(|t| serde_json::to_string(t).map(|s| s + "\n"))
        .collect::<Result<_, _>>()?;
    std::fs::write(cfg.out.join("transcript.jsonl"), transcript)?;
    Ok(())
}

fn exit_for(status: RunStatus) -> u8 {
    match status {
        RunStatus::Success => EXIT_OK,
        RunStatus::Terminated => EXIT_TERMINATED,
        RunStatus::BudgetExhausted => EXIT_BUDGET,
    }
}

fn cmd_run(cfg: &ResolvedConfig) -> CliResult<u8> {
    let task_path = cfg.task.as_ref().ok_or_else(|| CliError("run needs --task".into()))?;
    let task = load_task(&read(task_path)?)?;
    std::fs::create_dir_all(&cfg.out)?;
    let store = open_store(cfg)?;
    let status = match cfg.device {
        DeviceKind::Sim => {
            let world_path = cfg.world.as_ref().ok_or_else(|| CliError("the sim device needs --world".into()))?;
            let world = load_world_file(world_path)?;
            let gateway = build_gateway(cfg, || oracle_for_task(cfg, &task, &world, task_path))?;
            let run = run_task(&task, &world, cfg.faults(), &gateway, &cfg.settings(), Some(&store))?;
            run.write_to(&cfg.out)?;
            write_common(cfg, &gateway)?;
            println!("{}: {}", task.task_id, run.outcome.trace.summary.status.as_str());
            run.outcome.trace.summary.status
        }
        DeviceKind::Adb => {
            let gateway = build_gateway(cfg, || Err(CliError("the oracle model needs the sim device".into())))?;
            let packages = match &cfg.packages {
                Some(p) => load_package_map(&read(p)?)?,
                None => Default::default(),
            };
            let serial = std::env::var(ADB_SERIAL_VAR).ok().filter(|s| !s.trim().is_empty());
            let mut device = AdbDevice::connect(ProcessTransport::default(), serial, packages)?;
            let url = cfg.perception_url.clone().ok_or_else(|| CliError("the adb device needs --perception-url".into()))?;
            let perceiver = ServicePerceiver::new(url);
            let mut settings = cfg.settings();
            settings.mechanical_checks = false;
            let agents = Agents::new(&gateway, settings);
            let outcome = orchestrate(&task, &store.load()?, &agents, &mut device, &perceiver);
            if let Some(delta) = outcome.knowledge_delta.clone() {
                store.merge(delta)?;
            }
            bench::write_outcome(&cfg.out, &outcome)?;
            write_common(cfg, &gateway)?;
            println!("{}: {}", task.task_id, outcome.trace.summary.status.as_str());
            outcome.trace.summary.status
        }
    };
    Ok(exit_for(status))
}

fn oracle_for_task(cfg: &ResolvedConfig, task: &TaskSpec, world: &WorldSpec, task_path: &Path) -> CliResult<OracleModel> {
    // default: the suite directory that holds the task file
    let suite = match &cfg.solutions {
        Some(dir) => dir.clone(),
        None => task_path.parent().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default(),
    };
    let solutions = load_solutions(&suite)?;
    let solution = solutions
        .get(&task.task_id)
        .ok_or_else(|| CliError(format!("no solution for {} under {}", task.task_id, suite.display())))?;
    Ok(OracleModel::new(world.clone()).with_task(&task.instruction, solution.clone()))
}

fn cmd_bench(cfg: &ResolvedConfig) -> CliResult<u8> {
    if cfg.device != DeviceKind::Sim {
        return Err(CliError("bench runs on the sim device only".into()));
    }
    let suite_dir = cfg.suite.as_ref().ok_or_else(|| CliError("bench needs --suite".into()))?;
    let mut suite = Suite::load(suite_dir)?;
    if let Some(world) = &cfg.world {
        suite.world = load_world_file(world)?;
    }
    std::fs::create_dir_all(&cfg.out)?;
    let store = open_store(cfg)?;
    let gateway = build_gateway(cfg, || Ok(suite.oracle.clone()))?;
    let run = run_suite(&suite.tasks, &suite.world, cfg.faults(), &gateway, &cfg.settings(), Some(&store))?;
    for task_run in &run.runs {
        task_run.write_to(&cfg.out.join(&task_run.task.task_id))?;
    }
    bench::write_report(&cfg.out, &run.report)?;
    write_common(cfg, &gateway)?;
    print!("{}", run.report.to_text());
    Ok(EXIT_OK)
}

fn cmd_export(args: &ExportArgs) -> CliResult<u8> {
    let format: ExportFormat = args.format.parse()?;
    let path = args.trace.join(FSM_DIR).join(format!("{}.json", fsm_file_stem(&args.app)));
    if !args.trace.is_dir() {
        return Err(CliError(format!("{}: no such run directory", args.trace.display())));
    }
    Trace::read_from(&args.trace).map_err(|e| CliError(format!("{}: {e}", args.trace.display())))?;
    let fsm = import_fsm_json(&read(&path)?)?;
    let doc = export_fsm(&fsm, format)?;
    match &args.output {
        Some(out) => std::fs::write(out, doc)?,
        None => print!("{doc}"),
    }
    Ok(EXIT_OK)
}

fn cmd_score(args: &ScoreArgs) -> CliResult<u8> {
    let tasks = load_suite(&args.suite)?;
    let sheet = load_grades(&read(&args.grades)?)?;
    let grades = sheet.by_task();
    let mut records = Vec::new();
    for task in &tasks {
        let dir = args.runs.join(&task.task_id);
        if !dir.is_dir() {
            continue;
        }
        let trace = Trace::read_from(&dir).map_err(|e| CliError(format!("{}: {e}", dir.display())))?;
        let grade = grades.get(task.task_id.as_str()).ok_or_else(|| CliError(format!("no grade for {}", task.task_id)))?;
        records.push(graded_record(task, &trace, grade)?);
    }
    if records.is_empty() {
        return Err(CliError(format!("no run directories for the suite's tasks under {}", args.runs.display())));
    }
    let report = compute_metrics(&records);
    if let Some(out) = &args.out {
        bench::write_report(out, &report)?;
    }
    print!("{}", report.to_text());
    Ok(EXIT_OK)
}

fn cmd_kb(store: &Path, action: &KbAction) -> CliResult<u8> {
    let kb = KnowledgeStore::new(store);
    match action {
        KbAction::List => println!("{}", kb.load()?.summary()),
        KbAction::Show => println!("{}", serde_json::to_string_pretty(&kb.load()?)?),
        KbAction::Clear => {
            kb.clear()?;
            println!("cleared {}", store.display());
        }
    }
    Ok(EXIT_OK)
}
