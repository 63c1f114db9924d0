//! Option resolution: command-line flags, then `MAPLE_*` environment
//! variables (both handled by clap), then the TOML config file, then
//! built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fsm_agent::agents::{tags, Ablation, AgentSettings};
use fsm_agent::gateway::Provider;
use fsm_agent::simenv::FaultPolicy;

#[derive(clap::Args, Debug, Default)]
pub struct RunArgs {
    /// Task document (`run`).
    #[arg(long, env = "MAPLE_TASK")]
    pub task: Option<PathBuf>,
    /// Suite directory with `world.json`, `tasks/` and `solutions/` (`bench`).
    #[arg(long, env = "MAPLE_SUITE")]
    pub suite: Option<PathBuf>,
    /// `sim` or `adb`.
    #[arg(long, env = "MAPLE_DEVICE")]
    pub device: Option<String>,
    /// World script for the simulated device.
    #[arg(long, env = "MAPLE_WORLD")]
    pub world: Option<PathBuf>,
    /// `oracle`, `replay` or `live:<openai|anthropic|google>`.
    #[arg(long, env = "MAPLE_MODEL")]
    pub model: Option<String>,
    /// Archive directory to replay model replies from.
    #[arg(long, env = "MAPLE_REPLAY")]
    pub replay: Option<PathBuf>,
    /// Archive directory to record model replies into.
    #[arg(long, env = "MAPLE_RECORD")]
    pub record: Option<PathBuf>,
    /// Suite directory whose `solutions/` drive the oracle model (`run`).
    #[arg(long, env = "MAPLE_SOLUTIONS")]
    pub solutions: Option<PathBuf>,
    #[arg(long, env = "MAPLE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "MAPLE_P_NOOP")]
    pub p_noop: Option<f64>,
    #[arg(long, env = "MAPLE_P_MISROUTE")]
    pub p_misroute: Option<f64>,
    /// Step budget per task.
    #[arg(long, env = "MAPLE_BUDGET")]
    pub budget: Option<usize>,
    #[arg(long, env = "MAPLE_NO_PLANNER")]
    pub no_planner: bool,
    #[arg(long, env = "MAPLE_SINGLE_PLAN")]
    pub single_plan: bool,
    #[arg(long, env = "MAPLE_NO_CONDITIONS")]
    pub no_conditions: bool,
    #[arg(long, env = "MAPLE_NO_MENTOR")]
    pub no_mentor: bool,
    /// Knowledge store shared across runs; default: a fresh
    /// `knowledge.json` in the output directory.
    #[arg(long, env = "MAPLE_KB")]
    pub kb: Option<PathBuf>,
    #[arg(long, env = "MAPLE_OUT")]
    pub out: Option<PathBuf>,
    /// App-name → package map for the adb device.
    #[arg(long, env = "MAPLE_PACKAGES")]
    pub packages: Option<PathBuf>,
    #[arg(long, env = "MAPLE_PERCEPTION_URL")]
    pub perception_url: Option<String>,
}

/// The config file: the same keys as the flags, in snake case.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    task: Option<PathBuf>,
    suite: Option<PathBuf>,
    device: Option<String>,
    world: Option<PathBuf>,
    model: Option<String>,
    replay: Option<PathBuf>,
    record: Option<PathBuf>,
    solutions: Option<PathBuf>,
    seed: Option<u64>,
    p_noop: Option<f64>,
    p_misroute: Option<f64>,
    budget: Option<usize>,
    #[serde(default)]
    ablations: Vec<Ablation>,
    kb: Option<PathBuf>,
    out: Option<PathBuf>,
    packages: Option<PathBuf>,
    perception_url: Option<String>,
    /// Per-agent backends, keyed by request tag prefix (e.g. `actor`).
    #[serde(default)]
    agent_models: BTreeMap<String, String>,
}

/// Tag prefixes an agent model override may name.
pub const AGENT_PREFIXES: [&str; 7] =
    [tags::PLANNER, tags::REPLANNER, tags::STATE, tags::ACTOR, tags::VERIFY, tags::RECOVERY, tags::MENTOR];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Sim,
    Adb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Oracle,
    Replay,
    Live(Provider),
}

fn parse_model(s: &str) -> Result<ModelSpec, String> {
    match s.trim() {
        "oracle" => Ok(ModelSpec::Oracle),
        "replay" => Ok(ModelSpec::Replay),
        other => match other.strip_prefix("live:") {
            Some(p) => p.parse().map(ModelSpec::Live).map_err(|e| e.to_string()),
            None => Err(format!("unknown model {other:?} (oracle, replay or live:<provider>)")),
        },
    }
}

/// Everything a run needs; also written to `config.json` in the run
/// directory.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub task: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub device: DeviceKind,
    pub world: Option<PathBuf>,
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(skip)]
    pub model: ModelSpec,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub solutions: Option<PathBuf>,
    pub seed: u64,
    pub p_noop: f64,
    pub p_misroute: f64,
    pub budget: usize,
    pub ablations: Vec<Ablation>,
    pub kb: Option<PathBuf>,
    pub out: PathBuf,
    pub packages: Option<PathBuf>,
    pub perception_url: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub agent_models: BTreeMap<String, String>,
}

impl ResolvedConfig {
    /// The per-agent overrides with their parsed specs.
    pub fn overrides(&self) -> Vec<(&str, ModelSpec)> {
        self.agent_models
            .iter()
            .map(|(prefix, spec)| (prefix.as_str(), parse_model(spec).expect("validated in resolve")))
            .collect()
    }

    pub fn faults(&self) -> FaultPolicy {
        FaultPolicy { seed: self.seed, p_noop: self.p_noop, p_misroute: self.p_misroute }
    }

    pub fn settings(&self) -> AgentSettings {
        let base = AgentSettings { step_budget: self.budget, ..AgentSettings::default() };
        self.ablations.iter().fold(base, |s, a| s.with_ablation(*a))
    }
}

pub fn resolve(args: RunArgs, file: Option<&Path>) -> Result<ResolvedConfig, String> {
    let file = match file {
        Some(path) => {
            let doc = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            toml::from_str::<FileConfig>(&doc).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let device = match args.device.or(file.device).as_deref().unwrap_or("sim") {
        "sim" => DeviceKind::Sim,
        "adb" => DeviceKind::Adb,
        other => return Err(format!("unknown device {other:?} (sim or adb)")),
    };
    let model_name = args.model.or(file.model).unwrap_or_else(|| "oracle".into());
    let model = parse_model(&model_name)?;

    let mut ablations = file.ablations;
    for (on, a) in [
        (args.no_planner, Ablation::NoPlanner),
        (args.single_plan, Ablation::SinglePlan),
        (args.no_conditions, Ablation::NoConditions),
        (args.no_mentor, Ablation::NoMentor),
    ] {
        if on && !ablations.contains(&a) {
            ablations.push(a);
        }
    }

    let config = ResolvedConfig {
        task: args.task.or(file.task),
        suite: args.suite.or(file.suite),
        device,
        world: args.world.or(file.world),
        model_name,
        model,
        replay: args.replay.or(file.replay),
        record: args.record.or(file.record),
        solutions: args.solutions.or(file.solutions),
        seed: args.seed.or(file.seed).unwrap_or(0),
        p_noop: args.p_noop.or(file.p_noop).unwrap_or(0.0),
        p_misroute: args.p_misroute.or(file.p_misroute).unwrap_or(0.0),
        budget: args.budget.or(file.budget).unwrap_or(AgentSettings::default().step_budget),
        ablations,
        kb: args.kb.or(file.kb),
        out: args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        packages: args.packages.or(file.packages),
        perception_url: args.perception_url.or(file.perception_url),
        agent_models: file.agent_models,
    };
    for (prefix, spec) in &config.agent_models {
        if !AGENT_PREFIXES.contains(&prefix.as_str()) {
            return Err(format!("agent_models: unknown agent {prefix:?} (one of {})", AGENT_PREFIXES.join(", ")));
        }
        if parse_model(spec)? == ModelSpec::Oracle {
            return Err(format!("agent_models.{prefix}: the oracle serves whole runs only"));
        }
    }
    config.faults().validate()?;
    if config.budget == 0 {
        return Err("the step budget must be positive".into());
    }
    Ok(config)
}
