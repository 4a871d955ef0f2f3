//! Task registry, episode orchestration, validation mode, and persistence.
//!
//! Tasks are authored in a TOML file, one block per task with the evaluator
//! payload inline. A run restores a fresh snapshot per episode, wires the
//! user simulator and the task-restricted tool registry, drives the episode,
//! evaluates it, and persists the trace, screenshots, and episode records
//! under the artifact directory.

pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use crate::agent::{run_episode, AgentPolicy, ChatPolicy, EpisodeTrace, McpSession, ScriptedPolicy};
use crate::chat::{EndpointConfig, HttpChatTransport};
use crate::device::{load_world, DeviceState, FixtureError};
use crate::evaluators::{evaluate, EvaluatorConfig, Verdict};
use crate::mcp::{
    load_catalog, register_catalog, render_tool_block, FixtureTransport, McpError, Registry, DEFAULT_CONTENT_CAP,
};
use crate::metrics::{build_report, EpisodeRecord, MetricsError, MetricsReport, TaskCategory};
use crate::user_sim::{UserBackend, UserProfile, UserSim};
use trace::{write_trace, TraceHeader};

pub const DEFAULT_BUDGET: u32 = 50;
pub const MAX_VALIDATION_ATTEMPTS: usize = 5;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("task {task_id}: invalid {field}: {message}")]
    Schema { task_id: String, field: String, message: String },
    #[error("task file {path}: {message}")]
    TaskFile { path: String, message: String },
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Mcp(#[from] McpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("device: {0}")]
    Device(#[from] crate::device::DeviceError),
    #[error("script for task {task_id}: {message}")]
    Script { task_id: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("episode hook {hook:?} exited with {status}")]
    Hook { hook: String, status: i32 },
    #[error("chat policy requested but no endpoint configured")]
    MissingEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub goal: String,
    pub category: TaskCategory,
    /// World fixture path (relative to the task file) whose loaded state is
    /// snapshotted as the episode's starting point.
    pub world: String,
    pub evaluator: EvaluatorConfig,
    pub user_info: String,
    pub mcp_allowlist: BTreeSet<(String, String)>,
    pub budget: u32,
    pub apps_involved: Vec<String>,
    pub mcp_content_cap: usize,
}

#[derive(Debug, Deserialize)]
struct TaskFileRaw {
    #[serde(default)]
    catalog: Option<String>,
    #[serde(default)]
    fixtures: Option<String>,
    #[serde(default)]
    tasks: Vec<TaskRaw>,
}

#[derive(Debug, Deserialize)]
struct TaskRaw {
    id: String,
    goal: String,
    category: TaskCategory,
    world: String,
    evaluator: EvaluatorConfig,
    #[serde(default)]
    user_info: String,
    #[serde(default)]
    mcp_allowlist: Vec<(String, String)>,
    #[serde(default)]
    budget: Option<u32>,
    #[serde(default)]
    apps_involved: Vec<String>,
    #[serde(default)]
    mcp_content_cap: Option<usize>,
}

#[derive(Debug)]
pub struct TaskSet {
    pub dir: PathBuf,
    pub catalog_path: Option<PathBuf>,
    pub fixtures_path: Option<PathBuf>,
    pub tasks: Vec<TaskSpec>,
}

impl TaskSet {
    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Loads the MCP catalog named by the task file, or an empty registry.
    pub fn load_registry(&self) -> Result<Registry, RunnerError> {
        match &self.catalog_path {
            Some(path) => Ok(register_catalog(load_catalog(path)?)?),
            None => Ok(Registry::default()),
        }
    }

    /// Loads the fixture tool transport named by the task file, or an empty
    /// one (every call then fails as a tool error).
    pub fn load_fixture_transport(&self) -> Result<FixtureTransport, RunnerError> {
        match &self.fixtures_path {
            Some(path) => Ok(FixtureTransport::load(path)?),
            None => Ok(FixtureTransport::new()),
        }
    }
}

/// Parses and validates a task file, rejecting specs that violate task
/// invariants with the task id and field named.
pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskSet, RunnerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunnerError::TaskFile { path: path.display().to_string(), message: e.to_string() })?;
    let raw: TaskFileRaw = toml::from_str(&text)
        .map_err(|e| RunnerError::TaskFile { path: path.display().to_string(), message: e.to_string() })?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let schema = |task_id: &str, field: &str, message: String| RunnerError::Schema {
        task_id: task_id.to_string(),
        field: field.to_string(),
        message,
    };

    let mut seen = BTreeSet::new();
    let mut tasks = Vec::new();
    for t in raw.tasks {
        if t.id.is_empty() {
            return Err(schema("?", "id", "empty id".into()));
        }
        if !seen.insert(t.id.clone()) {
            return Err(schema(&t.id, "id", "duplicate task id".into()));
        }
        let budget = t.budget.unwrap_or(DEFAULT_BUDGET);
        if budget < 1 {
            return Err(schema(&t.id, "budget", "budget must be >= 1".into()));
        }
        if t.category == TaskCategory::Interaction && t.user_info.trim().is_empty() {
            return Err(schema(&t.id, "user_info", "interaction tasks must carry withheld user information".into()));
        }
        if t.category == TaskCategory::Mcp && t.mcp_allowlist.is_empty() {
            return Err(schema(&t.id, "mcp_allowlist", "mcp tasks must allow at least one tool".into()));
        }
        if t.world.trim().is_empty() {
            return Err(schema(&t.id, "world", "world fixture path is required".into()));
        }
        t.evaluator.validate().map_err(|m| schema(&t.id, "evaluator", m))?;
        tasks.push(TaskSpec {
            id: t.id,
            goal: t.goal,
            category: t.category,
            world: t.world,
            evaluator: t.evaluator,
            user_info: t.user_info,
            mcp_allowlist: t.mcp_allowlist.into_iter().collect(),
            budget,
            apps_involved: t.apps_involved,
            mcp_content_cap: t.mcp_content_cap.unwrap_or(DEFAULT_CONTENT_CAP),
        });
    }

    Ok(TaskSet {
        catalog_path: raw.catalog.as_ref().map(|c| dir.join(c)),
        fixtures_path: raw.fixtures.as_ref().map(|f| dir.join(f)),
        dir,
        tasks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Scripted,
    Chat,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Scripted => "scripted",
            PolicyKind::Chat => "chat",
        }
    }
}

/// Endpoint wiring for chat-backed planner, grounder, and user simulator.
/// One base URL and credential variable serve all three roles.
#[derive(Debug, Clone)]
pub struct ChatSettings {
    pub base_url: String,
    pub planner_model: String,
    pub grounder_model: String,
    pub user_model: String,
    pub credential_env: String,
}

impl ChatSettings {
    fn endpoint(&self, model: &str) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model: model.to_string(),
            credential_env: self.credential_env.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tasks_path: PathBuf,
    pub filter: Option<String>,
    pub policy: PolicyKind,
    /// Directory of `<task_id>.txt` scripts for the scripted policy.
    /// Defaults to `scripts/solutions` next to the task file.
    pub scripts_dir: Option<PathBuf>,
    pub chat: Option<ChatSettings>,
    pub chat_user: bool,
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Strict stance: infrastructure-failed episodes count as failures.
    /// When relaxed they are excluded from every metric denominator.
    pub strict_infra: bool,
    pub pre_episode_hook: Option<String>,
    pub post_episode_hook: Option<String>,
}

impl RunConfig {
    pub fn new(tasks_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            tasks_path: tasks_path.into(),
            filter: None,
            policy: PolicyKind::Scripted,
            scripts_dir: None,
            chat: None,
            chat_user: false,
            parallelism: 1,
            out_dir: out_dir.into(),
            seed: 0,
            strict_infra: true,
            pre_episode_hook: None,
            post_episode_hook: None,
        }
    }
}

#[derive(Debug)]
pub struct EpisodeOutcome {
    pub record: EpisodeRecord,
    pub verdict: Verdict,
    pub trace: EpisodeTrace,
    pub snapshot_digest: String,
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: MetricsReport,
    pub rendered: String,
    pub records: Vec<EpisodeRecord>,
    pub out_dir: PathBuf,
}

fn matches_filter(task: &TaskSpec, filter: Option<&str>) -> bool {
    let Some(expr) = filter else { return true };
    expr.split(',').map(str::trim).filter(|t| !t.is_empty()).any(|token| {
        task.id.contains(token) || task.category.as_str() == token
    })
}

fn script_path(set: &TaskSet, config: &RunConfig, task_id: &str) -> PathBuf {
    let dir = config.scripts_dir.clone().unwrap_or_else(|| set.dir.join("scripts").join("solutions"));
    dir.join(format!("{task_id}.txt"))
}

fn build_policy(
    set: &TaskSet,
    config: &RunConfig,
    task: &TaskSpec,
    registry: &Registry,
) -> Result<Box<dyn AgentPolicy>, RunnerError> {
    match config.policy {
        PolicyKind::Scripted => {
            let path = script_path(set, config, &task.id);
            let text = std::fs::read_to_string(&path).map_err(|e| RunnerError::Script {
                task_id: task.id.clone(),
                message: format!("{}: {e}", path.display()),
            })?;
            let policy = ScriptedPolicy::from_script(&text)
                .map_err(|e| RunnerError::Script { task_id: task.id.clone(), message: e.to_string() })?;
            Ok(Box::new(policy))
        }
        PolicyKind::Chat => {
            let chat = config.chat.as_ref().ok_or(RunnerError::MissingEndpoint)?;
            let tool_block = if task.mcp_allowlist.is_empty() {
                String::new()
            } else {
                render_tool_block(registry, &task.mcp_allowlist)
            };
            Ok(Box::new(ChatPolicy::new(
                Box::new(HttpChatTransport::new(chat.endpoint(&chat.planner_model))),
                chat.planner_model.clone(),
                Box::new(HttpChatTransport::new(chat.endpoint(&chat.grounder_model))),
                chat.grounder_model.clone(),
                tool_block,
            )))
        }
    }
}

fn build_user(config: &RunConfig, task: &TaskSpec, device: &DeviceState) -> Result<UserSim, RunnerError> {
    let profile = UserProfile {
        goal: task.goal.clone(),
        relevant_information: task.user_info.clone(),
        today: device.clock.clone(),
        backend: UserBackend::Scripted,
    };
    if config.chat_user {
        let chat = config.chat.as_ref().ok_or(RunnerError::MissingEndpoint)?;
        let transport = HttpChatTransport::new(chat.endpoint(&chat.user_model));
        Ok(UserSim::chat(profile, Box::new(transport), chat.user_model.clone()))
    } else {
        Ok(UserSim::scripted(profile))
    }
}

fn run_hook(hook: &Option<String>, task_id: &str) -> Result<(), RunnerError> {
    let Some(cmd) = hook else { return Ok(()) };
    let status = std::process::Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .env("MWORLD_TASK_ID", task_id)
        .status()?;
    if status.success() {
        Ok(())
    } else {
        Err(RunnerError::Hook { hook: cmd.clone(), status: status.code().unwrap_or(-1) })
    }
}

/// Runs one task end to end: restore, episode, verdict. The device is
/// always a fresh restore of the task's world snapshot.
pub fn run_task(
    set: &TaskSet,
    task: &TaskSpec,
    policy: &mut dyn AgentPolicy,
    user_for: impl FnOnce(&DeviceState) -> Result<UserSim, RunnerError>,
    catalog: &Registry,
    fixtures: &FixtureTransport,
) -> Result<EpisodeOutcome, RunnerError> {
    let initial = load_world(set.dir.join(&task.world))?;
    let snapshot = initial.capture_snapshot();
    let mut device = DeviceState::restore_snapshot(&snapshot)?;
    assert_eq!(device.digest(), snapshot.digest, "episode must start from the exact task snapshot");

    let user = user_for(&device)?;
    let registry = catalog.restricted_to(&task.mcp_allowlist);
    let mut transport = fixtures.clone();
    let mut mcp = McpSession { registry: &registry, transport: &mut transport, content_cap: task.mcp_content_cap };

    let trace = run_episode(policy, &mut device, &user, &mut mcp, &task.goal, task.budget);

    let digest_before_eval = device.digest();
    let verdict = evaluate(&task.evaluator, &device, trace.answer.as_deref());
    debug_assert_eq!(device.digest(), digest_before_eval, "evaluators are read-only");

    let infra = trace.infrastructure_failure.is_some() || verdict.infrastructure;
    let record = EpisodeRecord {
        task_id: task.id.clone(),
        category: task.category,
        s: if trace.infrastructure_failure.is_some() { 0 } else { verdict.score },
        t: trace.len(),
        c: trace.ask_user_count(),
        m: trace.mcp_call_count(),
        infra_failed: infra,
    };
    Ok(EpisodeOutcome { record, verdict, trace, snapshot_digest: snapshot.digest })
}

fn persist_episode(config: &RunConfig, task: &TaskSpec, outcome: &EpisodeOutcome) -> Result<(), RunnerError> {
    let task_dir = config.out_dir.join(&task.id);
    let shots_dir = task_dir.join("screenshots");
    std::fs::create_dir_all(&shots_dir)?;
    write_trace(
        &task_dir.join("trace.jsonl"),
        TraceHeader {
            task_id: task.id.clone(),
            category: task.category,
            snapshot_digest: outcome.snapshot_digest.clone(),
            budget: task.budget,
            seed: config.seed,
            policy: config.policy.as_str().to_string(),
        },
        &outcome.trace,
        &outcome.verdict,
    )?;
    for (index, png) in &outcome.trace.screenshots {
        std::fs::write(shots_dir.join(format!("step_{index:04}.png")), png)?;
    }
    Ok(())
}

/// Runs every selected task and persists traces, screenshots, the episode
/// records, and the rendered report under the artifact directory.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunnerError> {
    let set = load_tasks(&config.tasks_path)?;
    let catalog = set.load_registry()?;
    let fixtures = set.load_fixture_transport()?;
    let selected: Vec<&TaskSpec> =
        set.tasks.iter().filter(|t| matches_filter(t, config.filter.as_deref())).collect();

    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(
        config.out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "seed": config.seed,
            "strict_infra": config.strict_infra,
            "policy": config.policy.as_str(),
            "parallelism": config.parallelism,
        }))? + "\n",
    )?;

    let queue: Mutex<std::collections::VecDeque<usize>> = Mutex::new((0..selected.len()).collect());
    let results: Mutex<Vec<(usize, EpisodeOutcome)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<RunnerError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.max(1) {
            scope.spawn(|| loop {
                let Some(i) = queue.lock().unwrap().pop_front() else { return };
                let task = selected[i];
                let one = || -> Result<EpisodeOutcome, RunnerError> {
                    run_hook(&config.pre_episode_hook, &task.id)?;
                    let mut policy = build_policy(&set, config, task, &catalog)?;
                    let outcome =
                        run_task(&set, task, policy.as_mut(), |d| build_user(config, task, d), &catalog, &fixtures)?;
                    persist_episode(config, task, &outcome)?;
                    run_hook(&config.post_episode_hook, &task.id)?;
                    Ok(outcome)
                };
                match one() {
                    Ok(outcome) => results.lock().unwrap().push((i, outcome)),
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        queue.lock().unwrap().clear();
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut outcomes = results.into_inner().unwrap();
    outcomes.sort_by(|a, b| a.0.cmp(&b.0));
    let records: Vec<EpisodeRecord> = outcomes.iter().map(|(_, o)| o.record.clone()).collect();

    write_results(&config.out_dir.join("results.jsonl"), &records)?;
    let (report, rendered) = summarize(&records, config.strict_infra, config.policy.as_str(), config.seed)?;
    std::fs::write(config.out_dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(config.out_dir.join("report.txt"), &rendered)?;

    Ok(RunSummary { report, rendered, records, out_dir: config.out_dir.clone() })
}

fn summarize(
    records: &[EpisodeRecord],
    strict_infra: bool,
    policy: &str,
    seed: u64,
) -> Result<(MetricsReport, String), RunnerError> {
    let scored: Vec<EpisodeRecord> = if strict_infra {
        records.to_vec()
    } else {
        records.iter().filter(|r| !r.infra_failed).cloned().collect()
    };
    let report = build_report(&scored)?;
    let note = format!(
        "policy={policy} seed={seed} strict_infra={strict_infra} (infra-failed episodes {})",
        if strict_infra { "count as failures" } else { "are excluded from denominators" }
    );
    let rendered = report.render_text(&note);
    Ok((report, rendered))
}

fn write_results(path: &Path, records: &[EpisodeRecord]) -> Result<(), RunnerError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<EpisodeRecord>, RunnerError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunnerError::Io(std::io::Error::other(e))))
        .collect()
}

/// Recomputes the report from persisted records; equals the live report of
/// the run that wrote them.
pub fn report(artifact_dir: impl AsRef<Path>) -> Result<(MetricsReport, String), RunnerError> {
    let dir = artifact_dir.as_ref();
    let records = read_results(&dir.join("results.jsonl"))?;
    let meta: serde_json::Value = std::fs::read_to_string(dir.join("run_meta.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_else(|| serde_json::json!({}));
    let strict = meta.get("strict_infra").and_then(serde_json::Value::as_bool).unwrap_or(true);
    let policy = meta.get("policy").and_then(serde_json::Value::as_str).unwrap_or("unknown").to_string();
    let seed = meta.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0);
    summarize(&records, strict, &policy, seed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationResult {
    pub task_id: String,
    /// Verdict score per attempt, in order; stops early on the first pass.
    pub attempts: Vec<u8>,
    pub valid: bool,
}

/// Human-in-the-loop task validation: up to five operator-driven attempts;
/// any passing verdict confirms the task is solvable, five failures flag it
/// for revision.
pub fn validate_task(
    set: &TaskSet,
    task: &TaskSpec,
    mut make_policy: impl FnMut(usize) -> Result<Box<dyn AgentPolicy>, RunnerError>,
    catalog: &Registry,
    fixtures: &FixtureTransport,
) -> Result<ValidationResult, RunnerError> {
    let mut attempts = Vec::new();
    for attempt in 0..MAX_VALIDATION_ATTEMPTS {
        let mut policy = make_policy(attempt)?;
        let outcome = run_task(
            set,
            task,
            policy.as_mut(),
            |device| {
                Ok(UserSim::scripted(UserProfile {
                    goal: task.goal.clone(),
                    relevant_information: task.user_info.clone(),
                    today: device.clock.clone(),
                    backend: UserBackend::Scripted,
                }))
            },
            catalog,
            fixtures,
        )?;
        attempts.push(outcome.verdict.score);
        if outcome.verdict.score == 1 {
            return Ok(ValidationResult { task_id: task.id.clone(), attempts, valid: true });
        }
    }
    Ok(ValidationResult { task_id: task.id.clone(), attempts, valid: false })
}

/// One row per task for `list-tasks`.
pub fn task_listing(set: &TaskSet) -> Vec<BTreeMap<&'static str, String>> {
    set.tasks
        .iter()
        .map(|t| {
            let mut row = BTreeMap::new();
            row.insert("id", t.id.clone());
            row.insert("category", t.category.as_str().to_string());
            row.insert("eval_mode", format!("{:?}", t.evaluator.mode()));
            row.insert("budget", t.budget.to_string());
            row.insert("goal", t.goal.clone());
            row
        })
        .collect()
}
