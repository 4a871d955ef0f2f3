use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mworld_core::actions::{parse_planner_output, PlannerTurn, Point};
use mworld_core::agent::{AgentPolicy, HistoryEntry, PolicyError, ScriptedPolicy};
use mworld_core::device::Frame;
use mworld_core::runner::{self, ChatSettings, PolicyKind, RunConfig};

#[derive(Parser)]
#[command(name = "mworld", version, about = "Episodic evaluation harness for mobile GUI agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Scripted,
    Chat,
}

#[derive(Args)]
struct ChatArgs {
    /// Chat-completion endpoint base URL (OpenAI-compatible).
    #[arg(long, default_value = "http://127.0.0.1:8000/v1")]
    chat_base_url: String,
    /// Planner model name.
    #[arg(long, default_value = "planner")]
    chat_model: String,
    /// Grounding-executor model name.
    #[arg(long, default_value = "grounder")]
    grounder_model: String,
    /// Simulated-user model name (with --chat-user).
    #[arg(long, default_value = "user")]
    user_model: String,
    /// Environment variable holding the API credential; the value itself
    /// never appears in traces or reports.
    #[arg(long, default_value = "MWORLD_CHAT_API_KEY")]
    chat_key_env: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run selected tasks and write traces, screenshots, and the report.
    Run {
        #[arg(long)]
        tasks: PathBuf,
        /// Comma-separated task ids, id substrings, or category names.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_enum, default_value = "scripted")]
        policy: PolicyArg,
        /// Directory of <task_id>.txt scripts; defaults to
        /// scripts/solutions next to the task file.
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Count infrastructure-failed episodes as failures (true) or drop
        /// them from metric denominators (false).
        #[arg(long, default_value_t = true)]
        strict_infra: bool,
        /// Answer ask_user through the chat endpoint instead of the
        /// scripted simulator.
        #[arg(long, default_value_t = false)]
        chat_user: bool,
        /// Shell command run before each episode (real-emulator setups).
        #[arg(long)]
        pre_episode: Option<String>,
        /// Shell command run after each episode.
        #[arg(long)]
        post_episode: Option<String>,
        #[command(flatten)]
        chat: ChatArgs,
    },
    /// Validate one task with up to five operator attempts.
    Validate {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        task: String,
        /// Operator script; omit to drive attempts interactively on stdin.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Recompute the report from a run's artifact directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// List the tasks in a task file.
    ListTasks {
        #[arg(long)]
        tasks: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            tasks,
            filter,
            policy,
            scripts,
            parallel,
            out,
            seed,
            strict_infra,
            chat_user,
            pre_episode,
            post_episode,
            chat,
        } => {
            let mut config = RunConfig::new(tasks, out);
            config.filter = filter;
            config.policy = match policy {
                PolicyArg::Scripted => PolicyKind::Scripted,
                PolicyArg::Chat => PolicyKind::Chat,
            };
            config.scripts_dir = scripts;
            config.parallelism = parallel;
            config.seed = seed;
            config.strict_infra = strict_infra;
            config.chat_user = chat_user;
            config.pre_episode_hook = pre_episode;
            config.post_episode_hook = post_episode;
            if matches!(config.policy, PolicyKind::Chat) || chat_user {
                config.chat = Some(ChatSettings {
                    base_url: chat.chat_base_url,
                    planner_model: chat.chat_model,
                    grounder_model: chat.grounder_model,
                    user_model: chat.user_model,
                    credential_env: chat.chat_key_env,
                });
            }
            let summary = runner::run(&config).context("run failed")?;
            print!("{}", summary.rendered);
            println!("artifacts: {}", summary.out_dir.display());
            Ok(())
        }
        Command::Validate { tasks, task, script } => {
            let set = runner::load_tasks(&tasks)?;
            let Some(spec) = set.task(&task) else {
                bail!("no task {task:?} in {}", tasks.display());
            };
            let catalog = set.load_registry()?;
            let fixtures = set.load_fixture_transport()?;
            let result = runner::validate_task(
                &set,
                spec,
                |attempt| match &script {
                    Some(path) => {
                        let script_err = |message: String| runner::RunnerError::Script {
                            task_id: task.clone(),
                            message,
                        };
                        let text = std::fs::read_to_string(path)
                            .map_err(|e| script_err(format!("{}: {e}", path.display())))?;
                        let policy =
                            ScriptedPolicy::from_script(&text).map_err(|e| script_err(e.to_string()))?;
                        Ok(Box::new(policy) as Box<dyn AgentPolicy>)
                    }
                    None => {
                        println!("--- attempt {} of {} ---", attempt + 1, runner::MAX_VALIDATION_ATTEMPTS);
                        Ok(Box::new(InteractiveOperator) as Box<dyn AgentPolicy>)
                    }
                },
                &catalog,
                &fixtures,
            )?;
            for (i, score) in result.attempts.iter().enumerate() {
                println!("attempt {}: verdict {}", i + 1, score);
            }
            if result.valid {
                println!("task {}: VALID", result.task_id);
            } else {
                println!("task {}: FLAGGED (no passing attempt in {})", result.task_id, result.attempts.len());
            }
            Ok(())
        }
        Command::Report { dir } => {
            let (_, rendered) = runner::report(&dir)?;
            print!("{rendered}");
            Ok(())
        }
        Command::ListTasks { tasks } => {
            let set = runner::load_tasks(&tasks)?;
            println!("{:<26} {:<12} {:<16} {:>6}  goal", "id", "category", "eval", "budget");
            for row in runner::task_listing(&set) {
                println!(
                    "{:<26} {:<12} {:<16} {:>6}  {}",
                    row["id"], row["category"], row["eval_mode"], row["budget"], row["goal"]
                );
            }
            Ok(())
        }
    }
}

/// Human-in-the-loop operator: prints the visible elements each step and
/// reads planner-format turns from stdin.
struct InteractiveOperator;

impl AgentPolicy for InteractiveOperator {
    fn plan(
        &mut self,
        goal: &str,
        history: &[HistoryEntry],
        frame: &Frame,
        retry_error: Option<&str>,
    ) -> Result<PlannerTurn, PolicyError> {
        println!("goal: {goal}");
        if let Some(err) = retry_error {
            println!("previous input was rejected: {err}");
        }
        println!("step {} — visible elements:", history.len() + 1);
        for el in &frame.elements {
            println!(
                "  [{}] {:?} at ({}, {}) {}",
                el.id,
                el.text,
                el.center.x,
                el.center.y,
                format_args!("{:?}", el.role)
            );
        }
        print!("Action JSON (or full 'Action: {{...}}' line)> ");
        std::io::stdout().flush().ok();
        let mut line = String::new();
        std::io::stdin()
            .lock()
            .read_line(&mut line)
            .map_err(|_| PolicyError::ScriptExhausted)?;
        if line.trim().is_empty() {
            return Err(PolicyError::ScriptExhausted);
        }
        let raw = if line.contains("Action:") { line.clone() } else { format!("Action: {line}") };
        Ok(parse_planner_output(&raw)?)
    }

    fn ground(&mut self, target_desc: &str, frame: &Frame) -> Result<Point, PolicyError> {
        // Same exact-text grounding the scripted policy uses.
        frame
            .elements
            .iter()
            .find(|e| e.text == target_desc)
            .map(|e| e.center)
            .ok_or_else(|| PolicyError::Grounding {
                desc: target_desc.to_string(),
                reason: "no visible element with that exact text".to_string(),
            })
    }
}
