//! Reproducible evaluation harness for mobile GUI agents.
//!
//! An episodic loop over a snapshot-managed simulated device, a hybrid
//! action space with user-clarification and MCP tool calls, four
//! deterministic task verifiers, and a metrics engine, runnable end-to-end
//! against scripted agents at desk scale.

pub mod actions;
pub mod agent;
pub mod chat;
pub mod device;
pub mod evaluators;
pub mod mcp;
pub mod metrics;
pub mod predicate;
pub mod runner;
pub mod sql;
pub mod user_sim;

pub use actions::{parse_grounder_output, parse_planner_output, serialize_action, Action, ParseError, PlannerTurn};
pub use agent::{run_episode, AgentPolicy, EpisodeTrace, ScriptedPolicy, Termination};
pub use device::{load_world, DeviceState, Snapshot, StepOutcome};
pub use evaluators::{evaluate, EvaluatorConfig, Verdict};
pub use metrics::{build_report, EpisodeRecord, MetricsReport, TaskCategory};
pub use runner::{load_tasks, RunConfig, TaskSet, TaskSpec};
pub use user_sim::{build_user_prompt, UserProfile, UserSim};
