//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines; the golden fixtures live in `tasks/` at the
//! workspace root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use mworld_core::actions::{
    parse_planner_output, serialize_action, Action, GestureTarget, GoalStatus, ScrollDirection,
};
use mworld_core::agent::{run_episode, McpSession, ScriptedPolicy, Termination};
use mworld_core::device::{load_world, DeviceClock, DeviceState};
use mworld_core::evaluators::{evaluate, EvalMode};
use mworld_core::mcp::{dispatch, register_catalog, FixtureTransport, ToolReply, ToolSpec};
use mworld_core::metrics::{
    avg_mcp_calls, avg_queries, avg_steps, build_report, category_sr, success_rate, triggered_count, uiq,
    EpisodeRecord, TaskCategory,
};
use mworld_core::runner::{load_tasks, run, RunConfig};
use mworld_core::user_sim::{Disposition, UserProfile, UserSim};

fn tasks_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tasks").canonicalize().expect("tasks directory")
}

fn golden_config(out: &Path) -> RunConfig {
    RunConfig::new(tasks_dir().join("golden.toml"), out)
}

fn sabotage_config(out: &Path) -> RunConfig {
    let mut config = golden_config(out);
    config.scripts_dir = Some(tasks_dir().join("scripts/sabotage"));
    config
}

/// Known solution lengths for every golden task.
fn expected_steps() -> BTreeMap<&'static str, u32> {
    BTreeMap::from([
        ("alarm_weekend", 11),
        ("mail_lunch_note", 10),
        ("files_count", 3),
        ("files_archive_drag", 4),
        ("mastodon_reply", 6),
        ("mail_send_kevin", 9),
        ("alarm_usual_wakeup", 7),
        ("sms_pickup_code", 7),
        ("calendar_lunch_tomorrow", 12),
        ("maps_driving_distance", 4),
        ("github_commit_mail", 11),
        ("arxiv_mattermost_post", 7),
    ])
}

#[test]
fn c01_golden_suite_passes_in_known_steps_under_30s() {
    let out = tempfile::TempDir::new().unwrap();
    let started = Instant::now();
    let summary = run(&golden_config(out.path())).unwrap();
    let elapsed = started.elapsed();

    assert_eq!(summary.records.len(), 12, "the shipped golden set has 12 tasks");
    assert_eq!(summary.report.sr, 1.0, "golden SR must be exactly 1.0: {:?}", summary.records);
    let expected = expected_steps();
    for record in &summary.records {
        assert_eq!(
            record.t,
            expected[record.task_id.as_str()],
            "task {} deviated from its fixture's solution length",
            record.task_id
        );
        assert_eq!(record.s, 1, "task {} failed", record.task_id);
    }
    assert!(elapsed.as_secs_f64() < 30.0, "golden suite took {elapsed:?}, budget is 30s");

    // Category means over the scripted solutions.
    assert_eq!(summary.report.avg_queries, Some(1.25));
    assert_eq!(summary.report.uiq, Some(0.875));
    assert_eq!(summary.report.avg_mcp_calls, Some(5.0 / 3.0));
    println!("ACCEPT 01 golden-suite pass: PASS ({elapsed:?})");
}

#[test]
fn c02_adversarial_suite_fails_with_per_mode_evidence() {
    let out = tempfile::TempDir::new().unwrap();
    let summary = run(&sabotage_config(out.path())).unwrap();
    assert_eq!(summary.records.len(), 12);
    assert_eq!(summary.report.sr, 0.0, "sabotage SR must be exactly 0.0: {:?}", summary.records);

    // Per-mode evidence expectations, from the footer of each trace.
    let evidence_expectation: BTreeMap<&str, (EvalMode, &str)> = BTreeMap::from([
        ("alarm_weekend", (EvalMode::StorageInspect, "no matching record")),
        ("mail_lunch_note", (EvalMode::AppCallback, "no matching \"mail_sent\" event")),
        ("files_count", (EvalMode::TextMatch, "!= expected")),
        ("files_archive_drag", (EvalMode::StorageInspect, "no matching record")),
        ("mastodon_reply", (EvalMode::DbVerify, "query returned no rows")),
        ("mail_send_kevin", (EvalMode::AppCallback, "no matching \"mail_sent\" event")),
        ("alarm_usual_wakeup", (EvalMode::StorageInspect, "no matching record")),
        ("sms_pickup_code", (EvalMode::DbVerify, "query returned no rows")),
        ("calendar_lunch_tomorrow", (EvalMode::StorageInspect, "no matching record")),
        ("maps_driving_distance", (EvalMode::TextMatch, "!= expected")),
        ("github_commit_mail", (EvalMode::AppCallback, "no matching \"mail_sent\" event")),
        ("arxiv_mattermost_post", (EvalMode::DbVerify, "query returned no rows")),
    ]);
    for (task_id, (mode, needle)) in &evidence_expectation {
        let records =
            mworld_core::runner::trace::read_trace(&out.path().join(task_id).join("trace.jsonl")).unwrap();
        let Some(mworld_core::runner::trace::TraceRecord::Footer { verdict, .. }) = records.last() else {
            panic!("{task_id}: trace has no footer");
        };
        assert_eq!(verdict.score, 0, "{task_id} must fail");
        assert_eq!(verdict.mode, *mode, "{task_id} verdict mode");
        assert!(
            verdict.evidence.contains(needle),
            "{task_id}: evidence {:?} missing {needle:?}",
            verdict.evidence
        );
    }
    println!("ACCEPT 02 adversarial-suite fail: PASS");
}

fn random_records(rng: &mut ChaCha8Rng) -> Vec<EpisodeRecord> {
    let n = rng.random_range(1..=40);
    (0..n)
        .map(|i| {
            let category = match rng.random_range(0..3) {
                0 => TaskCategory::GuiOnly,
                1 => TaskCategory::Interaction,
                _ => TaskCategory::Mcp,
            };
            let t = rng.random_range(1..=50u32);
            EpisodeRecord {
                task_id: format!("r{i}"),
                category,
                s: rng.random_range(0..=1u8),
                t,
                c: rng.random_range(0..=t),
                m: rng.random_range(0..=t),
                infra_failed: false,
            }
        })
        .collect()
}

/// Independent brute-force evaluation of the metric definitions, written as
/// plain index loops so it shares nothing with the library implementation.
mod oracle {
    use super::*;

    pub fn sr(records: &[EpisodeRecord]) -> f64 {
        let mut sum = 0.0;
        for r in records {
            sum += r.s as f64;
        }
        sum / records.len() as f64
    }

    pub fn sr_of(records: &[EpisodeRecord], category: TaskCategory) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in records {
            if r.category == category {
                sum += r.s as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn steps(records: &[EpisodeRecord]) -> f64 {
        let mut sum = 0.0;
        for r in records {
            sum += r.t as f64;
        }
        sum / records.len() as f64
    }

    pub fn queries(records: &[EpisodeRecord]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in records {
            if r.category == TaskCategory::Interaction {
                sum += r.c as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn uiq(records: &[EpisodeRecord]) -> Option<f64> {
        let mut q_sum = 0.0;
        let mut interact = 0usize;
        let mut triggered = 0usize;
        for r in records {
            if r.category == TaskCategory::Interaction {
                interact += 1;
                if r.c > 0 {
                    q_sum += r.s as f64 / r.c as f64;
                }
            } else if r.c >= 1 {
                triggered += 1;
            }
        }
        (interact > 0).then(|| q_sum / (interact + triggered) as f64)
    }

    pub fn mcp(records: &[EpisodeRecord]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in records {
            if r.category == TaskCategory::Mcp {
                sum += r.m as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => close(a, b),
        _ => false,
    }
}

#[test]
fn c03_metrics_match_brute_force_oracle() {
    // The worked example: interact {(1,1), (1,2), (0,0)} plus one triggered
    // non-interaction task gives exactly 0.375.
    let worked = vec![
        EpisodeRecord { task_id: "a".into(), category: TaskCategory::Interaction, s: 1, t: 9, c: 1, m: 0, infra_failed: false },
        EpisodeRecord { task_id: "b".into(), category: TaskCategory::Interaction, s: 1, t: 9, c: 2, m: 0, infra_failed: false },
        EpisodeRecord { task_id: "c".into(), category: TaskCategory::Interaction, s: 0, t: 9, c: 0, m: 0, infra_failed: false },
        EpisodeRecord { task_id: "d".into(), category: TaskCategory::GuiOnly, s: 1, t: 9, c: 3, m: 0, infra_failed: false },
    ];
    assert_eq!(uiq(&worked).unwrap(), 0.375);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
    for case in 0..1000 {
        let records = random_records(&mut rng);
        assert!(close(success_rate(&records).unwrap(), oracle::sr(&records)), "sr case {case}");
        assert!(close(avg_steps(&records).unwrap(), oracle::steps(&records)), "steps case {case}");
        for category in [TaskCategory::GuiOnly, TaskCategory::Interaction, TaskCategory::Mcp] {
            assert!(
                close_opt(category_sr(&records, category).ok(), oracle::sr_of(&records, category)),
                "category sr case {case}"
            );
        }
        assert!(close_opt(avg_queries(&records).ok(), oracle::queries(&records)), "queries case {case}");
        assert!(close_opt(uiq(&records).ok(), oracle::uiq(&records)), "uiq case {case}");
        assert!(close_opt(avg_mcp_calls(&records).ok(), oracle::mcp(&records)), "mcp case {case}");

        // The composed report agrees with the scalar functions.
        let report = build_report(&records).unwrap();
        assert!(close(report.sr, oracle::sr(&records)));
        assert_eq!(report.triggered_count, triggered_count(&records));
    }
    println!("ACCEPT 03 metrics oracle equivalence (1000 sets, 1e-12): PASS");
}

#[test]
fn c04_uiq_never_exceeds_interaction_sr() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
    let mut checked = 0;
    for _ in 0..1000 {
        let records = random_records(&mut rng);
        if let (Ok(u), Ok(sr)) = (uiq(&records), category_sr(&records, TaskCategory::Interaction)) {
            assert!(u <= sr + 1e-12, "uiq {u} > interaction sr {sr} for {records:?}");
            checked += 1;
        }
    }
    assert!(checked > 500, "generator produced too few interaction sets ({checked})");
    println!("ACCEPT 04 UIQ <= SR_interact over {checked} record sets: PASS");
}

#[test]
fn c05_full_runs_are_byte_identical() {
    let out_a = tempfile::TempDir::new().unwrap();
    let out_b = tempfile::TempDir::new().unwrap();
    let a = run(&golden_config(out_a.path())).unwrap();
    let b = run(&golden_config(out_b.path())).unwrap();
    assert_eq!(a.report, b.report);

    for task_id in expected_steps().keys() {
        let bytes_a = std::fs::read(out_a.path().join(task_id).join("trace.jsonl")).unwrap();
        let bytes_b = std::fs::read(out_b.path().join(task_id).join("trace.jsonl")).unwrap();
        assert_eq!(bytes_a, bytes_b, "trace bytes differ for {task_id}");
    }
    for file in ["results.jsonl", "report.json", "report.txt"] {
        assert_eq!(
            std::fs::read(out_a.path().join(file)).unwrap(),
            std::fs::read(out_b.path().join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
    println!("ACCEPT 05 determinism (byte-identical traces and reports): PASS");
}

fn random_action(rng: &mut ChaCha8Rng, dims: (u32, u32)) -> Action {
    match rng.random_range(0..8) {
        0 => Action::Click {
            target: GestureTarget::point(rng.random_range(0..dims.0), rng.random_range(0..dims.1)),
        },
        1 => Action::Scroll { direction: ScrollDirection::Down },
        2 => Action::Scroll { direction: ScrollDirection::Up },
        3 => {
            let len = rng.random_range(0..10);
            let text: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            Action::InputText { text }
        }
        4 => Action::NavigateBack,
        5 => Action::NavigateHome,
        6 => Action::KeyboardEnter,
        _ => Action::Wait,
    }
}

#[test]
fn c06_snapshot_round_trip_and_episode_isolation() {
    let world_path = tasks_dir().join("worlds/base.json");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0006);
    for case in 0..100 {
        let mut device = load_world(&world_path).unwrap();
        let steps = rng.random_range(0..=50);
        for _ in 0..steps {
            let action = random_action(&mut rng, device.screen_dims);
            device.apply_action(&action);
        }
        let snap = device.capture_snapshot();
        let restored = DeviceState::restore_snapshot(&snap).unwrap();
        assert_eq!(restored.digest(), device.digest(), "case {case}: digest changed across capture/restore");
        assert_eq!(restored.digest(), snap.digest);
    }

    // Every golden episode starts from the exact task snapshot: the digest
    // recorded in each trace header equals the freshly loaded world digest.
    let world_digest = load_world(&world_path).unwrap().digest();
    let out = tempfile::TempDir::new().unwrap();
    run(&golden_config(out.path())).unwrap();
    for task_id in expected_steps().keys() {
        let records =
            mworld_core::runner::trace::read_trace(&out.path().join(task_id).join("trace.jsonl")).unwrap();
        let Some(mworld_core::runner::trace::TraceRecord::Header { snapshot_digest, .. }) = records.first()
        else {
            panic!("{task_id}: missing header");
        };
        assert_eq!(snapshot_digest, &world_digest, "{task_id} did not start from the task snapshot");
    }
    println!("ACCEPT 06 snapshot round-trip (100 sequences) + pre-episode digests: PASS");
}

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let pool: Vec<char> = "abcdefghijklmnopqrstuvwxyz ABC0123456789_-@.{}\"\\/'中λ!?".chars().collect();
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn random_params(rng: &mut ChaCha8Rng, depth: u8) -> Map<String, Value> {
    let mut map = Map::new();
    for _ in 0..rng.random_range(0..4) {
        let key = format!("k{}", rng.random_range(0..90));
        let value = match rng.random_range(0..5) {
            0 => json!(random_text(rng, 12)),
            1 => json!(rng.random_range(-1000..1000i64)),
            2 => json!(rng.random_bool(0.5)),
            3 => json!([rng.random_range(0..9), random_text(rng, 6)]),
            _ if depth > 0 => Value::Object(random_params(rng, depth - 1)),
            _ => Value::Null,
        };
        map.insert(key, value);
    }
    map
}

fn random_valid_action(rng: &mut ChaCha8Rng) -> Action {
    let target = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            GestureTarget::desc(random_text(rng, 24))
        } else {
            GestureTarget::point(rng.random_range(0..100_000), rng.random_range(0..100_000))
        }
    };
    match rng.random_range(0..14) {
        0 => Action::Click { target: target(rng) },
        1 => Action::DoubleTap { target: target(rng) },
        2 => Action::LongPress { target: target(rng) },
        3 => Action::Drag { start: target(rng), end: target(rng) },
        4 => Action::InputText { text: random_text(rng, 40) },
        5 => Action::Scroll {
            direction: [ScrollDirection::Up, ScrollDirection::Down, ScrollDirection::Left, ScrollDirection::Right]
                [rng.random_range(0..4)],
        },
        6 => Action::NavigateHome,
        7 => Action::NavigateBack,
        8 => Action::KeyboardEnter,
        9 => Action::Wait,
        10 => Action::Answer { text: random_text(rng, 40) },
        11 => Action::Status {
            goal_status: if rng.random_bool(0.5) { GoalStatus::Complete } else { GoalStatus::Infeasible },
        },
        12 => Action::AskUser { text: random_text(rng, 40) },
        _ => Action::McpCall { tool_name: format!("tool_{}", rng.random_range(0..50)), params: random_params(rng, 2) },
    }
}

#[test]
fn c07_parser_round_trip_and_totality() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0007);

    for case in 0..1000 {
        let action = random_valid_action(&mut rng);
        let raw = format!("Thought: fuzz {case}\nAction: {}", serialize_action(&action));
        let turn = parse_planner_output(&raw).unwrap_or_else(|e| panic!("case {case}: {e} for {raw}"));
        assert_eq!(turn.action, action, "case {case} did not round-trip");
    }

    let mut classified: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut aborts = 0usize;
    for case in 0..1000 {
        let raw = match case % 4 {
            // No recognizable action block at all (alphabet excludes ':').
            0 => {
                let pool: Vec<char> = "abcdefghijklmnop qrstuv{}[]\"\\".chars().collect();
                (0..rng.random_range(0..60)).map(|_| pool[rng.random_range(0..pool.len())]).collect::<String>()
            }
            // A valid action truncated somewhere inside the JSON object.
            1 => {
                let full = format!("Action: {}", serialize_action(&random_valid_action(&mut rng)));
                let brace = full.find('{').unwrap();
                let mut cut = rng.random_range(brace..full.len());
                while !full.is_char_boundary(cut) {
                    cut -= 1;
                }
                full[..cut].to_string()
            }
            // Unknown action type.
            2 => format!("Action: {{\"action_type\":\"zz_{}\"}}", random_text(&mut rng, 6).replace(['"', '\\'], "")),
            // Known kind with its required payload missing.
            _ => {
                let kind = ["click", "input_text", "scroll", "status", "mcp", "ask_user"]
                    [rng.random_range(0..6)];
                format!("Action: {{\"action_type\":\"{kind}\"}}")
            }
        };
        let outcome = std::panic::catch_unwind(|| parse_planner_output(&raw));
        match outcome {
            Err(_) => aborts += 1,
            Ok(Ok(turn)) => panic!("case {case}: fuzzed invalid input parsed as {:?} from {raw:?}", turn.action),
            Ok(Err(e)) => {
                let class = match e {
                    mworld_core::ParseError::NoActionBlock => "no_action_block",
                    mworld_core::ParseError::UnknownActionType(_) => "unknown_action_type",
                    mworld_core::ParseError::MissingField(_) => "missing_field",
                    mworld_core::ParseError::MalformedJson(_) => "malformed_json",
                    mworld_core::ParseError::NoToolCallBlock => "no_tool_call",
                    mworld_core::ParseError::BadCoordinateArity => "bad_arity",
                };
                *classified.entry(class).or_default() += 1;
            }
        }
    }
    assert_eq!(aborts, 0, "parser aborted on fuzzed input");
    for class in ["no_action_block", "unknown_action_type", "missing_field", "malformed_json"] {
        assert!(classified.get(class).copied().unwrap_or(0) > 0, "no {class} seen: {classified:?}");
    }
    println!("ACCEPT 07 parser round-trip (1000 valid) + classified errors {classified:?}: PASS");
}

fn bare_episode_env() -> (DeviceState, UserSim, mworld_core::mcp::Registry, FixtureTransport) {
    let device = load_world(tasks_dir().join("worlds/base.json")).unwrap();
    let user = UserSim::scripted(UserProfile {
        goal: "probe".into(),
        relevant_information: String::new(),
        today: device.clock.clone(),
        backend: mworld_core::user_sim::UserBackend::Scripted,
    });
    (device, user, mworld_core::mcp::Registry::default(), FixtureTransport::new())
}

#[test]
fn c08_budget_enforcement_and_immediate_answer() {
    let (mut device, user, registry, mut transport) = bare_episode_env();
    let wait_only: Vec<_> =
        (0..60).map(|_| parse_planner_output("Action: {\"action_type\":\"wait\"}").unwrap()).collect();
    let mut policy = ScriptedPolicy::new(wait_only);
    let mut mcp = McpSession { registry: &registry, transport: &mut transport, content_cap: 4000 };
    let trace = run_episode(&mut policy, &mut device, &user, &mut mcp, "wait forever", 50);
    assert_eq!(trace.termination, Termination::BudgetExhausted);
    assert_eq!(trace.len(), 50, "wait-only policy must stop at exactly the budget");

    let (mut device, user, registry, mut transport) = bare_episode_env();
    let mut policy = ScriptedPolicy::new(vec![
        parse_planner_output("Action: {\"action_type\":\"answer\",\"text\":\"42\"}").unwrap(),
        parse_planner_output("Action: {\"action_type\":\"wait\"}").unwrap(),
    ]);
    let mut mcp = McpSession { registry: &registry, transport: &mut transport, content_cap: 4000 };
    let trace = run_episode(&mut policy, &mut device, &user, &mut mcp, "answer now", 50);
    assert_eq!(trace.termination, Termination::Answered);
    assert_eq!(trace.len(), 1, "answer terminates the task immediately");
    println!("ACCEPT 08 budget enforcement (50-step wait, 1-step answer): PASS");
}

#[test]
fn c09_user_sim_never_fabricates_or_leaks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0009);
    let names = ["alice", "bob", "carol", "dave", "kevin", "lena", "omar", "petra"];
    let today = DeviceClock { date: "2025-10-16".into(), weekday: "Thursday".into() };

    let mut asked = 0usize;
    for profile_idx in 0..20 {
        let mut facts: Vec<(String, String)> = Vec::new();
        let who = names[rng.random_range(0..names.len())];
        facts.push((format!("{who}'s email"), format!("{who}_{profile_idx}@example.com")));
        facts.push(("pickup code".into(), format!("{}", rng.random_range(1000..9999))));
        facts.push(("wifi password".into(), format!("pw-{}", rng.random_range(100..999))));
        if rng.random_bool(0.5) {
            facts.push(("meeting room".into(), format!("Room {}", rng.random_range(1..40))));
        }
        let info = facts.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join("\n");
        let sim = UserSim::scripted(UserProfile {
            goal: format!("task {profile_idx}"),
            relevant_information: info.clone(),
            today: today.clone(),
            backend: mworld_core::user_sim::UserBackend::Scripted,
        });

        let mut questions: Vec<String> = facts.iter().map(|(k, _)| format!("What is the {k}?")).collect();
        questions.push("What is today's date?".into());
        while questions.len() < 10 {
            questions.push(
                [
                    "What's your favorite movie?",
                    "Can you sing me a song?",
                    "Who won the game last night?",
                    "What should I cook tonight?",
                    "Tell me something interesting.",
                    "What is the capital of France?",
                ][rng.random_range(0..6)]
                    .to_string(),
            );
        }

        for question in questions.iter().take(10) {
            let reply = sim.answer_query(question, &[]).unwrap();
            asked += 1;
            match reply.disposition {
                Disposition::Answered => assert!(
                    info.contains(&reply.text) || reply.text == today.date,
                    "fabricated answer {:?} to {question:?} (info: {info:?})",
                    reply.text
                ),
                Disposition::Refused => {
                    for (_, value) in &facts {
                        assert!(
                            !reply.text.contains(value),
                            "refusal leaked {value:?} answering {question:?}"
                        );
                    }
                }
            }
        }
    }
    assert_eq!(asked, 200);
    println!("ACCEPT 09 user-sim no-fabrication over {asked} probes: PASS");
}

#[test]
fn c10_mcp_truncation_keeps_the_exact_head() {
    let registry = register_catalog([ToolSpec {
        server: "Jina AI".into(),
        name: "read_url".into(),
        description: "reader".into(),
        param_schema: BTreeMap::from([(
            "url".to_string(),
            mworld_core::mcp::ParamSpec { param_type: "string".into(), required: true },
        )]),
    }])
    .unwrap();

    // A 20,000-character document, no repeating blocks so head identity is
    // meaningful.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0010);
    let document: String =
        (0..20_000).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect();
    let mut params = Map::new();
    params.insert("url".into(), json!("https://example.com/long.pdf"));
    let mut transport = FixtureTransport::new();
    transport.insert("read_url", &params, ToolReply::Content(document.clone()));

    let result = dispatch(&registry, "read_url", &params, &mut transport, 4_000);
    assert!(result.truncated);
    assert_eq!(result.original_length, 20_000);
    let marker = "…[truncated, 16000 chars omitted]";
    assert!(result.content.ends_with(marker));
    let head = &result.content[..result.content.len() - marker.len()];
    assert_eq!(head.as_bytes(), &document.as_bytes()[..4_000], "content head must be byte-identical");
    println!("ACCEPT 10 MCP truncation (20000 -> cap 4000): PASS");
}

#[test]
fn c11_evaluators_leave_world_digests_unchanged() {
    let set = load_tasks(tasks_dir().join("golden.toml")).unwrap();
    let catalog = set.load_registry().unwrap();
    let fixtures = set.load_fixture_transport().unwrap();

    let mut evaluated = 0usize;
    for (dir, expect_score) in [("scripts/solutions", 1u8), ("scripts/sabotage", 0u8)] {
        for task in &set.tasks {
            let script = std::fs::read_to_string(tasks_dir().join(dir).join(format!("{}.txt", task.id))).unwrap();
            let mut policy = ScriptedPolicy::from_script(&script).unwrap();
            let mut device = load_world(set.dir.join(&task.world)).unwrap();
            let user = UserSim::scripted(UserProfile {
                goal: task.goal.clone(),
                relevant_information: task.user_info.clone(),
                today: device.clock.clone(),
                backend: mworld_core::user_sim::UserBackend::Scripted,
            });
            let registry = catalog.restricted_to(&task.mcp_allowlist);
            let mut transport = fixtures.clone();
            let mut mcp =
                McpSession { registry: &registry, transport: &mut transport, content_cap: task.mcp_content_cap };
            let trace = run_episode(&mut policy, &mut device, &user, &mut mcp, &task.goal, task.budget);

            let before = device.digest();
            let verdict = evaluate(&task.evaluator, &device, trace.answer.as_deref());
            assert_eq!(device.digest(), before, "{dir}/{} evaluator mutated the world", task.id);
            assert_eq!(verdict.score, expect_score, "{dir}/{} unexpected verdict", task.id);
            evaluated += 1;
        }
    }
    assert_eq!(evaluated, 24);
    println!("ACCEPT 11 evaluator read-only across {evaluated} episodes: PASS");
}

// Catalog shape assertions tied to the shipped default catalog.
#[test]
fn shipped_catalog_matches_published_tool_counts() {
    let set = load_tasks(tasks_dir().join("golden.toml")).unwrap();
    let registry = set.load_registry().unwrap();
    let counts = registry.server_counts();
    assert_eq!(counts["Amap Maps"], 15);
    assert_eq!(counts["GitHub"], 26);
    assert_eq!(counts["Jina AI"], 3);
    assert_eq!(counts["Stockstar"], 16);
    assert_eq!(counts["arXiv"], 4);
    assert_eq!(registry.len(), 64);
}

#[test]
fn fixture_geocode_reply_mentions_distance() {
    let set = load_tasks(tasks_dir().join("golden.toml")).unwrap();
    let registry = set.load_registry().unwrap();
    let mut transport = set.load_fixture_transport().unwrap();
    let mut params = Map::new();
    params.insert("address".into(), json!("Tianjin"));
    let result = dispatch(&registry, "maps_geo", &params, &mut transport, 4000);
    assert_eq!(result.status, mworld_core::mcp::ToolStatus::Ok);
    assert!(result.content.contains("distance"));

    let unknown = dispatch(&registry, "no_such_tool", &Map::new(), &mut transport, 4000);
    assert_eq!(unknown.status, mworld_core::mcp::ToolStatus::ToolError);
    assert!(unknown.content.contains("unknown tool"));
}
