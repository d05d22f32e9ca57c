//! One PASS/FAIL line per acceptance criterion. Criteria listed in
//! KNOWN_UNATTAINABLE may fail; any other failure fails the test.

mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::time::{Duration, Instant};

use ilcl_core::env::{Environment, GroundTruth, RoomParams, RoomWorld, TaskGoal};
use ilcl_core::eval::{format_report_md, react_episode, report_csv};
use ilcl_core::explore::{read_metrics_csv, run_exploration, write_run_dir, ExplorationResult, ExploreConfig, StopReason};
use ilcl_core::forest::{parse_forest, parse_path, render_forest, Forest, Mode, PathVerdict};
use ilcl_core::llm::oracle::OracleProvider;
use ilcl_core::llm::{CallConfig, Cassette, Player, Recorder};
use ilcl_core::schema::{builtin, parse_document, parse_schema, render_document, validate_document, Document, Schema};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

const KNOWN_UNATTAINABLE: &[&str] = &["downstream-protocol"];
const SEEDS: std::ops::RangeInclusive<u64> = 1..=5;

struct Verdict {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(name: &'static str, passed: bool, detail: String) -> Verdict {
    println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    Verdict { name, passed, detail }
}

fn roomworld() -> Schema {
    parse_schema("roomworld", builtin::ROOMWORLD).unwrap()
}

fn generous() -> ExploreConfig {
    let mut config = ExploreConfig::default();
    config.budget.max_env_steps = 2000;
    config.budget.max_iterations = 500;
    config
}

fn sample<S: Strategy>(strategy: &S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n).map(|_| strategy.new_tree(&mut runner).unwrap().current()).collect()
}

fn neighbours(truth: &GroundTruth) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &truth.edges {
        adj.entry(e.from.as_str()).or_default().insert(e.to.as_str());
        adj.entry(e.to.as_str()).or_default().insert(e.from.as_str());
    }
    adj
}

fn bfs(adj: &BTreeMap<&str, BTreeSet<&str>>, from: &str, to: &str) -> usize {
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(at) = queue.pop_front() {
        if at == to {
            return dist[at];
        }
        for &n in adj.get(at).into_iter().flatten() {
            if !dist.contains_key(n) {
                dist.insert(n, dist[at] + 1);
                queue.push_back(n);
            }
        }
    }
    panic!("{to} unreachable from {from}");
}

/// Sum of shortest-path hops between consecutive rooms of a depth-first
/// visiting order from `start`.
fn tour_length(truth: &GroundTruth, start: &str) -> usize {
    let adj = neighbours(truth);
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(room) = stack.pop() {
        if !seen.insert(room) {
            continue;
        }
        order.push(room);
        stack.extend(adj.get(room).into_iter().flatten().rev().filter(|n| !seen.contains(*n)));
    }
    order.windows(2).map(|w| bfs(&adj, w[0], w[1])).sum()
}

fn start_room(env: &mut RoomWorld) -> String {
    let text = env.reset().unwrap().text;
    let a = text.find("-= ").unwrap() + 3;
    let b = a + text[a..].find(" =-").unwrap();
    text[a..b].to_string()
}

struct OracleRun {
    seed: u64,
    truth: GroundTruth,
    result: ExplorationResult,
    cassette: Cassette,
    elapsed: Duration,
    start: String,
}

fn oracle_runs(schema: &Schema) -> Vec<OracleRun> {
    SEEDS
        .map(|seed| {
            let (mut env, truth) = RoomWorld::generate(seed, RoomParams::default()).unwrap();
            let start = start_room(&mut env);
            let mut llm = Recorder::new(OracleProvider::new());
            let clock = Instant::now();
            let result = run_exploration(&mut env, schema, &mut llm, &generous(), Some(&truth)).unwrap();
            let elapsed = clock.elapsed();
            OracleRun {
                seed,
                truth,
                result,
                cassette: llm.into_parts().1,
                elapsed,
                start,
            }
        })
        .collect()
}

fn oracle_end_to_end(runs: &[OracleRun], schema: &Schema) -> Verdict {
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for r in runs {
        let bound = 4 * tour_length(&r.truth, &r.start) as u64;
        let cov = r.result.metrics.last().and_then(|m| m.coverage).unwrap_or_default();
        summary.push(format!("seed {} {} of {bound} steps in {:.0?}", r.seed, r.result.steps_used, r.elapsed));
        if r.result.stop_reason != StopReason::GapsResolved {
            problems.push(format!("seed {} stopped: {}", r.seed, r.result.stop_reason));
        }
        if cov.location_fraction() < 0.95 || cov.object_fraction() < 0.95 {
            problems.push(format!("seed {} coverage {:?}", r.seed, cov));
        }
        if !validate_document(&r.result.document, schema).is_empty() {
            problems.push(format!("seed {} document invalid", r.seed));
        }
        if r.result.steps_used > bound {
            problems.push(format!("seed {} used {} > {bound} steps", r.seed, r.result.steps_used));
        }
        if r.elapsed >= Duration::from_secs(10) {
            problems.push(format!("seed {} took {:?}", r.seed, r.elapsed));
        }
    }
    let detail = if problems.is_empty() { summary.join("; ") } else { problems.join("; ") };
    verdict("oracle-end-to-end", problems.is_empty(), detail)
}

fn run_files(dir: &Path) -> Vec<Vec<u8>> {
    ["document.md", "forest.json", "metrics.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

fn determinism(runs: &[OracleRun], schema: &Schema, scratch: &Path) -> Verdict {
    let mut mismatched = Vec::new();
    for r in runs {
        let recorded = scratch.join(format!("recorded-{}", r.seed));
        write_run_dir(&recorded, &r.result, schema, serde_json::Value::Null, false).unwrap();

        let (mut env, truth) = RoomWorld::generate(r.seed, RoomParams::default()).unwrap();
        let mut player = Player::new(r.cassette.clone(), true);
        let replayed = run_exploration(&mut env, schema, &mut player, &generous(), Some(&truth)).unwrap();
        let again = scratch.join(format!("replayed-{}", r.seed));
        write_run_dir(&again, &replayed, schema, serde_json::Value::Null, false).unwrap();
        if run_files(&recorded) != run_files(&again) {
            mismatched.push(r.seed);
        }
    }
    verdict(
        "determinism",
        mismatched.is_empty(),
        format!("{}/{} replays byte-identical", runs.len() - mismatched.len(), runs.len()),
    )
}

fn replay_soundness() -> Verdict {
    let cases = sample(&common::replay::paths(), 200);
    let ok = cases
        .iter()
        .filter(|(seed, prefix, suffix)| {
            let a = common::replay::run_twice(*seed, prefix, suffix, false);
            let b = common::replay::run_twice(*seed, prefix, suffix, false);
            let s = common::replay::run_twice(*seed, prefix, suffix, true);
            a.first == b.first
                && a.second == b.second
                && s.first.records == a.first.records
                && s.second.records == a.second.records
                && a.second.replayed_prefix_len == prefix.len()
                && a.second_steps - s.second_steps == prefix.len() as u64
        })
        .count();
    verdict("replay-soundness", ok == cases.len(), format!("{ok}/{} paths", cases.len()))
}

fn path_table() -> Verdict {
    let forest = parse_forest(include_str!("fixtures/forest_casestudy.txt"), Mode::Action).unwrap();
    let rows: Vec<&str> = include_str!("fixtures/path_verdicts.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .collect();
    let ok = rows
        .iter()
        .filter(|row| {
            let cols: Vec<&str> = row.split(" | ").collect();
            let got = forest.validate_path(&parse_path(cols[1]).unwrap(), cols[0].parse().unwrap());
            let shown = match got {
                PathVerdict::Ok(k) => format!("Ok({k})"),
                PathVerdict::TooLong(k) => format!("TooLong({k})"),
                other => format!("{other:?}"),
            };
            shown == cols[2]
        })
        .count();
    verdict("path-validation-table", ok == 12 && rows.len() == 12, format!("{ok}/{}", rows.len()))
}

fn edit_safety(schema: &Schema) -> Verdict {
    let cases = sample(&common::edits::case(), 50);
    let ok = cases.iter().filter(|c| common::edits::run_case(schema, c).is_ok()).count();
    verdict("edit-pipeline-safety", ok == cases.len(), format!("{ok}/{} fuzz cases", cases.len()))
}

fn document_round_trips(doc: &Document, schema: &Schema) -> bool {
    let Ok(text) = render_document(doc, schema) else { return false };
    match parse_document(&text, schema) {
        Ok(back) => {
            back.entities == doc.entities
                && back.action_rules == doc.action_rules
                && render_document(&back, schema).map(|t| t == text).unwrap_or(false)
        }
        Err(_) => false,
    }
}

fn forest_round_trips(forest: &Forest) -> bool {
    let text = render_forest(forest);
    parse_forest(&text, Mode::Action).is_ok_and(|p| p == forest.without_runtime_refs() && render_forest(&p) == text)
}

fn round_trips() -> Verdict {
    let mut docs_ok = 0;
    for schema in common::builtin_schemas() {
        for doc in sample(&common::document(schema.clone()), 250) {
            docs_ok += document_round_trips(&doc, &schema) as usize;
        }
    }
    let ops = proptest::collection::vec(common::forest_ops::op(), 0..25);
    let forests_ok = sample(&ops, 1000)
        .iter()
        .filter(|ops| common::forest_ops::build(ops).is_ok_and(|f| forest_round_trips(&f)))
        .count();
    verdict(
        "round-trips",
        docs_ok == 1000 && forests_ok == 1000,
        format!("documents {docs_ok}/1000, forests {forests_ok}/1000"),
    )
}

fn downstream(runs: &[OracleRun], schema: &Schema) -> Verdict {
    let (mut tasks, mut within, mut slow) = (0, 0, 0);
    for r in runs {
        let (mut env, _) = RoomWorld::generate(r.seed, RoomParams::default()).unwrap();
        let doc = render_document(&r.result.document, schema).unwrap();
        for t in r.truth.tasks.iter().filter(|t| t.check != TaskGoal::EatMeal) {
            let call = CallConfig::default();
            let with = react_episode(&mut env, t, &mut OracleProvider::new(), Some(&doc), 200, &call, 40).unwrap();
            let without = react_episode(&mut env, t, &mut OracleProvider::new(), None, 200, &call, 40).unwrap();
            tasks += 1;
            within += with.steps_to_success.is_some_and(|s| s <= t.optimal_steps + 2) as usize;
            slow += without.steps_to_success.is_none_or(|s| s >= 2 * t.optimal_steps) as usize;
        }
    }
    let report = common::button::golden_benchmark(3);
    let golden = report_csv(&report) == include_str!("fixtures/golden/report.csv")
        && format_report_md(&report) == include_str!("fixtures/golden/report.md");
    let slow_share = slow as f64 / tasks as f64;
    verdict(
        "downstream-protocol",
        within == tasks && slow_share >= 0.8 && golden,
        format!(
            "context agent within optimal+2 on {within}/{tasks}; heuristic >= 2x optimal on {slow}/{tasks} ({:.0}%, needs 80%); golden reports {}",
            100.0 * slow_share,
            if golden { "match" } else { "differ" }
        ),
    )
}

fn monotone_coverage(scratch: &Path) -> Verdict {
    let mut bad = Vec::new();
    for seed in SEEDS {
        let rows = read_metrics_csv(&std::fs::read_to_string(scratch.join(format!("recorded-{seed}/metrics.csv"))).unwrap())
            .unwrap();
        let monotone = |f: fn(&ilcl_core::explore::MetricsRow) -> Option<f64>| {
            rows.windows(2).all(|w| f(&w[0]).unwrap_or(0.0) <= f(&w[1]).unwrap_or(0.0))
                && rows.iter().all(|r| f(r).is_some())
        };
        if !monotone(|r| r.loc_coverage) || !monotone(|r| r.obj_coverage) {
            bad.push(seed);
        }
    }
    verdict(
        "coverage-monotonicity",
        bad.is_empty(),
        format!("{}/{} oracle runs non-decreasing", SEEDS.count() - bad.len(), SEEDS.count()),
    )
}

#[test]
fn acceptance() {
    println!();
    let schema = roomworld();
    let scratch = tempfile::tempdir().unwrap();
    let runs = oracle_runs(&schema);
    let verdicts = [
        oracle_end_to_end(&runs, &schema),
        determinism(&runs, &schema, scratch.path()),
        replay_soundness(),
        path_table(),
        edit_safety(&schema),
        round_trips(),
        downstream(&runs, &schema),
        monotone_coverage(scratch.path()),
    ];
    let failed: Vec<&Verdict> = verdicts.iter().filter(|v| !v.passed).collect();
    println!("{}/{} criteria pass", verdicts.len() - failed.len(), verdicts.len());
    for v in &failed {
        assert!(KNOWN_UNATTAINABLE.contains(&v.name), "{} failed: {}", v.name, v.detail);
    }
}
