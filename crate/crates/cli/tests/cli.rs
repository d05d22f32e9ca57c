use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ilcl_cli::config::{interpolate, parse_config, EvalSpec, ProviderSpec};

fn ilcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilcl")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, json: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    path
}

fn oracle_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "explore.json",
        serde_json::json!({
            "env": { "roomworld": { "seed": 2 } },
            "schema": "builtin:roomworld",
            "provider": { "oracle": {} },
            "explore": { "budget": { "max_env_steps": 2000, "max_iterations": 500 } },
        }),
    )
}

fn explore(config: &Path, out: &Path) -> Output {
    ilcl(&["explore", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn artifacts(dir: &Path) -> Vec<Vec<u8>> {
    ["document.md", "forest.json", "metrics.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn explore_writes_a_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let out = explore(&oracle_config(tmp.path()), &run);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("stop_reason=gaps-resolved"));
    for f in ["document.md", "forest.json", "metrics.csv", "run.json", "schema.md", "cassette.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let run_json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["stop_reason"], "gaps-resolved");
    assert_eq!(run_json["seeds"]["env"], 2);

    let doc = ilcl(&["render", run.to_str().unwrap(), "--what", "document"]);
    assert_eq!(code(&doc), 0);
    assert_eq!(doc.stdout, std::fs::read(run.join("document.md")).unwrap());
    let metrics = ilcl(&["render", run.to_str().unwrap(), "--what", "metrics"]);
    assert_eq!(metrics.stdout, std::fs::read(run.join("metrics.csv")).unwrap());
    let forest = ilcl(&["render", run.to_str().unwrap(), "--what", "forest"]);
    assert_eq!(code(&forest), 0);
    assert!(String::from_utf8_lossy(&forest.stdout).starts_with("- init_state: "));
}

#[test]
fn replaying_the_cassette_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(code(&explore(&oracle_config(tmp.path()), &first)), 0);

    let replay = write_config(
        tmp.path(),
        "replay.json",
        serde_json::json!({
            "env": { "roomworld": { "seed": 2 } },
            "schema": "builtin:roomworld",
            "provider": { "cassette": { "path": "first/cassette.json" } },
            "explore": { "budget": { "max_env_steps": 2000, "max_iterations": 500 } },
        }),
    );
    let second = tmp.path().join("second");
    let out = explore(&replay, &second);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(artifacts(&first), artifacts(&second));
}

#[test]
fn an_existing_output_directory_is_refused_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = oracle_config(tmp.path());
    let run = tmp.path().join("run");
    assert_eq!(code(&explore(&config, &run)), 0);
    let again = explore(&config, &run);
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = ilcl(&["explore", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(), "--force"]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let missing = tmp.path().join("absent.json");
    assert_eq!(code(&ilcl(&["explore", "--config", missing.to_str().unwrap(), "--out", out])), 2);

    let unknown_field = write_config(
        tmp.path(),
        "typo.json",
        serde_json::json!({ "env": { "roomworld": {} }, "schema": "builtin:roomworld", "provider": { "oracle": {} }, "budgett": 1 }),
    );
    assert_eq!(code(&ilcl(&["explore", "--config", unknown_field.to_str().unwrap(), "--out", out])), 2);

    let zero_budget = write_config(
        tmp.path(),
        "zero.json",
        serde_json::json!({
            "env": { "roomworld": {} },
            "schema": "builtin:roomworld",
            "provider": { "oracle": {} },
            "explore": { "budget": { "max_env_steps": 0 } },
        }),
    );
    assert_eq!(code(&ilcl(&["explore", "--config", zero_budget.to_str().unwrap(), "--out", out])), 2);

    let no_schema = write_config(
        tmp.path(),
        "schema.json",
        serde_json::json!({ "env": { "roomworld": {} }, "schema": "builtin:nowhere", "provider": { "oracle": {} } }),
    );
    assert_eq!(code(&ilcl(&["explore", "--config", no_schema.to_str().unwrap(), "--out", out])), 2);

    assert_eq!(code(&ilcl(&["render", tmp.path().join("nope").to_str().unwrap(), "--what", "document"])), 2);
    assert_eq!(code(&ilcl(&["explore"])), 2);
}

#[test]
fn eval_writes_reports_and_refuses_to_overwrite_them() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&explore(&oracle_config(tmp.path()), &run)), 0);

    let config = write_config(
        tmp.path(),
        "eval.json",
        serde_json::json!({
            "env": { "roomworld": { "seed": 2 } },
            "schema": "builtin:roomworld",
            "provider": { "oracle": {} },
            "eval": { "budgets": [5, 200], "tasks": ["reach-*"], "out": "reports" },
        }),
    );
    let context = run.join("document.md");
    let args = ["eval", "--config", config.to_str().unwrap(), "--context", context.to_str().unwrap(), "--jobs", "2"];
    let out = ilcl(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(tmp.path().join("reports/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.contains(",reach-")));
    assert!(rows.iter().any(|r| r.contains("with-context")));
    assert!(rows.iter().any(|r| r.contains("without-context")));
    assert_eq!(rows.len() % 4, 0);
    let md = std::fs::read_to_string(tmp.path().join("reports/report.md")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), md);

    assert_eq!(code(&ilcl(&args)), 2);
}

#[test]
fn provider_values_are_interpolated_from_the_environment() {
    let lookup = |name: &str| (name == "KEY").then(|| "s3cret".to_string());
    assert_eq!(interpolate("Bearer ${KEY}!", &lookup).unwrap(), "Bearer s3cret!");
    assert!(interpolate("${MISSING}", &lookup).is_err());
    assert!(interpolate("${KEY", &lookup).is_err());
    assert_eq!(interpolate("plain", &lookup).unwrap(), "plain");

    let text = r#"{"env":{"roomworld":{}},"schema":"builtin:roomworld","provider":{"http":{"base_url":"${KEY}","model":"m","api_key":"${KEY}"}},"out":"${KEY}"}"#;
    let (config, raw) = parse_config(text, &lookup).unwrap();
    let ProviderSpec::Http { config: http, api_key } = &config.provider else { panic!("http provider expected") };
    assert_eq!(http.base_url, "s3cret");
    assert_eq!(api_key.as_deref(), Some("s3cret"));
    assert_eq!(config.out.unwrap().to_str(), Some("${KEY}"));
    assert_eq!(raw["provider"]["http"]["api_key"], "${KEY}");
}

#[test]
fn task_patterns() {
    let spec = EvalSpec {
        tasks: vec!["reach-*".into(), "eat-meal".into()],
        ..EvalSpec::default()
    };
    assert!(spec.keeps("reach-hall"));
    assert!(spec.keeps("eat-meal"));
    assert!(!spec.keeps("eat-meal-2"));
    assert!(!spec.keeps("hold-apple"));
    assert!(EvalSpec::default().keeps("anything"));
}
