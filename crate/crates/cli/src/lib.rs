//! Operator commands behind the `ilcl` binary.

pub mod config;

use std::path::{Path, PathBuf};

use ilcl_core::env::bridge::conformance::{run_suite, ScenarioResult};
use ilcl_core::env::bridge::{BridgeEnv, Connection};
use ilcl_core::env::{CraftWorld, Environment, GroundTruth, RoomWorld};
use ilcl_core::eval::{
    format_report_md, run_benchmark, write_report, BenchmarkSettings, EpisodeKey, EvalInstance,
};
use ilcl_core::explore::{read_metrics_csv, run_exploration, write_run_dir, RunDirError};
use ilcl_core::forest::{render_forest, Forest};
use ilcl_core::llm::oracle::OracleProvider;
use ilcl_core::llm::{Cassette, HttpProvider, LlmError, Player, Provider, Recorder};
use ilcl_core::schema::{builtin, parse_document, parse_schema, render_document, Schema};

use config::{load_config, EnvSpec, EvalSpec, LoadedConfig, ProviderSpec};

pub const SCHEMA_FILE: &str = "schema.md";
pub const CASSETTE_FILE: &str = "cassette.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad or missing configuration, paths or arguments.
    Config(String),
    /// The run itself failed.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn load_schema(loaded: &LoadedConfig) -> Result<Schema, CliError> {
    let spec = &loaded.config.schema;
    let (name, text) = match spec.strip_prefix("builtin:") {
        Some(name) => {
            let text = builtin::by_name(name).ok_or_else(|| CliError::Config(format!("no builtin schema '{name}'")))?;
            (name.to_string(), text.to_string())
        }
        None => {
            let path = loaded.resolve(Path::new(spec));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("schema file {}: {e}", path.display())))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (name, text)
        }
    };
    parse_schema(&name, &text).map_err(|e| CliError::Config(format!("schema {spec}: {e}")))
}

fn builtin_env(spec: &EnvSpec, seed: u64) -> Result<(Box<dyn Environment>, GroundTruth), CliError> {
    match spec {
        EnvSpec::Roomworld { params, .. } => {
            let (env, truth) = RoomWorld::generate(seed, params.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((Box::new(env), truth))
        }
        EnvSpec::Craftworld { params, .. } => {
            let (env, truth) = CraftWorld::generate(seed, params.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((Box::new(env), truth))
        }
        EnvSpec::Bridge { .. } => Err(CliError::Config("a built-in environment is required here".into())),
    }
}

fn build_env(loaded: &LoadedConfig) -> Result<(Box<dyn Environment>, Option<GroundTruth>), CliError> {
    let config = &loaded.config;
    match &config.env {
        EnvSpec::Bridge { endpoint } => {
            let env = BridgeEnv::connect(endpoint).map_err(|e| runtime(format!("bridge {endpoint}: {e}")))?;
            Ok((Box::new(env), None))
        }
        spec => {
            let (env, truth) = builtin_env(spec, config.env_seed())?;
            Ok((env, Some(truth)))
        }
    }
}

fn http_provider(config: &ilcl_core::llm::HttpConfig, api_key: &Option<String>) -> HttpProvider {
    match api_key.as_ref().filter(|k| !k.is_empty()) {
        Some(k) => HttpProvider::with_key(config.clone(), Some(k.clone())),
        None => HttpProvider::new(config.clone()),
    }
}

/// `explore`: runs one exploration and writes its run directory.
pub fn cmd_explore(config_path: &Path, out: Option<&Path>, force: bool) -> Result<String, CliError> {
    let loaded = load_config(config_path)?;
    let config = &loaded.config;
    let out: PathBuf = match (out, &config.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => return Err(CliError::Config("no output directory; pass --out".into())),
    };
    if !force && out.exists() && std::fs::read_dir(&out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(CliError::Config(format!("{} already exists; pass --force to overwrite it", out.display())));
    }
    let schema = load_schema(&loaded)?;

    let (mut provider, replaying): (Box<dyn Provider>, Option<Cassette>) = match &config.provider {
        ProviderSpec::Oracle {} => (Box::new(OracleProvider::new()), None),
        ProviderSpec::Http { config: http, api_key } => (Box::new(http_provider(http, api_key)), None),
        ProviderSpec::Cassette { path } => {
            let path = loaded.resolve(path);
            let cassette = Cassette::load(&path).map_err(|e| CliError::Config(e.to_string()))?;
            (Box::new(Player::new(cassette.clone(), true)), Some(cassette))
        }
    };
    let (mut env, truth) = build_env(&loaded)?;

    let mut recorder_slot: Option<Recorder<Box<dyn Provider>>> = None;
    let llm: &mut dyn Provider = if replaying.is_none() {
        recorder_slot = Some(Recorder::new(provider));
        recorder_slot.as_mut().expect("just set")
    } else {
        provider.as_mut()
    };

    let result = run_exploration(env.as_mut(), &schema, llm, &config.explore, truth.as_ref()).map_err(runtime)?;
    let cassette = match (replaying, recorder_slot) {
        (Some(c), _) => c,
        (None, Some(r)) => r.cassette(),
        (None, None) => unreachable!("either replaying or recording"),
    };

    let run_info = serde_json::json!({
        "config": loaded.raw,
        "schema": schema.source_name,
        "seeds": { "global": config.seed, "env": config.env_seed() },
    });
    write_run_dir(&out, &result, &schema, run_info, force).map_err(|e| match e {
        RunDirError::Exists(_) => CliError::Config(e.to_string()),
        other => runtime(other),
    })?;
    std::fs::write(out.join(SCHEMA_FILE), &schema.source_text).map_err(runtime)?;
    cassette.save(&out.join(CASSETTE_FILE)).map_err(runtime)?;
    Ok(format!(
        "{}: stop_reason={} iterations={} env_steps={} unknown={}",
        out.display(),
        result.stop_reason,
        result.iterations,
        result.steps_used,
        result.document.unknown_count()
    ))
}

fn episode_cassette(dir: &Path, key: &EpisodeKey) -> PathBuf {
    dir.join(format!("{}__{}__{}__{}.json", key.instance, key.task, key.condition, key.repeat))
}

/// `eval`: runs the downstream benchmark and writes report.csv and report.md.
pub fn cmd_eval(config_path: &Path, context: Option<&Path>, jobs: usize) -> Result<String, CliError> {
    let loaded = load_config(config_path)?;
    let config = &loaded.config;
    let schema = load_schema(&loaded)?;
    let context_text = match context {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let doc = parse_document(&text, &schema).map_err(|v| {
                CliError::Config(format!(
                    "{} does not match the schema: {}",
                    p.display(),
                    v.iter().map(|x| x.message.clone()).collect::<Vec<_>>().join("; ")
                ))
            })?;
            Some(render_document(&doc, &schema).map_err(|_| CliError::Config(format!("{} does not validate", p.display())))?)
        }
        None => None,
    };
    let out = match (&config.eval.out, &config.out) {
        (Some(o), _) | (None, Some(o)) => loaded.resolve(o),
        (None, None) => return Err(CliError::Config("no output directory; set eval.out".into())),
    };
    for name in ["report.csv", "report.md"] {
        if out.join(name).exists() {
            return Err(CliError::Config(format!("{} already exists", out.join(name).display())));
        }
    }

    let seeds = config.eval.seeds.clone().unwrap_or_else(|| vec![config.env_seed()]);
    let kind = match &config.env {
        EnvSpec::Roomworld { .. } => "roomworld",
        EnvSpec::Craftworld { .. } => "craftworld",
        EnvSpec::Bridge { .. } => return Err(CliError::Config("eval needs a built-in environment".into())),
    };
    let mut instances = Vec::new();
    for seed in seeds {
        let (_, truth) = builtin_env(&config.env, seed)?;
        let spec = config.env.clone();
        let tasks: Vec<_> = truth.tasks.into_iter().filter(|t| config.eval.keeps(&t.id)).collect();
        instances.push(EvalInstance {
            id: format!("{kind}-{seed}"),
            make_env: Box::new(move || builtin_env(&spec, seed).map(|(e, _)| e).map_err(|e| {
                ilcl_core::env::EnvError::InvalidParams(e.to_string())
            })),
            tasks,
            context: context_text.clone(),
        });
    }

    let settings = BenchmarkSettings {
        budgets: config.eval.budgets.clone(),
        conditions: EvalSpec::conditions(context_text.is_some()),
        repeats: config.eval.repeats,
        call: config.explore.call(),
        prompt_records: config.eval.prompt_records,
        jobs,
    };
    let provider = config.provider.clone();
    let cassette_dir = match &provider {
        ProviderSpec::Cassette { path } => Some(loaded.resolve(path)),
        _ => None,
    };
    let factory = move |key: &EpisodeKey| -> Result<Box<dyn Provider>, LlmError> {
        Ok(match &provider {
            ProviderSpec::Oracle {} => Box::new(OracleProvider::new()),
            ProviderSpec::Http { config, api_key } => Box::new(http_provider(config, api_key)),
            ProviderSpec::Cassette { .. } => {
                let dir = cassette_dir.as_ref().expect("cassette provider has a path");
                Box::new(Player::new(Cassette::load(&episode_cassette(dir, key))?, true))
            }
        })
    };
    let report = run_benchmark(&instances, &settings, &factory).map_err(runtime)?;
    write_report(&out, &report).map_err(runtime)?;
    Ok(format_report_md(&report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderWhat {
    Forest,
    Document,
    Metrics,
}

/// `render`: the canonical text of one artifact of a run directory.
pub fn cmd_render(dir: &Path, what: RenderWhat) -> Result<String, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a run directory", dir.display())));
    }
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    };
    match what {
        RenderWhat::Forest => {
            let forest = Forest::from_json(&read("forest.json")?).map_err(runtime)?;
            Ok(render_forest(&forest))
        }
        RenderWhat::Document => {
            let schema = parse_schema("schema", &read(SCHEMA_FILE)?).map_err(runtime)?;
            let text = read("document.md")?;
            let doc = parse_document(&text, &schema).map_err(|v| {
                runtime(v.iter().map(|x| x.message.clone()).collect::<Vec<_>>().join("; "))
            })?;
            render_document(&doc, &schema).map_err(|_| runtime("document does not validate"))
        }
        RenderWhat::Metrics => {
            let text = read("metrics.csv")?;
            read_metrics_csv(&text).map_err(runtime)?;
            Ok(text)
        }
    }
}

/// `bridge-check`: runs the conformance suite against `endpoint`.
pub fn cmd_bridge_check(endpoint: &str) -> Result<Vec<ScenarioResult>, CliError> {
    let conn = Connection::open(endpoint).map_err(|e| runtime(format!("{endpoint}: {e}")))?;
    Ok(run_suite(conn, 0))
}
