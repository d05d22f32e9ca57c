//! Run configuration files: JSON, with `${VAR}` interpolation inside the
//! provider block.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ilcl_core::env::{CraftParams, RoomParams};
use ilcl_core::eval::Condition;
use ilcl_core::explore::ExploreConfig;
use ilcl_core::llm::HttpConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Roomworld {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        params: RoomParams,
    },
    Craftworld {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        params: CraftParams,
    },
    Bridge { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderSpec {
    Oracle {},
    /// A cassette file for `explore`; for `eval`, a directory of
    /// per-episode cassettes.
    Cassette { path: PathBuf },
    Http {
        #[serde(flatten)]
        config: HttpConfig,
        #[serde(default)]
        api_key: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub budgets: Vec<u32>,
    pub repeats: u32,
    /// Instance seeds; defaults to the environment's own seed.
    pub seeds: Option<Vec<u64>>,
    /// Task id patterns; a trailing `*` matches any suffix. Empty keeps
    /// every task.
    pub tasks: Vec<String>,
    pub out: Option<PathBuf>,
    pub prompt_records: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            budgets: vec![10, 20, 50],
            repeats: 1,
            seeds: None,
            tasks: Vec::new(),
            out: None,
            prompt_records: 40,
        }
    }
}

impl EvalSpec {
    pub fn keeps(&self, task_id: &str) -> bool {
        self.tasks.is_empty()
            || self.tasks.iter().any(|p| match p.strip_suffix('*') {
                Some(prefix) => task_id.starts_with(prefix),
                None => task_id == p,
            })
    }

    pub fn conditions(with_context: bool) -> Vec<Condition> {
        if with_context {
            vec![Condition::WithoutContext, Condition::WithContext]
        } else {
            vec![Condition::WithoutContext]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    /// A schema file, or `builtin:NAME`.
    pub schema: String,
    pub provider: ProviderSpec,
    #[serde(default)]
    pub explore: ExploreConfig,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn env_seed(&self) -> u64 {
        match &self.env {
            EnvSpec::Roomworld { seed, .. } | EnvSpec::Craftworld { seed, .. } => seed.unwrap_or(self.seed),
            EnvSpec::Bridge { .. } => self.seed,
        }
    }
}

/// A parsed configuration together with its original JSON (before
/// interpolation, so secrets never reach run.json) and the directory
/// relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: serde_json::Value,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Replaces every `${NAME}` in `text` with the variable's value.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        let Some(len) = rest[start + 2..].find('}') else {
            return Err(format!("unterminated '${{' in '{text}'"));
        };
        let name = &rest[start + 2..start + 2 + len];
        let value = lookup(name).ok_or_else(|| format!("environment variable {name} is not set"))?;
        out.push_str(&rest[..start]);
        out.push_str(&value);
        rest = &rest[start + 3 + len..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut serde_json::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), String> {
    match v {
        serde_json::Value::String(s) => *s = interpolate(s, lookup)?,
        serde_json::Value::Array(items) => {
            for i in items {
                interpolate_value(i, lookup)?;
            }
        }
        serde_json::Value::Object(m) => {
            for (_, i) in m.iter_mut() {
                interpolate_value(i, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn parse_config(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(RunConfig, serde_json::Value), String> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let mut value = raw.clone();
    if let Some(p) = value.get_mut("provider") {
        interpolate_value(p, lookup)?;
    }
    let config: RunConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let b = &config.explore.budget;
    if b.max_env_steps == 0 || b.max_iterations == 0 || b.max_path_length == 0 {
        return Err("budget values must be positive".into());
    }
    if config.eval.budgets.contains(&0) || config.eval.repeats == 0 {
        return Err("eval budgets and repeats must be positive".into());
    }
    Ok((config, raw))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let lookup = |name: &str| std::env::var(name).ok();
    let (config, raw) = parse_config(&text, &lookup).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, raw, base_dir })
}
