//! Downstream ReAct episodes with and without an instance context document,
//! benchmark reports over step budgets, and coverage curves of finished runs.

mod report;

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use report::{format_report_md, mean_stderr, report_csv, summarize, ConditionSummary, SummaryCell, REPORT_HEADER};

use crate::env::{EnvError, Environment, TaskSpec};
use crate::explore::{parse_action, Record};
use crate::llm::oracle::FINISH;
use crate::llm::{ask, Bindings, CallConfig, LlmError, Provider, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    WithoutContext,
    WithContext,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::WithoutContext => "without-context",
            Condition::WithContext => "with-context",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub task_id: String,
    pub condition: Condition,
    pub success: bool,
    /// Environment steps taken.
    pub steps: u32,
    /// Steps after which the goal first held.
    pub steps_to_success: Option<u32>,
    pub failure_reason: Option<String>,
    pub transcript: Vec<Record>,
}

impl EpisodeOutcome {
    /// The same episode cut off after `budget` steps.
    pub fn at_budget(&self, budget: u32) -> (bool, u32) {
        match self.steps_to_success {
            Some(s) if s <= budget => (true, s),
            _ => (false, self.steps.min(budget)),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{0}")]
    Io(String),
}

/// Background text shown to the downstream agent: the environment's own
/// description, followed by the rendered document when there is one.
pub fn episode_background(env_background: &str, context: Option<&str>) -> String {
    match context {
        Some(doc) => format!("{}\n\n{}", env_background.trim_end(), doc.trim_end()),
        None => env_background.to_string(),
    }
}

/// Runs one ReAct episode from a fresh reset. `context` is a rendered
/// document. The episode ends when the goal holds, the agent answers
/// `finish`, the observation is terminal or `step_budget` steps were taken.
pub fn react_episode(
    env: &mut dyn Environment,
    task: &TaskSpec,
    llm: &mut dyn Provider,
    context: Option<&str>,
    step_budget: u32,
    call: &CallConfig,
    prompt_records: usize,
) -> Result<EpisodeOutcome, EvalError> {
    let first = env.reset()?;
    let background = episode_background(&env.background(), context);
    let mut out = EpisodeOutcome {
        task_id: task.id.clone(),
        condition: if context.is_some() {
            Condition::WithContext
        } else {
            Condition::WithoutContext
        },
        success: env.goal_reached(&task.check),
        steps: 0,
        steps_to_success: None,
        failure_reason: None,
        transcript: Vec::new(),
    };
    if out.success {
        out.steps_to_success = Some(0);
        return Ok(out);
    }
    while out.steps < step_budget {
        let shown = out.transcript.len().saturating_sub(prompt_records);
        let initial = (shown == 0).then_some(first.text.as_str());
        let mut b = Bindings::new();
        b.insert("background".into(), background.clone());
        b.insert("task".into(), task.goal.clone());
        b.insert("trajectory".into(), crate::explore::render_steps(initial, &out.transcript[shown..]));
        let (thought, action) = match ask(llm, TemplateId::ActorSubagent, &b, call, parse_action) {
            Ok(a) => a.value,
            Err(LlmError::RetriesExhausted { last_error, .. }) => {
                out.failure_reason = Some(format!("no usable action: {last_error}"));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if action.eq_ignore_ascii_case(FINISH) {
            out.failure_reason = Some("the agent gave up".into());
            break;
        }
        let observation = env.step(&action)?;
        out.steps += 1;
        let terminal = observation.terminal;
        out.transcript.push(Record {
            action,
            observation,
            thought,
        });
        if env.goal_reached(&task.check) {
            out.success = true;
            out.steps_to_success = Some(out.steps);
            break;
        }
        if terminal {
            out.failure_reason = Some("the episode ended".into());
            break;
        }
    }
    if !out.success && out.failure_reason.is_none() {
        out.failure_reason = Some("step budget spent".into());
    }
    Ok(out)
}

pub type EnvFactory = dyn Fn() -> Result<Box<dyn Environment>, EnvError> + Send + Sync;

/// One environment instance with its tasks and, optionally, its document.
pub struct EvalInstance {
    pub id: String,
    pub make_env: Box<EnvFactory>,
    pub tasks: Vec<TaskSpec>,
    pub context: Option<String>,
}

/// Identifies one episode of a benchmark; providers are created per key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub instance: String,
    pub task: String,
    pub condition: Condition,
    pub repeat: u32,
}

pub type ProviderFactory = dyn Fn(&EpisodeKey) -> Result<Box<dyn Provider>, LlmError> + Send + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSettings {
    pub budgets: Vec<u32>,
    pub conditions: Vec<Condition>,
    pub repeats: u32,
    pub call: CallConfig,
    pub prompt_records: usize,
    pub jobs: usize,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings {
            budgets: vec![10, 20, 50],
            conditions: vec![Condition::WithoutContext, Condition::WithContext],
            repeats: 1,
            call: CallConfig::default(),
            prompt_records: 40,
            jobs: 1,
        }
    }
}

/// One line of report.csv.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: String,
    pub task: String,
    pub budget: u32,
    pub condition: Condition,
    pub repeat: u32,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub budgets: Vec<u32>,
    pub rows: Vec<ReportRow>,
    pub episodes: Vec<(EpisodeKey, EpisodeOutcome)>,
}

/// Runs every (instance, task, condition, repeat) episode once with the
/// largest budget and scores it at each budget by truncation. Rows come
/// out in (instance, task, budget, condition, repeat) order whatever
/// `jobs` is.
pub fn run_benchmark(
    instances: &[EvalInstance],
    settings: &BenchmarkSettings,
    providers: &ProviderFactory,
) -> Result<BenchmarkReport, EvalError> {
    let mut budgets = settings.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    let cap = budgets.last().copied().unwrap_or(0);

    let mut work: Vec<(usize, EpisodeKey)> = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for task in &inst.tasks {
            for &condition in &settings.conditions {
                if condition == Condition::WithContext && inst.context.is_none() {
                    continue;
                }
                for repeat in 0..settings.repeats {
                    work.push((
                        i,
                        EpisodeKey {
                            instance: inst.id.clone(),
                            task: task.id.clone(),
                            condition,
                            repeat,
                        },
                    ));
                }
            }
        }
    }

    let run_one = |(i, key): &(usize, EpisodeKey)| -> Result<EpisodeOutcome, EvalError> {
        let inst = &instances[*i];
        let task = inst.tasks.iter().find(|t| t.id == key.task).expect("task of its own instance");
        let mut env = (inst.make_env)()?;
        let mut llm = providers(key)?;
        let context = match key.condition {
            Condition::WithContext => inst.context.as_deref(),
            Condition::WithoutContext => None,
        };
        react_episode(env.as_mut(), task, llm.as_mut(), context, cap, &settings.call, settings.prompt_records)
    };

    let jobs = settings.jobs.max(1).min(work.len().max(1));
    let mut results: Vec<Option<Result<EpisodeOutcome, EvalError>>> = (0..work.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, item) in results.iter_mut().zip(&work) {
            *slot = Some(run_one(item));
        }
    } else {
        let next = Mutex::new(0usize);
        let done = Mutex::new(&mut results);
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(|| loop {
                    let idx = {
                        let mut n = next.lock().expect("work counter");
                        let idx = *n;
                        *n += 1;
                        idx
                    };
                    if idx >= work.len() {
                        break;
                    }
                    let r = run_one(&work[idx]);
                    done.lock().expect("result slots")[idx] = Some(r);
                });
            }
        });
    }

    let mut episodes = Vec::with_capacity(work.len());
    for ((_, key), r) in work.into_iter().zip(results) {
        episodes.push((key, r.expect("every episode ran")?));
    }
    let mut rows = Vec::new();
    for (key, outcome) in &episodes {
        for &budget in &budgets {
            let (success, steps) = outcome.at_budget(budget);
            rows.push(ReportRow {
                instance: key.instance.clone(),
                task: key.task.clone(),
                budget,
                condition: key.condition,
                repeat: key.repeat,
                success,
                steps,
            });
        }
    }
    let order: Vec<(String, String)> = instances
        .iter()
        .flat_map(|i| i.tasks.iter().map(move |t| (i.id.clone(), t.id.clone())))
        .collect();
    let rank = |r: &ReportRow| order.iter().position(|(i, t)| *i == r.instance && *t == r.task);
    rows.sort_by(|a, b| {
        (rank(a), a.budget, a.condition, a.repeat).cmp(&(rank(b), b.budget, b.condition, b.repeat))
    });
    Ok(BenchmarkReport { budgets, rows, episodes })
}

/// Writes report.csv and report.md into `dir`.
pub fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?;
    for (name, text) in [("report.csv", report_csv(report)), ("report.md", format_report_md(report))] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub env_steps: u64,
    pub loc_coverage: f64,
    pub obj_coverage: f64,
}

/// Coverage against cumulative steps, read from a run's metrics.csv. Rows
/// without coverage (runs without ground truth) are skipped.
pub fn coverage_curve(run_dir: &Path) -> Result<Vec<CoveragePoint>, EvalError> {
    let path = run_dir.join("metrics.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let rows = crate::explore::read_metrics_csv(&text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    Ok(rows
        .into_iter()
        .filter_map(|r| {
            Some(CoveragePoint {
                env_steps: r.env_steps_cum,
                loc_coverage: r.loc_coverage?,
                obj_coverage: r.obj_coverage?,
            })
        })
        .collect())
}

pub fn coverage_curve_csv(points: &[CoveragePoint]) -> String {
    let mut out = String::from("env_steps_cum,loc_coverage,obj_coverage\n");
    for p in points {
        out.push_str(&format!("{},{:.4},{:.4}\n", p.env_steps, p.loc_coverage, p.obj_coverage));
    }
    out
}
