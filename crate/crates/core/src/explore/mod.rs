//! The plan, act and extract loop that turns a budget of environment steps
//! into an instance context document.

mod actor;
mod extractor;
mod keyresult;
mod planner;
mod rundir;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use actor::{
    execute_path, initial_summary, parse_action, render_steps, run_subagent, ActorError, ActorSettings, Execution,
    KeyResultSource, Session, SubagentRun, EPISODE_ENDED,
};
pub use extractor::{
    apply_mechanically, edit_kind, leaked_content, Applied, Edit, EditKind, EditSection, EditStatus, Extractor,
};
pub use keyresult::{failure_reason, summarize_observation, summarize_steps, KeyResult, MAX_RULE_SUMMARY_CHARS};
pub use planner::{verdict_feedback, Control, Planner, Progress, Promotion, StopReason, TODO_DEFINITION};
pub use rundir::{metrics_csv, read_metrics_csv, write_run_dir, MetricsRow, RunDirError, METRICS_HEADER};
pub use trajectory::*;

use crate::env::{EnvError, Environment, GroundTruth};
use crate::forest::{Forest, Mode, TodoPath};
use crate::llm::{CallConfig, LlmError, Provider};
use crate::schema::{coverage_against, validate_document, CoverageReport, Document, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_env_steps: u64,
    pub max_iterations: usize,
    pub max_path_length: usize,
    pub num_todo: usize,
    pub subagent_step_budget: usize,
    /// Total attempts per model call, the first one included.
    pub parse_retry_limit: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_env_steps: 400,
            max_iterations: 60,
            max_path_length: 8,
            num_todo: 3,
            subagent_step_budget: 20,
            parse_retry_limit: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreConfig {
    pub budget: Budget,
    pub mode: Mode,
    pub action_key_results: KeyResultSource,
    pub agent_key_results: KeyResultSource,
    /// Trajectory records shown in prompts.
    pub prompt_records: usize,
    pub use_snapshots: bool,
    pub max_output: u32,
    pub temperature_override: Option<f64>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            budget: Budget::default(),
            mode: Mode::Action,
            action_key_results: KeyResultSource::Rule,
            agent_key_results: KeyResultSource::Llm,
            prompt_records: 40,
            use_snapshots: true,
            max_output: 2048,
            temperature_override: None,
        }
    }
}

impl ExploreConfig {
    pub fn call(&self) -> CallConfig {
        CallConfig {
            parse_retry_limit: self.budget.parse_retry_limit,
            max_output: self.max_output,
            temperature_override: self.temperature_override,
        }
    }

    pub fn actor(&self) -> ActorSettings {
        ActorSettings {
            subagent_step_budget: self.budget.subagent_step_budget,
            call: self.call(),
            action_key_results: self.action_key_results,
            agent_key_results: self.agent_key_results,
            prompt_records: self.prompt_records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Cumulative environment steps.
    pub env_steps: u64,
    pub unknown_count: usize,
    pub coverage: Option<CoverageReport>,
}

#[derive(Debug, Clone)]
pub struct ExplorationResult {
    pub document: Document,
    pub forest: Forest,
    pub steps_used: u64,
    pub iterations: usize,
    /// One row before the first iteration, then one per iteration.
    pub metrics: Vec<IterationMetrics>,
    pub stop_reason: StopReason,
    pub trajectories: Vec<Trajectory>,
    pub edits: Vec<Edit>,
    /// Skipped items and other non-fatal problems.
    pub log: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

fn fatal(e: ActorError) -> Result<String, ExploreError> {
    match e {
        ActorError::Env(e) => Err(e.into()),
        ActorError::Llm(e) => Err(e.into()),
        other => Ok(other.to_string()),
    }
}

/// Explores `env` until the document has no gaps, the budget is spent or
/// the planner stops. Coverage is measured when `truth` is given; it never
/// reaches a prompt.
pub fn run_exploration(
    env: &mut dyn Environment,
    schema: &Schema,
    llm: &mut dyn Provider,
    config: &ExploreConfig,
    truth: Option<&GroundTruth>,
) -> Result<ExplorationResult, ExploreError> {
    let budget = config.budget;
    let background = env.background();
    let instance_id = env.fingerprint();
    let mut session = Session::start(env, config.mode, budget.max_env_steps, config.use_snapshots)?;
    let planner = Planner {
        schema,
        background: &background,
        budget: &budget,
        call: config.call(),
        prompt_records: config.prompt_records,
    };
    let extractor = Extractor {
        schema,
        background: &background,
        call: config.call(),
        prompt_records: config.prompt_records,
    };
    let actor = config.actor();

    let mut doc = Document::empty();
    doc.meta.instance_id = instance_id;
    let measure = |doc: &Document, iteration: usize, steps: u64| IterationMetrics {
        iteration,
        env_steps: steps,
        unknown_count: doc.unknown_count(),
        coverage: truth.map(|t| coverage_against(doc, schema, t)),
    };
    let mut metrics = vec![measure(&doc, 0, 0)];
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut edits: Vec<Edit> = Vec::new();
    let mut log: Vec<String> = Vec::new();
    let mut observation_phase = true;
    let mut iteration = 0;

    let stop_reason = if budget.max_env_steps == 0 || budget.max_iterations == 0 {
        StopReason::BudgetExhausted
    } else {
        loop {
            iteration += 1;
            let recent = trajectories.last();
            let mut paths: Vec<TodoPath> = Vec::new();
            if observation_phase {
                match planner.propose_observation_todo(llm, &doc, &session.forest, recent) {
                    Ok(Some(p)) => paths.push(p),
                    Ok(None) => observation_phase = false,
                    Err(LlmError::RetriesExhausted { last_error, .. }) => {
                        log.push(format!("iteration {iteration}: no observation TODO ({last_error})"))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            for p in &paths {
                session.forest.ensure_path(p).map_err(|e| LlmError::BadReply(e.to_string()))?;
            }
            for p in planner.propose_rule_todos(llm, &session.forest, recent)? {
                match session.forest.ensure_path(&p) {
                    Ok(_) => paths.push(p),
                    Err(e) => log.push(format!("iteration {iteration}: dropped {p}: {e}")),
                }
            }

            for path in &paths {
                if session.exhausted() {
                    break;
                }
                let execution = match execute_path(&mut session, path, llm, &actor) {
                    Ok(x) => x,
                    Err(e) => {
                        log.push(format!("iteration {iteration}: {path}: {}", fatal(e)?));
                        continue;
                    }
                };
                let trajectory = execution.trajectory;
                let unknown_before = doc.unknown_count();
                let mut sections = vec![EditSection::Observations];
                if schema.has_action_rules {
                    sections.push(EditSection::ActionRules);
                }
                for section in sections {
                    let mut proposed = extractor.extract(llm, &doc, &trajectory, section)?;
                    for edit in proposed.iter_mut() {
                        extractor.check(llm, &doc, &trajectory, edit)?;
                    }
                    let applied = extractor.apply(llm, &doc, &proposed)?;
                    for note in applied.notes {
                        log.push(format!("{}: {note}", trajectory.id));
                    }
                    debug_assert!(validate_document(&applied.document, schema).is_empty());
                    doc = applied.document;
                    edits.extend(proposed);
                }
                if doc.unknown_count() > unknown_before {
                    observation_phase = true;
                }
                trajectories.push(trajectory);
            }

            match planner.propose_promotion(llm, &doc, &session.forest) {
                Ok(Some(p)) => {
                    let promoted = session
                        .forest
                        .resolve_labels(&p.selected_path.start_state, &p.selected_path.steps)
                        .ok_or_else(|| "path vanished".to_string())
                        .and_then(|r| {
                            session
                                .forest
                                .promote(&r, &p.new_state_name, &p.state_summary)
                                .map_err(|e| e.to_string())
                        });
                    if let Err(e) = promoted {
                        log.push(format!("iteration {iteration}: promotion refused: {e}"));
                    }
                }
                Ok(None) => {}
                Err(LlmError::RetriesExhausted { last_error, .. }) => {
                    log.push(format!("iteration {iteration}: no promotion ({last_error})"))
                }
                Err(e) => return Err(e.into()),
            }

            doc.meta.iteration = iteration as u64;
            doc.meta.env_steps_consumed = session.steps_used();
            metrics.push(measure(&doc, iteration, session.steps_used()));

            let progress = Progress {
                iteration,
                steps_used: session.steps_used(),
            };
            if let Control::Stop(reason) = planner.should_continue(llm, &doc, &session.forest, progress)? {
                break reason;
            }
        }
    };

    let steps_used = session.steps_used();
    let (forest, _, _) = session.into_parts();
    Ok(ExplorationResult {
        document: doc,
        forest,
        steps_used,
        iterations: iteration,
        metrics,
        stop_reason,
        trajectories,
        edits,
        log,
    })
}
