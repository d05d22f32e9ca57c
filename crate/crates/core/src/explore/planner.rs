use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use super::Budget;
use crate::forest::{parse_path, render_forest, Forest, PathVerdict, Status, TodoPath};
use crate::llm::{ask, parse_response, Bindings, CallConfig, LlmError, ParsedResponse, Provider, TemplateId};
use crate::schema::{list_gaps, render_document, Document, Schema};

/// Explanation of the TODO forest handed to every planner prompt.
pub const TODO_DEFINITION: &str = "\
The TODO forest records every action sequence tried so far.
- Each tree starts at a named state, written `- state_name: summary`. `init_state` is where the environment begins after a reset.
- Below a state, every indented line is one step: `- action: key result`. Children continue the sequence of their parent.
- The key result is a short digest of what the step revealed. `action failed` marks a step that did not work.
- `TODO` in place of a key result marks a step that is planned but not executed yet.
- A trailing `[reach state_name]` means the step was turned into the state of that name, so new sequences can start there.
- A TODO is written as a path: `state_name -> action -> ... -> action`. Steps already in the forest are replayed, the rest are executed.";

/// Why a proposed path was refused, phrased for the model.
pub fn verdict_feedback(path: &str, verdict: &PathVerdict) -> Option<String> {
    match verdict {
        PathVerdict::Ok(_) => None,
        PathVerdict::NonexistentState => Some(format!("'{path}' starts at a state that is not in the forest.")),
        PathVerdict::Redundant => Some(format!("'{path}' was already executed. Propose something new.")),
        PathVerdict::TooLong(max) => Some(format!("'{path}' has more than {max} actions.")),
        PathVerdict::Malformed(why) => Some(format!("'{path}' is not a valid path: {why}.")),
    }
}

/// A Done node to be turned into a new state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Promotion {
    pub target_gap: String,
    pub selected_path: TodoPath,
    pub new_state_name: String,
    pub state_summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GapsResolved,
    BudgetExhausted,
    PlannerStop,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::GapsResolved => "gaps-resolved",
            StopReason::BudgetExhausted => "budget-exhausted",
            StopReason::PlannerStop => "planner-stop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop(StopReason),
}

/// Progress counters loop control looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub iteration: usize,
    pub steps_used: u64,
}

pub struct Planner<'a> {
    pub schema: &'a Schema,
    pub background: &'a str,
    pub budget: &'a Budget,
    pub call: CallConfig,
    pub prompt_records: usize,
}

impl Planner<'_> {
    fn knowledge(&self, doc: &Document) -> String {
        render_document(doc, self.schema).unwrap_or_else(|_| crate::schema::render_unchecked(doc, self.schema))
    }

    /// One path that would fill a gap in the observations, or `None` when
    /// the model says they are complete.
    pub fn propose_observation_todo(
        &self,
        llm: &mut dyn Provider,
        doc: &Document,
        forest: &Forest,
        recent: Option<&Trajectory>,
    ) -> Result<Option<TodoPath>, LlmError> {
        let id = TemplateId::PlannerObsTodo;
        let mut b = Bindings::new();
        b.insert("max_length".into(), self.budget.max_path_length.to_string());
        b.insert("background".into(), self.background.to_string());
        if let Some(t) = recent {
            b.insert("trajectory".into(), t.render_for_prompt(self.prompt_records));
        }
        b.insert("todo_def".into(), TODO_DEFINITION.into());
        b.insert("todo_forest".into(), render_forest(forest));
        b.insert("knowledge_format".into(), self.schema.source_text.clone());
        b.insert("knowledge".into(), self.knowledge(doc));
        let max_len = self.budget.max_path_length;
        let answer = ask(llm, id, &b, &self.call, |text| {
            let blocks = match parse_response(id, text) {
                Ok(ParsedResponse::TaggedBlocks(t)) => t,
                Ok(other) => return Err(format!("unexpected response shape {other:?}")),
                Err(e) => return Err(e.to_string()),
            };
            if blocks.is_none_marker("todo") {
                return Ok(None);
            }
            let raw = blocks.text("todo").unwrap_or_default().trim();
            let path = parse_path(raw).map_err(|e| format!("'{raw}' is not a valid path: {e}."))?;
            let verdict = forest.validate_path(&path, max_len);
            match verdict_feedback(raw, &verdict) {
                None => Ok(Some(path)),
                Some(message) => Err(message),
            }
        })?;
        Ok(answer.value)
    }

    /// Up to `num_todo` new paths that probe how actions work. Invalid
    /// candidates are reported back and replaced while attempts remain.
    pub fn propose_rule_todos(
        &self,
        llm: &mut dyn Provider,
        forest: &Forest,
        recent: Option<&Trajectory>,
    ) -> Result<Vec<TodoPath>, LlmError> {
        let id = TemplateId::PlannerRuleTodo;
        let max_len = self.budget.max_path_length;
        let wanted = self.budget.num_todo;
        let mut accepted: Vec<TodoPath> = Vec::new();
        let mut feedback: Option<String> = None;
        for _ in 0..self.call.parse_retry_limit.max(1) {
            if accepted.len() >= wanted {
                break;
            }
            let mut b = Bindings::new();
            b.insert("max_length".into(), max_len.to_string());
            b.insert("num_todo".into(), (wanted - accepted.len()).to_string());
            if let Some(t) = recent {
                b.insert("trajectory".into(), t.render_for_prompt(self.prompt_records));
            }
            b.insert("todo_def".into(), TODO_DEFINITION.into());
            b.insert("background".into(), self.background.to_string());
            b.insert("todo_forest".into(), render_forest(forest));
            if let Some(f) = feedback.take() {
                b.insert(crate::llm::FEEDBACK_VAR.into(), f);
            }
            let answer = ask(llm, id, &b, &self.call, |text| match parse_response(id, text) {
                Ok(ParsedResponse::JsonList(items)) => Ok(items),
                Ok(other) => Err(format!("unexpected response shape {other:?}")),
                Err(e) => Err(e.to_string()),
            });
            let candidates = match answer {
                Ok(a) => a.value,
                Err(LlmError::RetriesExhausted { last_error, .. }) => {
                    tracing::warn!(%last_error, "no usable rule TODOs");
                    break;
                }
                Err(e) => return Err(e),
            };
            let mut refused = Vec::new();
            for raw in candidates {
                if accepted.len() >= wanted {
                    break;
                }
                let raw = raw.trim();
                let path = match parse_path(raw) {
                    Ok(p) => p,
                    Err(e) => {
                        refused.push(format!("'{raw}' is not a valid path: {e}."));
                        continue;
                    }
                };
                if accepted.contains(&path) {
                    refused.push(format!("'{raw}' was proposed twice."));
                    continue;
                }
                match verdict_feedback(raw, &forest.validate_path(&path, max_len)) {
                    None => accepted.push(path),
                    Some(m) => refused.push(m),
                }
            }
            if refused.is_empty() {
                break;
            }
            tracing::debug!(refused = refused.len(), "rule TODOs refused");
            feedback = Some(refused.join("\n"));
        }
        Ok(accepted)
    }

    /// A Done node worth a state of its own, or `None`.
    pub fn propose_promotion(
        &self,
        llm: &mut dyn Provider,
        doc: &Document,
        forest: &Forest,
    ) -> Result<Option<Promotion>, LlmError> {
        let id = TemplateId::PlannerPromote;
        let mut b = Bindings::new();
        b.insert("background".into(), self.background.to_string());
        b.insert("todo_def".into(), TODO_DEFINITION.into());
        b.insert("todo_forest".into(), render_forest(forest));
        b.insert("knowledge_format".into(), self.schema.source_text.clone());
        b.insert("knowledge".into(), self.knowledge(doc));
        let answer = ask(llm, id, &b, &self.call, |text| {
            let map = match parse_response(id, text) {
                Ok(ParsedResponse::JsonObject(m)) => m,
                Ok(other) => return Err(format!("unexpected response shape {other:?}")),
                Err(e) => return Err(e.to_string()),
            };
            let field = |k: &str| -> Result<String, String> {
                map.get(k)
                    .and_then(|v| v.as_str())
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| format!("the object needs a string field '{k}'."))
            };
            let raw = field("selected_path")?;
            if raw.eq_ignore_ascii_case("none") {
                return Ok(None);
            }
            let path = parse_path(&raw).map_err(|e| format!("'{raw}' is not a valid path: {e}."))?;
            let node = forest
                .resolve_labels(&path.start_state, &path.steps)
                .and_then(|r| forest.node(&r))
                .ok_or_else(|| format!("path not found: '{raw}' is not in the forest exactly as written."))?;
            if !matches!(node.status, Status::Done(_)) {
                return Err(format!("'{raw}' does not end at a successfully executed step."));
            }
            if node.promoted_to.is_some() {
                return Err(format!("'{raw}' is already a state."));
            }
            let name = field("new_state_name")?;
            if !crate::forest::is_state_name(&name) {
                return Err(format!("'{name}' is not a usable state name; use letters, digits and underscores."));
            }
            if forest.state(&name).is_some() {
                return Err(format!("a state named '{name}' already exists."));
            }
            let summary = crate::text::one_line(&field("state_summary")?);
            if summary.is_empty() {
                return Err("the state summary is empty.".into());
            }
            Ok(Some(Promotion {
                target_gap: field("target_missing_observation").unwrap_or_default(),
                selected_path: path,
                new_state_name: name,
                state_summary: summary,
            }))
        })?;
        Ok(answer.value)
    }

    /// Hard limits and resolved gaps are decided here; otherwise the model
    /// is asked.
    pub fn should_continue(
        &self,
        llm: &mut dyn Provider,
        doc: &Document,
        forest: &Forest,
        progress: Progress,
    ) -> Result<Control, LlmError> {
        let gaps = list_gaps(doc, self.schema);
        if gaps.is_empty() && forest.open_todos().is_empty() {
            return Ok(Control::Stop(StopReason::GapsResolved));
        }
        if progress.steps_used >= self.budget.max_env_steps || progress.iteration >= self.budget.max_iterations {
            return Ok(Control::Stop(StopReason::BudgetExhausted));
        }
        let id = TemplateId::PlannerLoopControl;
        let rendered_gaps = if gaps.is_empty() {
            "None".to_string()
        } else {
            gaps.iter().map(|g| format!("- {}", g.rendered)).collect::<Vec<_>>().join("\n")
        };
        let mut b = Bindings::new();
        b.insert("iteration".into(), progress.iteration.to_string());
        b.insert("max_iterations".into(), self.budget.max_iterations.to_string());
        b.insert("steps_used".into(), progress.steps_used.to_string());
        b.insert("max_steps".into(), self.budget.max_env_steps.to_string());
        b.insert("gaps".into(), rendered_gaps);
        b.insert("todo_forest".into(), render_forest(forest));
        b.insert("knowledge".into(), self.knowledge(doc));
        let answer = ask(llm, id, &b, &self.call, |text| match parse_response(id, text) {
            Ok(ParsedResponse::TaggedBlocks(t)) => {
                Ok(t.text("continue").unwrap_or("no").trim().eq_ignore_ascii_case("yes"))
            }
            Ok(other) => Err(format!("unexpected response shape {other:?}")),
            Err(e) => Err(e.to_string()),
        });
        match answer {
            Ok(a) if a.value => Ok(Control::Continue),
            Ok(_) => Ok(Control::Stop(StopReason::PlannerStop)),
            Err(LlmError::RetriesExhausted { .. }) => Ok(Control::Continue),
            Err(e) => Err(e),
        }
    }
}
