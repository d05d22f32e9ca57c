use serde::{Deserialize, Serialize};

use super::keyresult::{summarize_observation, summarize_steps, KeyResult};
use super::trajectory::{render_record, EvidenceStore, Record, Trajectory, OBSERVATION_TAG};
use crate::env::{EnvError, Environment, Observation, SnapshotId};
use crate::forest::{Forest, ForestError, Label, Mode, NodeRef, TodoPath, FAILED_RESULT};
use crate::llm::{ask, parse_response, Bindings, CallConfig, LlmError, ParsedResponse, Provider, TemplateId};
use crate::llm::oracle::FINISH;

/// Key result recorded for nodes that could not run because the episode
/// had ended.
pub const EPISODE_ENDED: &str = "the episode has ended";

#[derive(Debug, thiserror::Error)]
pub enum ActorError {
    #[error("replay diverged at step {step} ('{action}'): expected {expected:?}, got {actual:?}")]
    ReplayDivergence {
        step: usize,
        action: String,
        expected: String,
        actual: String,
    },
    #[error("path {0} has nothing left to execute")]
    NothingToExecute(String),
    #[error("no recorded steps for node {0:?}")]
    MissingEvidence(NodeRef),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Who writes key results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyResultSource {
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorSettings {
    pub subagent_step_budget: usize,
    pub call: CallConfig,
    pub action_key_results: KeyResultSource,
    pub agent_key_results: KeyResultSource,
    /// Records shown to the model when a trajectory is part of a prompt.
    pub prompt_records: usize,
}

impl Default for ActorSettings {
    fn default() -> Self {
        ActorSettings {
            subagent_step_budget: 20,
            call: CallConfig::default(),
            action_key_results: KeyResultSource::Rule,
            agent_key_results: KeyResultSource::Llm,
            prompt_records: 40,
        }
    }
}

/// The environment together with the forest and the recorded evidence,
/// metered against an environment-step budget.
pub struct Session<'e> {
    env: &'e mut dyn Environment,
    pub forest: Forest,
    pub evidence: EvidenceStore,
    pub initial: Observation,
    steps_used: u64,
    max_steps: u64,
    use_snapshots: bool,
    trajectories: usize,
}

impl<'e> Session<'e> {
    /// Resets the environment and plants `init_state`, summarized from the
    /// first observation.
    pub fn start(
        env: &'e mut dyn Environment,
        mode: Mode,
        max_steps: u64,
        use_snapshots: bool,
    ) -> Result<Self, EnvError> {
        let initial = env.reset()?;
        let summary = initial_summary(&initial.text);
        let forest = Forest::new(mode, &summary);
        let use_snapshots = use_snapshots && env.capabilities().snapshot_restore;
        let mut session = Session {
            env,
            forest,
            evidence: EvidenceStore::default(),
            initial,
            steps_used: 0,
            max_steps,
            use_snapshots,
            trajectories: 0,
        };
        if session.use_snapshots {
            let cp = session.env.snapshot()?;
            if let Some(root) = session.forest.state_mut(crate::forest::INIT_STATE) {
                root.checkpoint = Some(cp);
            }
        }
        Ok(session)
    }

    /// Continues from an existing forest and evidence.
    pub fn resume(
        env: &'e mut dyn Environment,
        forest: Forest,
        evidence: EvidenceStore,
        max_steps: u64,
        use_snapshots: bool,
    ) -> Result<Self, EnvError> {
        let initial = env.reset()?;
        let use_snapshots = use_snapshots && env.capabilities().snapshot_restore;
        Ok(Session {
            env,
            forest,
            evidence,
            initial,
            steps_used: 0,
            max_steps,
            use_snapshots,
            trajectories: 0,
        })
    }

    pub fn env(&self) -> &dyn Environment {
        &*self.env
    }

    pub fn steps_used(&self) -> u64 {
        self.steps_used
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn exhausted(&self) -> bool {
        self.steps_used >= self.max_steps
    }

    pub fn into_parts(self) -> (Forest, EvidenceStore, u64) {
        (self.forest, self.evidence, self.steps_used)
    }

    /// One metered step; `None` once the budget is spent.
    fn step(&mut self, action: &str) -> Result<Option<Observation>, EnvError> {
        if self.exhausted() {
            return Ok(None);
        }
        self.steps_used += 1;
        self.env.step(action).map(Some)
    }

    fn checkpoint(&mut self) -> Option<SnapshotId> {
        if !self.use_snapshots {
            return None;
        }
        match self.env.snapshot() {
            Ok(id) => Some(id),
            Err(e) => {
                tracing::warn!(error = %e, "snapshot failed");
                None
            }
        }
    }

    fn next_trajectory_id(&mut self) -> String {
        self.trajectories += 1;
        format!("{:03}", self.trajectories)
    }

    /// Brings the environment to the state of `target`: restores the nearest
    /// checkpoint on its lineage, then replays and verifies the recorded
    /// steps after it. Returns the prefix records and whether the budget ran
    /// out on the way.
    fn reach(&mut self, target: &NodeRef) -> Result<(Vec<Record>, bool), ActorError> {
        let lineage = self
            .forest
            .lineage(target)
            .ok_or_else(|| ForestError::NoSuchNode(target.clone()))?;
        let mut start = 0;
        if self.use_snapshots {
            for i in (0..lineage.len()).rev() {
                let Some(cp) = self.forest.node(&lineage[i]).and_then(|n| n.checkpoint.clone()) else {
                    continue;
                };
                match self.env.restore(&cp) {
                    Ok(()) => {
                        start = i + 1;
                        break;
                    }
                    Err(e) => tracing::warn!(error = %e, "restore failed, trying an earlier checkpoint"),
                }
            }
        }
        if start == 0 {
            self.env.reset()?;
        }
        let mut records = Vec::new();
        for r in &lineage[..start] {
            match self.evidence.get(r) {
                Some(recs) => records.extend(recs.iter().cloned()),
                None => records.push(Record::new(&self.label_text(r), Observation::new(""))),
            }
        }
        for r in &lineage[start..] {
            let expected = self.evidence.get(r).cloned();
            let recs = match expected {
                Some(recs) => recs,
                None => match self.forest.node(r).map(|n| n.label.clone()) {
                    Some(Label::Action(a)) => vec![Record::new(&a, Observation::new(""))],
                    _ => return Err(ActorError::MissingEvidence(r.clone())),
                },
            };
            for rec in recs {
                let Some(obs) = self.step(&rec.action)? else {
                    return Ok((records, true));
                };
                let verify = !rec.observation.text.is_empty();
                if verify && obs != rec.observation {
                    return Err(ActorError::ReplayDivergence {
                        step: records.len() + 1,
                        action: rec.action.clone(),
                        expected: rec.observation.text.clone(),
                        actual: obs.text,
                    });
                }
                records.push(Record {
                    action: rec.action,
                    observation: obs,
                    thought: rec.thought,
                });
            }
        }
        Ok((records, false))
    }

    fn label_text(&self, r: &NodeRef) -> String {
        self.forest
            .node(r)
            .map(|n| n.label.text().to_string())
            .unwrap_or_default()
    }
}

/// Summary planted as the `init_state` description.
pub fn initial_summary(observation: &str) -> String {
    let k = summarize_observation(observation);
    if k.failed || k.text.is_empty() {
        crate::text::one_line(observation)
    } else {
        k.text
    }
}

/// What one executed path produced.
#[derive(Debug, Clone)]
pub struct Execution {
    pub trajectory: Trajectory,
    /// New nodes with their key results, in path order.
    pub resolved: Vec<(NodeRef, KeyResult)>,
    /// The step budget ran out before the path finished.
    pub exhausted: bool,
}

/// Executes the unexplored suffix of `path`. The explored prefix is reached
/// by restoring a checkpoint or by verified replay; every new node gets its
/// key result, evidence and, when supported, a checkpoint.
pub fn execute_path(
    session: &mut Session<'_>,
    path: &TodoPath,
    llm: &mut dyn Provider,
    settings: &ActorSettings,
) -> Result<Execution, ActorError> {
    let (deepest, remaining) = session.forest.explored_prefix(path)?;
    if remaining.is_empty() {
        return Err(ActorError::NothingToExecute(path.to_string()));
    }
    let refs = session.forest.ensure_path(path)?;
    let new_refs = refs[refs.len() - remaining.len()..].to_vec();
    let id = session.next_trajectory_id();
    let (mut records, mut exhausted) = session.reach(&deepest)?;
    let replayed_prefix_len = records.len();
    let mut resolved = Vec::new();
    let mut ended = records.last().is_some_and(|r| r.observation.terminal);

    for r in new_refs {
        if exhausted {
            break;
        }
        if ended {
            let key = KeyResult {
                text: EPISODE_ENDED.into(),
                failed: true,
            };
            session.forest.record_outcome(&r, &key.text, true, Some(id.clone()), None)?;
            session.evidence.insert(r.clone(), Vec::new());
            resolved.push((r, key));
            continue;
        }
        let label = session
            .forest
            .node(&r)
            .map(|n| n.label.clone())
            .ok_or_else(|| ForestError::NoSuchNode(r.clone()))?;
        let (node_records, key) = match label {
            Label::Action(action) => match session.step(&action) {
                Ok(Some(obs)) => {
                    ended = obs.terminal;
                    let rec = Record::new(&action, obs);
                    let key = match settings.action_key_results {
                        KeyResultSource::Rule => summarize_observation(&rec.observation.text),
                        KeyResultSource::Llm => {
                            let before = records.last().map(|p: &Record| p.observation.text.clone());
                            llm_key_result(llm, &action, before.as_deref(), std::slice::from_ref(&rec), settings)?
                        }
                    };
                    (vec![rec], key)
                }
                Ok(None) => {
                    exhausted = true;
                    break;
                }
                Err(EnvError::Terminal) => {
                    ended = true;
                    let key = KeyResult {
                        text: EPISODE_ENDED.into(),
                        failed: true,
                    };
                    (Vec::new(), key)
                }
                Err(e) => return Err(e.into()),
            },
            Label::AgentTask(task) => {
                let before = records
                    .last()
                    .map(|p| p.observation.clone())
                    .unwrap_or_else(|| session.initial.clone());
                let run = run_subagent(session, &task, &before, llm, settings)?;
                exhausted = run.exhausted;
                ended = run.records.last().is_some_and(|r| r.observation.terminal);
                if exhausted && run.records.is_empty() {
                    break;
                }
                let key = match settings.agent_key_results {
                    KeyResultSource::Rule => rule_summary_of(&before.text, &run.records),
                    KeyResultSource::Llm => llm_key_result(llm, &task, Some(&before.text), &run.records, settings)?,
                };
                (run.records, key)
            }
        };
        let checkpoint = session.checkpoint();
        session
            .forest
            .record_outcome(&r, &key.text, key.failed, Some(id.clone()), checkpoint)?;
        session.evidence.insert(r.clone(), node_records.clone());
        records.extend(node_records);
        resolved.push((r, key));
    }

    Ok(Execution {
        trajectory: Trajectory {
            id,
            mode: session.forest.mode,
            origin_path: path.clone(),
            initial_observation: Some(session.initial.clone()),
            records,
            replayed_prefix_len,
            truncated: exhausted,
        },
        resolved,
        exhausted,
    })
}

fn rule_summary_of(before: &str, records: &[Record]) -> KeyResult {
    let steps: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.action.clone(), r.observation.text.clone()))
        .collect();
    summarize_steps(Some(before), &steps)
}

/// `[Observation]`/`[Thought]`/`[Action]` lines of a ReAct transcript.
pub fn render_steps(before: Option<&str>, records: &[Record]) -> String {
    let mut out = String::new();
    if let Some(b) = before {
        out.push_str(&format!("{OBSERVATION_TAG} {}\n", b.trim_end()));
    }
    for r in records {
        render_record(r, &mut out);
    }
    out
}

/// Asks the key-result template; falls back to the rule summary when the
/// answers stay unusable.
fn llm_key_result(
    llm: &mut dyn Provider,
    task: &str,
    before: Option<&str>,
    records: &[Record],
    settings: &ActorSettings,
) -> Result<KeyResult, ActorError> {
    let mut b = Bindings::new();
    b.insert("task".into(), task.to_string());
    b.insert("trajectory".into(), render_steps(before, records));
    let answer = ask(llm, TemplateId::KeyresultSummarize, &b, &settings.call, |text| {
        match parse_response(TemplateId::KeyresultSummarize, text) {
            Ok(ParsedResponse::TaggedBlocks(t)) => t
                .text("key_result")
                .map(|k| crate::text::one_line(k))
                .filter(|k| !k.is_empty())
                .ok_or_else(|| "the <key_result> tag is empty".to_string()),
            Ok(other) => Err(format!("unexpected response shape {other:?}")),
            Err(e) => Err(e.to_string()),
        }
    });
    match answer {
        Ok(a) => {
            let failed = a.value.to_ascii_lowercase().starts_with(FAILED_RESULT);
            let text = if failed {
                a.value[FAILED_RESULT.len()..].trim_start_matches(':').trim().to_string()
            } else {
                a.value
            };
            Ok(KeyResult { text, failed })
        }
        Err(LlmError::RetriesExhausted { .. }) => Ok(rule_summary_of(before.unwrap_or(""), records)),
        Err(e) => Err(e.into()),
    }
}

/// Steps of one sub-agent episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubagentRun {
    pub records: Vec<Record>,
    /// The model stopped giving usable answers.
    pub truncated: bool,
    pub exhausted: bool,
}

/// Hands control to a ReAct-style sub-agent until it answers `finish`, the
/// episode ends, or `subagent_step_budget` actions were taken.
pub fn run_subagent(
    session: &mut Session<'_>,
    task: &str,
    before: &Observation,
    llm: &mut dyn Provider,
    settings: &ActorSettings,
) -> Result<SubagentRun, ActorError> {
    let background = session.env.background();
    let mut run = SubagentRun {
        records: Vec::new(),
        truncated: false,
        exhausted: false,
    };
    while run.records.len() < settings.subagent_step_budget {
        let mut b = Bindings::new();
        b.insert("background".into(), background.clone());
        b.insert("task".into(), task.to_string());
        let shown = run.records.len().saturating_sub(settings.prompt_records);
        let initial = (shown == 0).then_some(before.text.as_str());
        b.insert("trajectory".into(), render_steps(initial, &run.records[shown..]));
        let answer = match ask(llm, TemplateId::ActorSubagent, &b, &settings.call, parse_action) {
            Ok(a) => a,
            Err(LlmError::RetriesExhausted { .. }) => {
                run.truncated = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let (thought, action) = answer.value;
        if action.eq_ignore_ascii_case(FINISH) {
            break;
        }
        let obs = match session.step(&action) {
            Ok(Some(obs)) => obs,
            Ok(None) => {
                run.exhausted = true;
                break;
            }
            Err(EnvError::Terminal) => break,
            Err(e) => return Err(e.into()),
        };
        let terminal = obs.terminal;
        run.records.push(Record {
            action,
            observation: obs,
            thought,
        });
        if terminal {
            break;
        }
    }
    Ok(run)
}

/// Reads the `<thought>` and `<action>` tags of a ReAct answer.
pub fn parse_action(text: &str) -> Result<(Option<String>, String), String> {
    match parse_response(TemplateId::ActorSubagent, text) {
        Ok(ParsedResponse::TaggedBlocks(t)) => {
            let action = t.text("action").map(|a| crate::text::one_line(a)).unwrap_or_default();
            if action.is_empty() {
                return Err("the <action> tag is empty".into());
            }
            Ok((t.text("thought").map(|s| s.trim().to_string()), action))
        }
        Ok(other) => Err(format!("unexpected response shape {other:?}")),
        Err(e) => Err(e.to_string()),
    }
}
