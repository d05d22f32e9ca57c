use serde::{Deserialize, Serialize};

use super::{is_state_name, ForestError};

pub const ARROW: &str = "->";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TodoPath {
    pub start_state: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathVerdict {
    /// Index of the first step that is not yet a node.
    Ok(usize),
    NonexistentState,
    Redundant,
    TooLong(usize),
    Malformed(String),
}

impl TodoPath {
    pub fn new(start_state: &str, steps: &[&str]) -> Self {
        TodoPath {
            start_state: start_state.to_string(),
            steps: steps.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        if !is_state_name(&self.start_state) {
            return Err(format!("'{}' is not a state name", self.start_state));
        }
        if self.steps.is_empty() {
            return Err("path has no steps".into());
        }
        for step in &self.steps {
            if step.trim().is_empty() {
                return Err("empty step".into());
            }
            if step.trim() != step {
                return Err(format!("step '{step}' has surrounding whitespace"));
            }
            if step.contains('\n') || step.contains('\r') {
                return Err("step spans several lines".into());
            }
            if step.contains(ARROW) {
                return Err(format!("step '{step}' contains '{ARROW}'"));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for TodoPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.start_state)?;
        for step in &self.steps {
            write!(f, " {ARROW} {step}")?;
        }
        Ok(())
    }
}

pub fn parse_path(text: &str) -> Result<TodoPath, ForestError> {
    let malformed = |m: String| ForestError::Rejected(PathVerdict::Malformed(m));
    let text = text.trim();
    if text.contains('\n') {
        return Err(malformed("path spans several lines".into()));
    }
    let tokens: Vec<&str> = text.split(ARROW).map(str::trim).collect();
    if tokens.len() < 2 {
        return Err(malformed(format!("'{text}' has no steps")));
    }
    if tokens.iter().any(|t| t.is_empty()) {
        return Err(malformed(format!("'{text}' has an empty segment")));
    }
    let path = TodoPath {
        start_state: tokens[0].to_string(),
        steps: tokens[1..].iter().map(|s| s.to_string()).collect(),
    };
    path.check().map_err(malformed)?;
    Ok(path)
}
