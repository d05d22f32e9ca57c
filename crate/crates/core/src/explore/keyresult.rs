use std::collections::BTreeMap;

use crate::text::{first_sentence, one_line, truncate_chars};

/// Longest key result the rule summarizer produces.
pub const MAX_RULE_SUMMARY_CHARS: usize = 200;

/// Openings of observations that report an action did not work.
const FAILURE_OPENINGS: [&str; 10] = [
    "You can't",
    "You cannot",
    "You have to",
    "You don't have",
    "You need to",
    "You already have",
    "You still miss",
    "That's not a verb",
    "I beg your pardon",
    "Nothing happens",
];

/// Why an action failed, when its observation says it did. Uninformative
/// failures (`Nothing happens.`) give an empty reason.
pub fn failure_reason(observation: &str) -> Option<String> {
    let first = observation.trim().lines().next().unwrap_or("").trim();
    if !FAILURE_OPENINGS.iter().any(|p| first.starts_with(p)) {
        return None;
    }
    if first.starts_with("Nothing happens") {
        return Some(String::new());
    }
    Some(first_sentence(first).to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyResult {
    pub text: String,
    pub failed: bool,
}

fn room_header(line: &str) -> Option<&str> {
    line.trim().strip_prefix("-= ")?.strip_suffix(" =-").map(str::trim)
}

fn cap(text: &str) -> String {
    truncate_chars(&one_line(text), MAX_RULE_SUMMARY_CHARS, " ...")
}

/// Deterministic summary of one observation: the location and what follows
/// a room header, otherwise the first sentence plus any position and
/// inventory lines.
pub fn summarize_observation(observation: &str) -> KeyResult {
    if let Some(reason) = failure_reason(observation) {
        return KeyResult {
            text: reason,
            failed: true,
        };
    }
    let lines: Vec<&str> = observation.lines().collect();
    if let Some(at) = lines.iter().position(|l| room_header(l).is_some()) {
        let room = room_header(lines[at]).unwrap_or_default();
        let rest = lines[at + 1..].join(" ");
        return KeyResult {
            text: cap(&format!("Agent's location: {room}. {rest}")),
            failed: false,
        };
    }
    let mut parts = vec![first_sentence(observation).to_string()];
    for line in &lines[1.min(lines.len())..] {
        let t = line.trim();
        if t.starts_with("Position:") || t.starts_with("Inventory:") {
            parts.push(t.to_string());
        }
    }
    KeyResult {
        text: cap(&parts.join(" ")),
        failed: false,
    }
}

fn counted_inventory(line: &str) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    for part in line.split(", ") {
        if let Some((item, n)) = part.split_once(": ") {
            if let Ok(n) = n.trim().parse::<i64>() {
                out.insert(item.trim().to_string(), n);
            }
        }
    }
    out
}

/// Deterministic summary of a sub-agent trajectory: final location or
/// position plus what the inventory gained and lost. Fails when no step
/// succeeded.
pub fn summarize_steps(initial: Option<&str>, steps: &[(String, String)]) -> KeyResult {
    let succeeded: Vec<&(String, String)> = steps.iter().filter(|(_, o)| failure_reason(o).is_none()).collect();
    if succeeded.is_empty() {
        return KeyResult {
            text: String::new(),
            failed: true,
        };
    }
    let observations: Vec<&str> = initial.into_iter().chain(steps.iter().map(|(_, o)| o.as_str())).collect();
    let mut parts = Vec::new();
    let room = observations.iter().flat_map(|o| o.lines()).filter_map(room_header).last();
    let position = observations
        .iter()
        .flat_map(|o| o.lines())
        .filter_map(|l| l.trim().strip_prefix("Position: "))
        .last();
    if let Some(room) = room {
        parts.push(format!("Agent's location: {room}."));
    } else if let Some(p) = position {
        parts.push(format!("Position: {p}."));
    }

    let mut delta: BTreeMap<String, i64> = BTreeMap::new();
    let inventories: Vec<&str> = observations
        .iter()
        .flat_map(|o| o.lines())
        .filter_map(|l| l.trim().strip_prefix("Inventory: "))
        .collect();
    if let (Some(first), Some(last)) = (inventories.first(), inventories.last()) {
        let before = counted_inventory(first);
        let after = counted_inventory(last);
        for item in before.keys().chain(after.keys()) {
            let d = after.get(item).copied().unwrap_or(0) - before.get(item).copied().unwrap_or(0);
            if d != 0 {
                delta.insert(item.clone(), d);
            }
        }
    } else {
        for (_, obs) in &succeeded {
            let first = obs.lines().next().unwrap_or("").trim().trim_end_matches('.');
            if let Some(rest) = first.strip_prefix("You take the ") {
                let item = rest.split(" from the ").next().unwrap_or(rest);
                *delta.entry(item.to_string()).or_default() += 1;
            } else if let Some(item) = first.strip_prefix("You drop the ") {
                *delta.entry(item.to_string()).or_default() -= 1;
            } else if let Some(rest) = first.strip_prefix("You put the ") {
                let item = rest.split(" on the ").next().unwrap_or(rest);
                *delta.entry(item.to_string()).or_default() -= 1;
            } else if first.starts_with("You prepare the meal") {
                *delta.entry("meal".into()).or_default() += 1;
            }
        }
        delta.retain(|_, d| *d != 0);
    }
    let gained: Vec<String> = delta
        .iter()
        .filter(|(_, d)| **d > 0)
        .map(|(i, d)| if *d == 1 { i.clone() } else { format!("{i} x{d}") })
        .collect();
    let lost: Vec<String> = delta
        .iter()
        .filter(|(_, d)| **d < 0)
        .map(|(i, d)| if *d == -1 { i.clone() } else { format!("{i} x{}", -d) })
        .collect();
    if !gained.is_empty() {
        parts.push(format!("Gained: {}.", gained.join(", ")));
    }
    if !lost.is_empty() {
        parts.push(format!("Lost: {}.", lost.join(", ")));
    }
    if gained.is_empty() && lost.is_empty() {
        let (_, last) = succeeded[succeeded.len() - 1];
        let line = last.lines().find(|l| room_header(l).is_none() && !l.trim().is_empty()).unwrap_or("");
        parts.push(first_sentence(line).to_string());
    }
    KeyResult {
        text: cap(&parts.join(" ")),
        failed: false,
    }
}
