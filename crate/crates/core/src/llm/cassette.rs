use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError, Provider, TemplateId};

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub template_id: TemplateId,
    /// Request digest; empty matches any request.
    #[serde(default)]
    pub digest: String,
    pub response: String,
}

/// Recorded completions in call order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new(entries: Vec<CassetteEntry>) -> Self {
        Cassette {
            version: CASSETTE_VERSION,
            entries,
        }
    }

    /// Entries without digests, answered in order per template.
    pub fn scripted<S: Into<String>>(items: impl IntoIterator<Item = (TemplateId, S)>) -> Self {
        Cassette::new(
            items
                .into_iter()
                .map(|(template_id, r)| CassetteEntry {
                    template_id,
                    digest: String::new(),
                    response: r.into(),
                })
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let c: Cassette = serde_json::from_str(text).map_err(|e| LlmError::Cassette(e.to_string()))?;
        if c.version != CASSETTE_VERSION {
            return Err(LlmError::Cassette(format!("unsupported cassette version {}", c.version)));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cassette serializes")
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Cassette::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_json()).map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))
    }
}

/// Answers requests from a cassette, consuming entries in order per
/// template. In strict mode a recorded digest must match the request.
#[derive(Debug)]
pub struct Player {
    queues: BTreeMap<TemplateId, VecDeque<CassetteEntry>>,
    strict: bool,
    served: usize,
}

impl Player {
    pub fn new(cassette: Cassette, strict: bool) -> Self {
        let mut queues: BTreeMap<TemplateId, VecDeque<CassetteEntry>> = BTreeMap::new();
        for e in cassette.entries {
            queues.entry(e.template_id).or_default().push_back(e);
        }
        Player {
            queues,
            strict,
            served: 0,
        }
    }

    pub fn served(&self) -> usize {
        self.served
    }

    /// Entries not yet consumed, per template.
    pub fn remaining(&self) -> BTreeMap<TemplateId, usize> {
        self.queues
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(k, q)| (*k, q.len()))
            .collect()
    }
}

impl Provider for Player {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        let queue = self.queues.entry(req.template_id).or_default();
        let Some(entry) = queue.front() else {
            return Err(LlmError::CassetteExhausted(req.template_id));
        };
        if self.strict && !entry.digest.is_empty() {
            let actual = req.digest();
            if actual != entry.digest {
                return Err(LlmError::DigestMismatch {
                    template: req.template_id,
                    expected: entry.digest.clone(),
                    actual,
                });
            }
        }
        let entry = queue.pop_front().expect("front exists");
        self.served += 1;
        Ok(entry.response)
    }
}

/// Passes requests to `inner` and keeps every answer.
pub struct Recorder<P> {
    inner: P,
    entries: Vec<CassetteEntry>,
}

impl<P: Provider> Recorder<P> {
    pub fn new(inner: P) -> Self {
        Recorder {
            inner,
            entries: Vec::new(),
        }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette::new(self.entries.clone())
    }

    pub fn into_parts(self) -> (P, Cassette) {
        (self.inner, Cassette::new(self.entries))
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(req)?;
        self.entries.push(CassetteEntry {
            template_id: req.template_id,
            digest: req.digest(),
            response: response.clone(),
        });
        Ok(response)
    }
}
