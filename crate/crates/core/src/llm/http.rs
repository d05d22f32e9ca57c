use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, LlmError, Provider};

/// Environment variable holding the bearer token.
pub const API_KEY_VAR: &str = "ILCL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Attempts per request, the first one included.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_prompt_chars: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            max_attempts: 4,
            initial_backoff_ms: 500,
            timeout_secs: 120,
            max_prompt_chars: 400_000,
        }
    }
}

/// Chat-completions client. HTTP 429 and 5xx answers are retried with
/// doubling delays; other failures are returned at once.
pub struct HttpProvider {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    sleep: fn(Duration),
}

impl HttpProvider {
    /// Reads the token from [`API_KEY_VAR`] when it is set.
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
        HttpProvider::with_key(config, api_key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpProvider {
            config,
            api_key,
            agent,
            sleep: std::thread::sleep,
        }
    }

    /// Replaces the function used to wait between attempts.
    pub fn with_sleeper(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl Provider for HttpProvider {
    fn complete(&mut self, req: &CompletionRequest) -> Result<String, LlmError> {
        let chars = req.rendered_prompt.chars().count();
        if chars > self.config.max_prompt_chars {
            return Err(LlmError::PromptTooLong {
                template: req.template_id,
                chars,
                limit: self.config.max_prompt_chars,
            });
        }
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.rendered_prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        });
        let url = self.endpoint();
        let attempts = self.config.max_attempts.max(1);
        let mut delay = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last_status = 0;
        for attempt in 1..=attempts {
            let mut request = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = request
                .send_json(&body)
                .map_err(|e| LlmError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 429 || status >= 500 {
                last_status = status;
                tracing::warn!(status, attempt, "provider busy, backing off");
                if attempt < attempts {
                    (self.sleep)(delay);
                    delay *= 2;
                }
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(LlmError::Status { status, attempts: attempt });
            }
            let value: serde_json::Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| LlmError::BadReply(e.to_string()))?;
            return value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| LlmError::BadReply("choices[0].message.content is missing".into()));
        }
        Err(LlmError::Status {
            status: last_status,
            attempts,
        })
    }
}
