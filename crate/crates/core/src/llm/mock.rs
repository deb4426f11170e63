//! Scripted provider for tests and offline runs.
//!
//! Script files are JSON:
//!
//! ```json
//! {
//!   "keyed": {"plan:ECG": "1. RR intervals\nTime-domain", "ECG": "Answer Choice: (A)"},
//!   "sequence": ["Answer Choice: (B)", {"error": "rate_limited"}]
//! }
//! ```
//!
//! A request is matched against keys in this order: its bundle fingerprint,
//! `plan:<task>` (planning prompts only), `<task>:<sample id>`, `<task>`, `*`.
//! A single reply under a key repeats forever; a list is consumed in order.
//! Requests matching no key take the next `sequence` entry.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, Completion, LlmError, ProviderConfig, Usage, UsageSource};
use crate::prompt::{PromptBundle, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockErrorKind {
    RateLimited,
    Transport,
    Auth,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Error {
        error: MockErrorKind,
        #[serde(default)]
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyedReplies {
    One(MockReply),
    Many(Vec<MockReply>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MockScript {
    #[serde(default)]
    pub keyed: BTreeMap<String, KeyedReplies>,
    #[serde(default)]
    pub sequence: Vec<MockReply>,
}

impl MockScript {
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        MockScript {
            keyed: BTreeMap::new(),
            sequence: replies.into_iter().map(|s| MockReply::Text(s.into())).collect(),
        }
    }

    pub fn keyed<K: Into<String>, S: Into<String>>(pairs: impl IntoIterator<Item = (K, S)>) -> Self {
        MockScript {
            keyed: pairs
                .into_iter()
                .map(|(k, s)| (k.into(), KeyedReplies::One(MockReply::Text(s.into()))))
                .collect(),
            sequence: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        if script.keyed.is_empty() && script.sequence.is_empty() {
            return Err(LlmError::InvalidConfig(format!("{}: script is empty", path.display())));
        }
        Ok(script)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub fingerprint: String,
    pub task: String,
    pub stage: Stage,
    pub target_id: Option<String>,
    pub text: String,
    pub image_count: usize,
}

#[derive(Default)]
struct State {
    sequence_pos: usize,
    key_pos: HashMap<String, usize>,
    requests: Vec<RecordedRequest>,
}

pub struct MockProvider {
    script: MockScript,
    model_id: String,
    /// Synthetic input tokens charged per image.
    pub image_tokens: u64,
    state: Mutex<State>,
}

impl MockProvider {
    pub fn new(script: MockScript, config: &ProviderConfig) -> Self {
        MockProvider {
            script,
            model_id: config.model_id.clone(),
            image_tokens: config.image_tokens.low_detail_tokens as u64,
            state: Mutex::new(State::default()),
        }
    }

    pub fn from_script(script: MockScript) -> Self {
        Self::new(script, &ProviderConfig::default())
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.lock().unwrap().requests.len()
    }

    fn keys(bundle: &PromptBundle, fingerprint: &str) -> Vec<String> {
        let mut keys = vec![fingerprint.to_string()];
        if bundle.stage == Stage::Planning {
            keys.push(format!("plan:{}", bundle.task));
        } else {
            if let Some(id) = &bundle.target_id {
                keys.push(format!("{}:{id}", bundle.task));
            }
            keys.push(bundle.task.clone());
        }
        keys.push("*".into());
        keys
    }

    fn next_reply(&self, state: &mut State, bundle: &PromptBundle, fingerprint: &str) -> Result<MockReply, LlmError> {
        for key in Self::keys(bundle, fingerprint) {
            match self.script.keyed.get(&key) {
                Some(KeyedReplies::One(r)) => return Ok(r.clone()),
                Some(KeyedReplies::Many(list)) => {
                    let pos = state.key_pos.entry(key.clone()).or_insert(0);
                    let reply = list.get(*pos).cloned().ok_or_else(|| {
                        LlmError::ScriptExhausted(format!("key {key:?} used {} times", list.len()))
                    })?;
                    *pos += 1;
                    return Ok(reply);
                }
                None => {}
            }
        }
        let reply = self
            .script
            .sequence
            .get(state.sequence_pos)
            .cloned()
            .ok_or_else(|| {
                LlmError::ScriptExhausted(format!(
                    "sequence of {} replies used up",
                    self.script.sequence.len()
                ))
            })?;
        state.sequence_pos += 1;
        Ok(reply)
    }
}

impl ChatProvider for MockProvider {
    fn send(&self, bundle: &PromptBundle) -> Result<Completion, LlmError> {
        let fingerprint = bundle.fingerprint();
        let text = bundle.text();
        let mut state = self.state.lock().unwrap();
        state.requests.push(RecordedRequest {
            fingerprint: fingerprint.clone(),
            task: bundle.task.clone(),
            stage: bundle.stage,
            target_id: bundle.target_id.clone(),
            text: text.clone(),
            image_count: bundle.image_count(),
        });
        match self.next_reply(&mut state, bundle, &fingerprint)? {
            MockReply::Text(reply) => {
                let usage = Usage {
                    input_tokens: (text.chars().count() as u64).div_ceil(4)
                        + self.image_tokens * bundle.image_count() as u64,
                    output_tokens: (reply.chars().count() as u64).div_ceil(4),
                    input_source: UsageSource::Estimated,
                };
                Ok(Completion {
                    text: reply,
                    usage,
                    latency_ms: 0,
                })
            }
            MockReply::Error { error, message } => Err(match error {
                MockErrorKind::RateLimited => LlmError::RateLimited { retry_after: None },
                MockErrorKind::Transport => LlmError::Transport(message),
                MockErrorKind::Auth => LlmError::AuthFailed(message),
                MockErrorKind::Provider => LlmError::ProviderError(message),
            }),
        }
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}
