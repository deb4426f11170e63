//! Chat-completion providers: an OpenAI-compatible HTTP client and a scripted
//! mock, plus transport backoff and the rerun-until-answered loop.

pub mod mock;
pub mod openai;

use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;
use crate::rng::SeededRng;
use crate::task::{ClassLetter, ReasoningTrace};
use crate::viz::{ImageDetail, ImageTokenRule};

pub use mock::{MockProvider, MockReply, MockScript};
pub use openai::{request_body, OpenAiProvider};

pub const DEFAULT_ANSWER_RETRY_CAP: u32 = 5;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("mock script exhausted: {0}")]
    ScriptExhausted(String),
    #[error("no parseable answer after {attempts} attempts; last response: {last_raw:?}")]
    ExhaustedRetries {
        last_raw: String,
        attempts: u32,
        usage: Usage,
    },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    OpenAi,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Price {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Forces this detail on every image; `None` keeps each image's own.
    pub image_detail: Option<ImageDetail>,
    pub price: Price,
    pub request_timeout_s: f64,
    /// Transport-level retries (rate limits, network errors).
    pub max_retries: u32,
    pub parallelism: usize,
    /// Whether the model accepts image input.
    pub multimodal: bool,
    pub mock_script: Option<PathBuf>,
    /// Token rule used when the provider omits usage, and by the mock.
    pub image_tokens: ImageTokenRule,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::OpenAi,
            base_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            image_detail: None,
            price: Price {
                input_per_million: 2.5,
                output_per_million: 10.0,
            },
            request_timeout_s: 120.0,
            max_retries: 4,
            parallelism: 4,
            multimodal: true,
            mock_script: None,
            image_tokens: ImageTokenRule::default(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::InvalidConfig(m));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        let p = self.price;
        if !(p.input_per_million.is_finite() && p.input_per_million >= 0.0)
            || !(p.output_per_million.is_finite() && p.output_per_million >= 0.0)
        {
            return bad("prices must be non-negative".into());
        }
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return bad("request_timeout_s must be positive".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.model_id.is_empty() {
            return bad("model_id is empty".into());
        }
        if self.kind == ProviderKind::Mock && self.mock_script.is_none() {
            return bad("mock provider needs mock_script".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UsageSource {
    #[default]
    Provider,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub input_source: UsageSource,
}

impl Add for Usage {
    type Output = Usage;

    /// Sums token counts; the result is `Estimated` if either side is.
    fn add(self, o: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + o.input_tokens,
            output_tokens: self.output_tokens + o.output_tokens,
            input_source: if self.input_source == UsageSource::Estimated
                || o.input_source == UsageSource::Estimated
            {
                UsageSource::Estimated
            } else {
                UsageSource::Provider
            },
        }
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, o: Usage) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// Rough usage for providers that do not report it: a quarter token per
/// character of text plus the image rule per image.
pub fn estimate_usage(bundle: &PromptBundle, response: &str, rule: &ImageTokenRule) -> Usage {
    let text_tokens = (bundle.text().chars().count() as u64).div_ceil(4);
    let image_tokens: u64 = bundle
        .images()
        .map(|i| crate::viz::estimate_image_tokens(i, rule) as u64)
        .sum();
    Usage {
        input_tokens: text_tokens + image_tokens,
        output_tokens: (response.chars().count() as u64).div_ceil(4),
        input_source: UsageSource::Estimated,
    }
}

pub trait ChatProvider: Send + Sync {
    fn send(&self, bundle: &PromptBundle) -> Result<Completion, LlmError>;
    fn model_id(&self) -> &str;
}

impl fmt::Debug for dyn ChatProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChatProvider({})", self.model_id())
    }
}

/// Builds the provider described by `config`. Relative mock script paths are
/// resolved against `base_dir`.
pub fn build_provider(
    config: &ProviderConfig,
    base_dir: &std::path::Path,
) -> Result<Arc<dyn ChatProvider>, LlmError> {
    config.validate()?;
    match config.kind {
        ProviderKind::OpenAi => Ok(Arc::new(OpenAiProvider::from_env(config.clone())?)),
        ProviderKind::Mock => {
            let path = config.mock_script.as_ref().expect("validated");
            let path = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(path)
            };
            let script = MockScript::load(&path)?;
            Ok(Arc::new(MockProvider::new(script, config)))
        }
    }
}

/// Exponential backoff with full jitter: the delay before retry `attempt`
/// (0-based) is uniform in `[0, min(max, base * factor^attempt)]`, or the
/// server's retry-after when that is larger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_secs(1),
            factor: 2.0,
            max: Duration::from_secs(60),
        }
    }
}

impl Backoff {
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let secs = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        Duration::from_secs_f64(secs.min(self.max.as_secs_f64()))
    }

    pub fn delay(&self, attempt: u32, rng: &mut SeededRng, retry_after: Option<Duration>) -> Duration {
        let ceiling = self.ceiling(attempt);
        let millis = ceiling.as_millis() as u64;
        let jittered = Duration::from_millis(rng.below(millis + 1));
        match retry_after {
            Some(r) => jittered.max(r.min(self.max)),
            None => jittered,
        }
    }
}

/// Sends once, retrying transient failures up to `max_retries` times with
/// backoff. `sleep` is injected so tests can observe delays.
pub fn send_with_backoff(
    provider: &dyn ChatProvider,
    bundle: &PromptBundle,
    max_retries: u32,
    backoff: &Backoff,
    sleep: &dyn Fn(Duration),
) -> Result<Completion, LlmError> {
    let mut rng = SeededRng::new(crate::rng::derive_seed(0, &bundle.fingerprint()));
    let mut attempt = 0;
    loop {
        match provider.send(bundle) {
            Err(e) if e.is_transient() && attempt < max_retries => {
                let retry_after = match e {
                    LlmError::RateLimited { retry_after } => retry_after,
                    _ => None,
                };
                sleep(backoff.delay(attempt, &mut rng, retry_after));
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Re-sends the same bundle until `parse` yields a choice or `cap` attempts
/// have been made. The returned completion carries the last text and the
/// summed usage and latency of every attempt.
pub fn query_until_answer(
    bundle: &PromptBundle,
    cap: u32,
    mut send: impl FnMut(&PromptBundle) -> Result<Completion, LlmError>,
    parse: impl Fn(&str) -> Option<ClassLetter>,
) -> Result<(ReasoningTrace, Completion), LlmError> {
    let cap = cap.max(1);
    let mut usage = Usage::default();
    let mut latency_ms = 0;
    let mut last = String::new();
    for attempt in 0..cap {
        let c = send(bundle)?;
        usage = if attempt == 0 { c.usage } else { usage + c.usage };
        latency_ms += c.latency_ms;
        if let Some(choice) = parse(&c.text) {
            let trace = ReasoningTrace {
                raw_response: c.text.clone(),
                parsed_choice: Some(choice),
                retries_used: attempt,
            };
            return Ok((
                trace,
                Completion {
                    text: c.text,
                    usage,
                    latency_ms,
                },
            ));
        }
        last = c.text;
    }
    Err(LlmError::ExhaustedRetries {
        last_raw: last,
        attempts: cap,
        usage,
    })
}
