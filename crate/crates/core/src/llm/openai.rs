use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};
use ureq::Agent;

use super::{estimate_usage, ChatProvider, Completion, LlmError, ProviderConfig, Usage, UsageSource};
use crate::prompt::{Part, PromptBundle};

/// Chat-completions request body: one user message whose content lists the
/// bundle's parts in order, images as base64 PNG data URIs.
pub fn request_body(bundle: &PromptBundle, config: &ProviderConfig) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let content: Vec<Value> = bundle
        .parts
        .iter()
        .map(|p| match p {
            Part::Text(t) => json!({"type": "text", "text": t}),
            Part::Image(img) => {
                let detail = config.image_detail.unwrap_or(img.detail);
                json!({
                    "type": "image_url",
                    "image_url": {
                        "url": format!("data:image/png;base64,{}", b64.encode(&img.png_bytes)),
                        "detail": detail.to_string(),
                    }
                })
            }
        })
        .collect();
    json!({
        "model": config.model_id,
        "messages": [{"role": "user", "content": content}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    })
}

pub struct OpenAiProvider {
    config: ProviderConfig,
    api_key: String,
    agent: Agent,
}

impl OpenAiProvider {
    pub fn new(config: ProviderConfig, api_key: String) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiProvider {
            config,
            api_key,
            agent,
        }
    }

    /// Reads the API key from the environment variable named in the config.
    pub fn from_env(config: ProviderConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            LlmError::AuthFailed(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        Ok(Self::new(config, key))
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| body.chars().take(500).collect())
}

impl ChatProvider for OpenAiProvider {
    fn send(&self, bundle: &PromptBundle) -> Result<Completion, LlmError> {
        let body = request_body(bundle, &self.config);
        let start = Instant::now();
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let latency_ms = start.elapsed().as_millis() as u64;
        match status {
            200..=299 => {}
            401 | 403 => return Err(LlmError::AuthFailed(error_message(&text))),
            429 => return Err(LlmError::RateLimited { retry_after }),
            500..=599 => return Err(LlmError::Transport(format!("HTTP {status}: {}", error_message(&text)))),
            _ => return Err(LlmError::ProviderError(format!("HTTP {status}: {}", error_message(&text)))),
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::ProviderError(format!("malformed response: {e}")))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::ProviderError("response has no message content".into()))?
            .to_string();
        let usage = match (
            v["usage"]["prompt_tokens"].as_u64(),
            v["usage"]["completion_tokens"].as_u64(),
        ) {
            (Some(input), Some(output)) => Usage {
                input_tokens: input,
                output_tokens: output,
                input_source: UsageSource::Provider,
            },
            _ => estimate_usage(bundle, &content, &self.config.image_tokens),
        };
        Ok(Completion {
            text: content,
            usage,
            latency_ms,
        })
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}
