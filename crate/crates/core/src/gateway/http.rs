//! OpenAI-compatible chat-completions HTTP backend.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{CompletionRequest, GatewayConfig, GatewayError};

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Debug)]
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &GatewayConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build();
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let api_key = std::env::var(&config.api_key_env_name).ok();
        Self {
            agent,
            endpoint,
            api_key,
        }
    }

    /// Sends one chat-completion request. The request body is the minimal
    /// OpenAI shape: a single user message carrying the rendered prompt.
    pub fn complete_once(&self, req: &CompletionRequest) -> Result<String, TransportOutcome> {
        let mut body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let mut http_req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            http_req = http_req.set("Authorization", &format!("Bearer {key}"));
        }
        match http_req.send_string(&body.to_string()) {
            Ok(response) => {
                let text = response.into_string().map_err(|e| {
                    TransportOutcome::Fatal(GatewayError::MalformedResponse(e.to_string()))
                })?;
                parse_reply(&text).map_err(TransportOutcome::Fatal)
            }
            Err(ureq::Error::Status(code, response)) => {
                let body = response.into_string().unwrap_or_default();
                let err = GatewayError::HttpStatus {
                    status: code,
                    body: body.chars().take(200).collect(),
                };
                if code == 429 || (500..=599).contains(&code) {
                    Err(TransportOutcome::Transient(err))
                } else {
                    Err(TransportOutcome::Fatal(err))
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if matches!(t.kind(), ureq::ErrorKind::Io) && message.contains("timed out") {
                    Err(TransportOutcome::Transient(GatewayError::Timeout(message)))
                } else if matches!(t.kind(), ureq::ErrorKind::Io | ureq::ErrorKind::ConnectionFailed | ureq::ErrorKind::Dns)
                {
                    Err(TransportOutcome::Transient(GatewayError::Transport(message)))
                } else {
                    Err(TransportOutcome::Fatal(GatewayError::Transport(message)))
                }
            }
        }
    }
}

fn parse_reply(text: &str) -> Result<String, GatewayError> {
    let parsed: ChatResponse = serde_json::from_str(text)
        .map_err(|e| GatewayError::MalformedResponse(format!("{e}: {}", text.chars().take(120).collect::<String>())))?;
    parsed
        .choices
        .first()
        .and_then(|c| c.message.content.clone())
        .ok_or_else(|| GatewayError::MalformedResponse("response has no assistant content".into()))
}

/// Whether a failed attempt is worth retrying.
#[derive(Debug)]
pub enum TransportOutcome {
    Transient(GatewayError),
    Fatal(GatewayError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_extraction() {
        let text = r#"{"choices":[{"message":{"role":"assistant","content":"A\nB"}}]}"#;
        assert_eq!(parse_reply(text).unwrap(), "A\nB");
    }

    #[test]
    fn missing_content_is_malformed() {
        let text = r#"{"choices":[]}"#;
        assert!(matches!(
            parse_reply(text),
            Err(GatewayError::MalformedResponse(_))
        ));
    }
}
