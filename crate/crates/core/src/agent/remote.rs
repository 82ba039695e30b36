//! Chat-completion endpoint client (OpenAI-compatible wire format).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, CompletionBackend, Message, MessageRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_key_env() -> String {
    "LEAKAGE_API_KEY".into()
}

/// Sent as the first user message when a role speaks before anyone else.
pub const KICKOFF: &str = "Begin the conversation.";

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, timeout: Duration) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(RemoteBackend {
            config,
            url,
            api_key,
            client,
        })
    }

    /// Request body. Sampling parameters are left at the provider defaults.
    pub fn request_body(&self, system: &str, history: &[Message]) -> Value {
        let mut messages = vec![json!({"role": "system", "content": system})];
        if history.first().is_none_or(|m| m.role != MessageRole::User) {
            messages.push(json!({"role": "user", "content": KICKOFF}));
        }
        messages.extend(history.iter().map(|m| json!({"role": m.role, "content": m.content})));
        json!({"model": self.config.model, "messages": messages})
    }
}

impl CompletionBackend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.endpoint)
    }

    fn complete(&self, system: &str, history: &[Message], _seed: u64) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.url).json(&self.request_body(system, history));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => extract_content(&body),
            429 => Err(BackendError::RateLimited(snippet(&body))),
            500..=599 => Err(BackendError::Server {
                status,
                body: snippet(&body),
            }),
            _ => Err(BackendError::Rejected {
                status,
                body: snippet(&body),
            }),
        }
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(300).collect()
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed(format!("no message content in {}", snippet(body))))?;
    if content.trim().is_empty() {
        return Err(BackendError::Empty);
    }
    Ok(content.to_string())
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;

    /// Serves one canned HTTP response per connection and returns the
    /// request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(pos) = text.find("\r\n\r\n") {
                        let len = text[..pos]
                            .lines()
                            .find_map(|l| {
                                let lower = l.to_ascii_lowercase();
                                lower
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= pos + 4 + len {
                            seen.push(text[pos + 4..].to_string());
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn backend(url: String) -> RemoteBackend {
        RemoteBackend::new(
            RemoteConfig {
                endpoint: url,
                model: "test-model".into(),
                api_key_env: "LEAKAGE_TEST_KEY_UNSET".into(),
            },
            Duration::from_secs(5),
        )
        .unwrap()
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    #[test]
    fn completes_and_sends_kickoff() {
        let (url, handle) = serve(vec![(200, ok_body("Hello there"))]);
        let out = backend(url).complete("sys", &[], 0).unwrap();
        assert_eq!(out, "Hello there");
        let sent: Value = serde_json::from_str(&handle.join().unwrap()[0]).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], KICKOFF);
        assert!(sent.get("temperature").is_none());
    }

    #[test]
    fn maps_status_codes() {
        let (url, handle) = serve(vec![
            (429, "{}".into()),
            (503, "down".into()),
            (400, "bad".into()),
            (200, "not json".into()),
        ]);
        let b = backend(url);
        let h = [Message::user("hi")];
        assert!(matches!(b.complete("s", &h, 0), Err(BackendError::RateLimited(_))));
        assert!(matches!(b.complete("s", &h, 0), Err(BackendError::Server { status: 503, .. })));
        assert!(matches!(b.complete("s", &h, 0), Err(BackendError::Rejected { status: 400, .. })));
        assert!(matches!(b.complete("s", &h, 0), Err(BackendError::Malformed(_))));
        handle.join().unwrap();
    }

    #[test]
    fn empty_content_is_retryable() {
        assert_eq!(extract_content(&ok_body("  ")), Err(BackendError::Empty));
        assert!(BackendError::Empty.is_retryable());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let b = backend("http://127.0.0.1:9".into());
        assert!(matches!(
            b.complete("s", &[Message::user("x")], 0),
            Err(BackendError::Transport(_))
        ));
    }
}
