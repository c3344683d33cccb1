//! Blocking JSON client for chat-completion style multimodal endpoints.
//!
//! Three transports share one request builder: `Live` posts over HTTP,
//! `Mock` hands back canned replies, and `Replay` answers from recorded
//! request/response fixtures keyed by a hash of the canonical request body.

mod prompts;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::Image;

pub use prompts::{PromptTemplate, CONFLICT, DECOMPOSE, JUDGE};

pub const ENV_ENDPOINT: &str = "MCIE_MLLM_ENDPOINT";
pub const ENV_MODEL: &str = "MCIE_MLLM_MODEL";
pub const ENV_API_KEY: &str = "MCIE_MLLM_API_KEY";
/// Set to `1` to let the live transport reach hosts other than loopback.
pub const ENV_ALLOW_NETWORK: &str = "MCIE_ALLOW_NETWORK";

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Longest image side sent to a model.
pub const MAX_IMAGE_SIDE: usize = 512;

const REDACTED: &str = "[redacted]";

#[derive(Debug, Error)]
pub enum MllmError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("HTTP status {status}; body: {body}")]
    Status { status: u16, body: String },
    #[error("reply does not match the expected schema: {reason}; body: {body}")]
    Schema { reason: String, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no recorded fixture for request {hash}")]
    FixtureMiss { hash: String },
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("live request to non-loopback host {host:?} refused; set {ENV_ALLOW_NETWORK}=1 to allow it")]
    NetworkDisabled { host: String },
    #[error("client configuration: {0}")]
    Config(String),
}

/// A secret that never appears in `Debug` output.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(REDACTED)
    }
}

/// Recorded replies by request hash.
#[derive(Clone, Debug, Default)]
pub struct Fixtures {
    replies: HashMap<String, String>,
}

impl Fixtures {
    /// Loads every `*.json` file in `dir`. Each holds `{"request": .., "response": ".."}`;
    /// the key is recomputed from the stored request.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, MllmError> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| MllmError::Fixture(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut replies = HashMap::new();
        for path in paths {
            let text =
                std::fs::read_to_string(&path).map_err(|e| MllmError::Fixture(format!("{}: {e}", path.display())))?;
            let v: Value =
                serde_json::from_str(&text).map_err(|e| MllmError::Fixture(format!("{}: {e}", path.display())))?;
            let (Some(request), Some(Value::String(response))) = (v.get("request"), v.get("response")) else {
                return Err(MllmError::Fixture(format!("{}: needs request and response fields", path.display())));
            };
            replies.insert(request_hash(request), response.clone());
        }
        Ok(Self { replies })
    }

    pub fn insert(&mut self, request: &Value, response: impl Into<String>) {
        self.replies.insert(request_hash(request), response.into());
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

#[derive(Debug)]
pub enum Transport {
    Live,
    /// Canned replies handed out in order, cycling.
    Mock(Vec<String>),
    Replay(Fixtures),
}

impl Transport {
    pub fn name(&self) -> &'static str {
        match self {
            Transport::Live => "live",
            Transport::Mock(_) => "mock",
            Transport::Replay(_) => "replay",
        }
    }
}

/// Text content of one model reply.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub content: String,
}

impl Reply {
    /// Parses the content as JSON, tolerating a fenced code block around it.
    pub fn json(&self) -> Result<Value, MllmError> {
        let trimmed = strip_fence(&self.content);
        serde_json::from_str(trimmed)
            .map_err(|e| MllmError::Schema { reason: format!("content is not JSON: {e}"), body: self.content.clone() })
    }
}

fn strip_fence(s: &str) -> &str {
    let t = s.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

#[derive(Debug)]
pub struct MllmClient {
    endpoint: String,
    model: String,
    api_key: Option<ApiKey>,
    timeout: Duration,
    transport: Transport,
    calls: AtomicUsize,
}

impl MllmClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, transport: Transport) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
            transport,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn mock(replies: Vec<String>) -> Self {
        Self::new("mock://", DEFAULT_MODEL, Transport::Mock(replies))
    }

    pub fn replay(fixtures: Fixtures) -> Self {
        Self::new("replay://", DEFAULT_MODEL, Transport::Replay(fixtures))
    }

    /// Live client configured from the `MCIE_MLLM_*` environment variables.
    pub fn from_env() -> Result<Self, MllmError> {
        let endpoint =
            std::env::var(ENV_ENDPOINT).map_err(|_| MllmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        let mut client = Self::new(endpoint, model, Transport::Live);
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            client = client.with_api_key(ApiKey::new(key));
        }
        Ok(client)
    }

    pub fn with_api_key(mut self, key: ApiKey) -> Self {
        self.api_key = Some(key);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    /// Chat-completion request body for `template` applied to `instance`
    /// text and `images`. Keys come out sorted, so its serialization is
    /// canonical.
    pub fn build_request(&self, template: &PromptTemplate, instance: &str, images: &[&Image]) -> Value {
        let mut user = vec![json!({"type": "text", "text": instance})];
        for img in images {
            user.push(json!({"type": "image_url", "image_url": {"url": image_data_url(img)}}));
        }
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": template.guideline},
                {"role": "user", "content": template.example_input},
                {"role": "assistant", "content": template.example_output},
                {"role": "user", "content": user},
            ],
        })
    }

    pub fn call(&self, template: &PromptTemplate, instance: &str, images: &[&Image]) -> Result<Reply, MllmError> {
        let request = self.build_request(template, instance, images);
        self.send(&request)
    }

    /// Sends a prepared request body.
    pub fn send(&self, request: &Value) -> Result<Reply, MllmError> {
        match &self.transport {
            Transport::Mock(replies) => {
                if replies.is_empty() {
                    return Err(MllmError::Config("mock transport has no replies".into()));
                }
                let i = self.calls.fetch_add(1, Ordering::Relaxed) % replies.len();
                Ok(Reply { content: replies[i].clone() })
            }
            Transport::Replay(fixtures) => {
                let hash = request_hash(request);
                fixtures
                    .replies
                    .get(&hash)
                    .map(|content| Reply { content: content.clone() })
                    .ok_or(MllmError::FixtureMiss { hash })
            }
            Transport::Live => self.send_live(request),
        }
    }

    fn send_live(&self, request: &Value) -> Result<Reply, MllmError> {
        let host = endpoint_host(&self.endpoint)
            .ok_or_else(|| MllmError::Config(format!("bad endpoint {:?}", self.endpoint)))?;
        if !is_loopback(&host) && std::env::var(ENV_ALLOW_NETWORK).as_deref() != Ok("1") {
            return Err(MllmError::NetworkDisabled { host });
        }
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(self.timeout)).http_status_as_error(false).build().into();
        let mut req = agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {}", key.expose()));
        }
        let mut resp = req.send(request.to_string()).map_err(|e| self.map_ureq(e))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| self.map_ureq(e))?;
        let body = self.redact(&body);
        if !(200..300).contains(&status) {
            return Err(MllmError::Status { status, body });
        }
        let parsed: Value = serde_json::from_str(&body)
            .map_err(|e| MllmError::Schema { reason: format!("body is not JSON: {e}"), body: body.clone() })?;
        match parsed.pointer("/choices/0/message/content") {
            Some(Value::String(content)) => Ok(Reply { content: content.clone() }),
            _ => Err(MllmError::Schema { reason: "missing choices[0].message.content".into(), body }),
        }
    }

    fn map_ureq(&self, e: ureq::Error) -> MllmError {
        match e {
            ureq::Error::Timeout(_) => MllmError::Timeout(self.timeout),
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => MllmError::Timeout(self.timeout),
            other => MllmError::Transport(self.redact(&other.to_string())),
        }
    }

    fn redact(&self, s: &str) -> String {
        match &self.api_key {
            Some(k) if !k.expose().is_empty() => s.replace(k.expose(), REDACTED),
            _ => s.to_string(),
        }
    }
}

/// Hex SHA-256 of the compact serialization of `request`.
///
/// `serde_json` keeps object keys sorted, so equal requests hash equally
/// regardless of construction order.
pub fn request_hash(request: &Value) -> String {
    let digest = Sha256::digest(request.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Base64 data URL of `img` as a binary pixmap, downscaled so neither side
/// exceeds [`MAX_IMAGE_SIDE`].
pub fn image_data_url(img: &Image) -> String {
    let (h, w) = img.resolution();
    let side = h.max(w);
    let bytes = if side > MAX_IMAGE_SIDE {
        let (nh, nw) = ((h * MAX_IMAGE_SIDE / side).max(1), (w * MAX_IMAGE_SIDE / side).max(1));
        img.resize_nearest(nh, nw).to_ppm_bytes()
    } else {
        img.to_ppm_bytes()
    };
    format!("data:image/x-portable-pixmap;base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn endpoint_host(endpoint: &str) -> Option<String> {
    let rest = endpoint.split_once("://").map(|(_, r)| r)?;
    let authority = rest.split(['/', '?', '#']).next()?;
    let authority = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host =
        if let Some(v6) = authority.strip_prefix('[') { v6.split(']').next()? } else { authority.split(':').next()? };
    (!host.is_empty()).then(|| host.to_ascii_lowercase())
}

fn is_loopback(host: &str) -> bool {
    host == "localhost" || host == "::1" || host.parse::<std::net::Ipv4Addr>().is_ok_and(|ip| ip.is_loopback())
}
