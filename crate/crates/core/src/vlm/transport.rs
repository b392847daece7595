use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::Engine as _;
use serde_json::json;

use super::{BoundPrompt, VlmError};

pub const ENV_URL: &str = "VISTA_VLM_URL";
pub const ENV_KEY: &str = "VISTA_VLM_KEY";
pub const ENV_MODEL: &str = "VISTA_VLM_MODEL";
pub const DEFAULT_MODEL: &str = "gpt-4o";

/// Outcome of a single failed attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    /// Worth retrying (connection failure, timeout, 5xx, 429).
    Transient(String),
    /// Retrying cannot help (4xx, missing canned response).
    Permanent(String),
}

impl AttemptError {
    pub fn message(&self) -> &str {
        match self {
            AttemptError::Transient(m) | AttemptError::Permanent(m) => m,
        }
    }
}

/// Request payload as handed to a transport: instruction plus attachment bytes.
#[derive(Debug, Clone)]
pub struct WireRequest<'a> {
    pub prompt: &'a BoundPrompt,
    pub images: Vec<(String, &'static str, Vec<u8>)>,
}

impl<'a> WireRequest<'a> {
    pub fn load(prompt: &'a BoundPrompt, asset_root: &Path) -> Result<Self, VlmError> {
        let mut images = Vec::with_capacity(prompt.images.len());
        for img in &prompt.images {
            let path = asset_root.join(&img.path);
            let bytes = fs::read(&path)
                .map_err(|_| VlmError::AssetNotFound { slot: img.slot, path: path.display().to_string() })?;
            images.push((img.slot.as_str().to_string(), media_type(&img.path), bytes));
        }
        Ok(Self { prompt, images })
    }
}

fn media_type(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("txt" | "grid") => "text/plain",
        _ => "application/octet-stream",
    }
}

/// Provider-specific request/response shape.
pub trait Envelope: Send + Sync {
    fn encode(&self, model: &str, req: &WireRequest<'_>) -> serde_json::Value;
    fn decode(&self, body: &str) -> Result<String, String>;
}

/// `{"model", "instruction", "images": [{name, media_type, data}]}` in,
/// `{"text": ...}` out.
#[derive(Debug, Clone, Copy, Default)]
pub struct JsonTextEnvelope;

impl Envelope for JsonTextEnvelope {
    fn encode(&self, model: &str, req: &WireRequest<'_>) -> serde_json::Value {
        let engine = base64::engine::general_purpose::STANDARD;
        let images: Vec<_> = req
            .images
            .iter()
            .map(|(name, media, bytes)| json!({"name": name, "media_type": media, "data": engine.encode(bytes)}))
            .collect();
        json!({"model": model, "instruction": req.prompt.text, "images": images})
    }

    fn decode(&self, body: &str) -> Result<String, String> {
        let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
        v.get("text")
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| "response has no string field \"text\"".to_string())
    }
}

pub trait Transport: Send + Sync {
    /// Sends one request and returns the verbatim response body.
    fn send(&self, req: &WireRequest<'_>) -> Result<String, AttemptError>;
    /// Extracts the model text from a body returned by [`Transport::send`].
    fn decode(&self, body: &str) -> Result<String, String>;
    fn model_id(&self) -> &str;
    fn describe(&self) -> String;
}

pub struct HttpTransport {
    url: String,
    key: String,
    model: String,
    client: reqwest::blocking::Client,
    envelope: Box<dyn Envelope>,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("url", &self.url).field("model", &self.model).finish_non_exhaustive()
    }
}

impl HttpTransport {
    pub fn new(url: &str, key: &str, model: &str, timeout: Duration) -> Result<Self, VlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| VlmError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            url: url.to_string(),
            key: key.to_string(),
            model: model.to_string(),
            client,
            envelope: Box::new(JsonTextEnvelope),
        })
    }

    pub fn with_envelope(mut self, envelope: Box<dyn Envelope>) -> Self {
        self.envelope = envelope;
        self
    }

    /// Reads the endpoint from the environment; a missing key or URL is a
    /// configuration error raised before any network traffic.
    pub fn from_env() -> Result<Self, VlmError> {
        let lookup = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let url = lookup(ENV_URL).ok_or_else(|| VlmError::Config(format!("{ENV_URL} is not set")))?;
        let key = lookup(ENV_KEY).ok_or_else(|| VlmError::Config(format!("{ENV_KEY} is not set")))?;
        let model = lookup(ENV_MODEL).unwrap_or_else(|| DEFAULT_MODEL.to_string());
        Self::new(&url, &key, &model, Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &WireRequest<'_>) -> Result<String, AttemptError> {
        let body = self.envelope.encode(&self.model, req);
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.key)
            .json(&body)
            .send()
            .map_err(|e| AttemptError::Transient(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| AttemptError::Transient(format!("reading body failed: {e}")))?;
        if status.is_success() {
            Ok(text)
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(AttemptError::Transient(format!("HTTP {status}")))
        } else {
            Err(AttemptError::Permanent(format!("HTTP {status}: {text}")))
        }
    }

    fn decode(&self, body: &str) -> Result<String, String> {
        self.envelope.decode(body)
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn describe(&self) -> String {
        format!("http {} ({})", self.url, self.model)
    }
}

/// Serves canned responses from `<dir>/<stem>/<template_name>.txt`, where
/// `stem` is the sample id with path-unsafe characters replaced.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    dir: PathBuf,
    model: String,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), model: "replay".into() }
    }

    pub fn with_model_id(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn path_for(&self, sample_id: &str, template: &str) -> PathBuf {
        self.dir.join(crate::store::export_stem(sample_id)).join(format!("{template}.txt"))
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &WireRequest<'_>) -> Result<String, AttemptError> {
        let path = self.path_for(&req.prompt.sample_id, &req.prompt.template_name);
        fs::read_to_string(&path)
            .map_err(|e| AttemptError::Permanent(format!("no canned response at {}: {e}", path.display())))
    }

    fn decode(&self, body: &str) -> Result<String, String> {
        Ok(body.trim_end().to_string())
    }

    fn model_id(&self) -> &str {
        &self.model
    }

    fn describe(&self) -> String {
        format!("replay {}", self.dir.display())
    }
}
