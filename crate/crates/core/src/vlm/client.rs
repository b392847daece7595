use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::keyframe::ScoredFramePair;

use super::prompt::{build_probe_prompt, parse_numbered_answers};
use super::transport::{AttemptError, Transport, WireRequest};
use super::{BoundPrompt, VlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftResponse {
    pub sample_id: String,
    pub template_name: String,
    pub raw_text: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub sample_id: String,
    pub questions: Vec<String>,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base: Duration::from_secs(1), factor: 2.0, max_attempts: 5 }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(attempt as i32 - 1))
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "snake_case")]
pub enum AuditEntry {
    Request { timestamp: String, sample_id: String, template_name: String, attempt: u32, instruction: String },
    Response { timestamp: String, sample_id: String, template_name: String, attempt: u32, outcome: String, body: String },
    Accepted { timestamp: String, response: DraftResponse },
}

/// Append-only JSON-lines record of all traffic, written before any parsing.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl AuditLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, VlmError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| VlmError::Audit(e.to_string()))?;
        }
        Ok(Self { path, lock: Mutex::new(()) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &AuditEntry) -> Result<(), VlmError> {
        let _guard = self.lock.lock().expect("audit lock poisoned");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| VlmError::Audit(e.to_string()))?;
        let mut line = serde_json::to_string(entry).map_err(|e| VlmError::Audit(e.to_string()))?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| VlmError::Audit(e.to_string()))
    }

    pub fn entries(&self) -> Result<Vec<AuditEntry>, VlmError> {
        let f = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(VlmError::Audit(e.to_string())),
        };
        BufReader::new(f)
            .lines()
            .filter(|l| l.as_ref().map(|l| !l.trim().is_empty()).unwrap_or(true))
            .map(|l| {
                let l = l.map_err(|e| VlmError::Audit(e.to_string()))?;
                serde_json::from_str(&l).map_err(|e| VlmError::Audit(e.to_string()))
            })
            .collect()
    }

    /// Accepted responses keyed by (sample_id, template_name).
    pub fn accepted(&self) -> Result<HashMap<(String, String), DraftResponse>, VlmError> {
        let mut out = HashMap::new();
        for e in self.entries()? {
            if let AuditEntry::Accepted { response, .. } = e {
                out.insert((response.sample_id.clone(), response.template_name.clone()), response);
            }
        }
        Ok(out)
    }
}

/// Minimum spacing between request starts across all workers.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn wait(&self, sleeper: &Sleeper) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = next.map_or(now, |n| n.max(now));
            *next = Some(start + self.interval);
            start - now
        };
        if !wait.is_zero() {
            sleeper(wait);
        }
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Shared client: retries, audit, de-duplication and bounded concurrency.
pub struct VlmClient {
    transport: Arc<dyn Transport>,
    asset_root: PathBuf,
    retry: RetryPolicy,
    sleeper: Sleeper,
    clock: Arc<dyn Clock>,
    audit: Option<AuditLog>,
    cache: Mutex<HashMap<(String, String), DraftResponse>>,
    limiter: RateLimiter,
    max_in_flight: usize,
}

impl std::fmt::Debug for VlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VlmClient").field("transport", &self.transport.describe()).finish_non_exhaustive()
    }
}

impl VlmClient {
    pub fn new(transport: Arc<dyn Transport>, asset_root: impl Into<PathBuf>) -> Self {
        Self {
            transport,
            asset_root: asset_root.into(),
            retry: RetryPolicy::default(),
            sleeper: Arc::new(std::thread::sleep),
            clock: Arc::new(SystemClock),
            audit: None,
            cache: Mutex::new(HashMap::new()),
            limiter: RateLimiter { interval: Duration::ZERO, next: Mutex::new(None) },
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Enables the audit log and primes the cache with its accepted responses.
    pub fn with_audit(mut self, audit: AuditLog) -> Result<Self, VlmError> {
        *self.cache.get_mut().expect("cache poisoned") = audit.accepted()?;
        self.audit = Some(audit);
        Ok(self)
    }

    pub fn with_rate_limit(mut self, min_interval: Duration) -> Self {
        self.limiter.interval = min_interval;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.transport.model_id()
    }

    pub fn asset_root(&self) -> &Path {
        &self.asset_root
    }

    fn audit(&self, entry: AuditEntry) -> Result<(), VlmError> {
        match &self.audit {
            Some(a) => a.append(&entry),
            None => Ok(()),
        }
    }

    /// Sends `prompt`, retrying transient failures with exponential backoff.
    ///
    /// A response already accepted for the same sample and template is
    /// returned without contacting the endpoint again.
    pub fn request_draft(&self, prompt: &BoundPrompt) -> Result<DraftResponse, VlmError> {
        let key = (prompt.sample_id.clone(), prompt.template_name.clone());
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let wire = WireRequest::load(prompt, &self.asset_root)?;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                (self.sleeper)(self.retry.delay_after(attempt - 1));
            }
            self.limiter.wait(&self.sleeper);
            self.audit(AuditEntry::Request {
                timestamp: self.clock.timestamp(),
                sample_id: prompt.sample_id.clone(),
                template_name: prompt.template_name.clone(),
                attempt,
                instruction: prompt.text.clone(),
            })?;
            let started = Instant::now();
            let result = self.transport.send(&wire);
            let latency_ms = if self.clock.is_fixed() { 0 } else { started.elapsed().as_millis() as u64 };
            let (outcome, body) = match &result {
                Ok(body) => ("ok".to_string(), body.clone()),
                Err(e) => (format!("error: {}", e.message()), String::new()),
            };
            self.audit(AuditEntry::Response {
                timestamp: self.clock.timestamp(),
                sample_id: prompt.sample_id.clone(),
                template_name: prompt.template_name.clone(),
                attempt,
                outcome,
                body,
            })?;
            match result {
                Ok(body) => {
                    let text = self
                        .transport
                        .decode(&body)
                        .map_err(|message| VlmError::MalformedResponse { raw_body: body.clone(), message })?;
                    let response = DraftResponse {
                        sample_id: prompt.sample_id.clone(),
                        template_name: prompt.template_name.clone(),
                        raw_text: text,
                        model_id: self.transport.model_id().to_string(),
                        latency_ms,
                        attempt,
                    };
                    let mut cache = self.cache.lock().expect("cache poisoned");
                    if let Some(existing) = cache.get(&key) {
                        return Ok(existing.clone());
                    }
                    self.audit(AuditEntry::Accepted { timestamp: self.clock.timestamp(), response: response.clone() })?;
                    cache.insert(key, response.clone());
                    return Ok(response);
                }
                Err(AttemptError::Permanent(message)) => {
                    return Err(VlmError::Transport { attempts: attempt, message });
                }
                Err(AttemptError::Transient(message)) => last = message,
            }
        }
        Err(VlmError::Transport { attempts: self.retry.max_attempts, message: last })
    }

    /// Asks the five probing questions about `pair` and aligns the answers.
    pub fn request_probe_answers(&self, pair: &ScoredFramePair, questions: &[String]) -> Result<ProbeSet, VlmError> {
        let prompt = build_probe_prompt(pair, &self.asset_root, questions)?;
        let response = self.request_draft(&prompt)?;
        let answers = parse_numbered_answers(&response.raw_text);
        if answers.len() != questions.len() {
            return Err(VlmError::MalformedResponse {
                raw_body: response.raw_text,
                message: format!("expected {} answers, got {}", questions.len(), answers.len()),
            });
        }
        Ok(ProbeSet { sample_id: pair.sample_id(), questions: questions.to_vec(), answers })
    }

    /// Runs `f` over `items` on at most `max_in_flight` threads; results keep input order.
    pub fn map_concurrent<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..self.max_in_flight.min(items.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() {
                        break;
                    }
                    let r = f(&items[i]);
                    *slots[i].lock().expect("slot poisoned") = Some(r);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled")).collect()
    }

    pub fn request_drafts(&self, prompts: &[BoundPrompt]) -> Vec<Result<DraftResponse, VlmError>> {
        self.map_concurrent(prompts, |p| self.request_draft(p))
    }
}
