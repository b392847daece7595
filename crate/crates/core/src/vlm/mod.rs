//! Prompting an external vision-language model for drafts and probe answers.

mod client;
mod prompt;
mod transport;

pub use client::{
    AuditEntry, AuditLog, DraftResponse, ProbeSet, RetryPolicy, Sleeper, VlmClient, DEFAULT_MAX_IN_FLIGHT,
};
pub use prompt::{
    build_caption_prompt, build_probe_prompt, build_zero_shot_prompt, caption_draft_template, default_probe_questions,
    parse_numbered_answers, probe_template, zero_shot_template, BoundPrompt, ImageAttachment, PromptTemplate,
    TemplateKind,
};
pub use transport::{
    AttemptError, Envelope, HttpTransport, JsonTextEnvelope, ReplayTransport, Transport, WireRequest, DEFAULT_MODEL,
    ENV_KEY, ENV_MODEL, ENV_URL,
};

use crate::keyframe::AssetSlot;

#[derive(Debug, thiserror::Error)]
pub enum VlmError {
    #[error("asset {slot:?} not found at {path}")]
    AssetNotFound { slot: AssetSlot, path: String },
    #[error("unbound placeholder {0}")]
    UnboundPlaceholder(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {message}")]
    MalformedResponse { raw_body: String, message: String },
    #[error("a probe set needs exactly 5 questions, got {0}")]
    InvalidProbeSet(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("audit log: {0}")]
    Audit(String),
}
