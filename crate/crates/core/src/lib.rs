//! Driver-attention caption curation and evaluation.
pub mod caption;
pub mod clock;
pub mod digest;
pub mod keyframe;
pub mod lora;
pub mod metrics;
pub mod overlay;
pub mod store;
pub mod synth;
pub mod vlm;
