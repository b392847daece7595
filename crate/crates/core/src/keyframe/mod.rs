//! Attention-shift keyframe selection.
//!
//! Gaze heatmaps are pooled onto a common grid and normalized into probability
//! histograms. Consecutive frames are scored with an epsilon-smoothed KL
//! divergence and the highest-scoring transitions of each video are retained.

mod io;

pub use io::{discover_videos, load_heatmap, load_video, FrameAssets, VideoFrames};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default smoothing constant added to both histograms inside the log ratio.
pub const DEFAULT_EPSILON: f64 = 1e-10;
/// Default pooled grid edge length.
pub const DEFAULT_BINS: usize = 32;
/// Default number of transitions kept per video.
pub const DEFAULT_TOP_K: usize = 2;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("heatmap grid is empty")]
    EmptyInput,
    #[error("heatmap has zero total mass")]
    ZeroMass,
    #[error("heatmap contains a negative or non-finite cell at index {0}")]
    InvalidCell(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("at least two frames are required, got {0}")]
    InsufficientFrames(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame gap in video {video}: frame {after} is followed by {next}")]
    FrameGap { video: String, after: u64, next: u64 },
    #[error("failed to read {path}: {message}")]
    Read { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, KeyframeError>;

/// Unnormalized gaze mass on a rectangular grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<f64>,
}

impl RawGrid {
    pub fn new(width: usize, height: usize, cells: Vec<f64>) -> Result<Self> {
        if width * height != cells.len() {
            return Err(KeyframeError::Shape(format!(
                "{width}x{height} grid needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self { width, height, cells })
    }

    /// Builds a grid from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(KeyframeError::Shape("ragged rows".into()));
        }
        Self::new(width, height, rows.concat())
    }
}

/// A gaze map normalized into a probability histogram over spatial bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeHeatmap {
    width: usize,
    height: usize,
    bins: Vec<f64>,
    source_frame: String,
}

impl GazeHeatmap {
    /// Wraps an already normalized histogram, checking the distribution invariants.
    pub fn from_probabilities(
        width: usize,
        height: usize,
        bins: Vec<f64>,
        source_frame: impl Into<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || bins.is_empty() {
            return Err(KeyframeError::EmptyInput);
        }
        if width * height != bins.len() {
            return Err(KeyframeError::Shape(format!(
                "{width}x{height} histogram needs {} bins, got {}",
                width * height,
                bins.len()
            )));
        }
        if let Some(i) = bins.iter().position(|b| !b.is_finite() || *b < 0.0) {
            return Err(KeyframeError::InvalidCell(i));
        }
        let total: f64 = bins.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(KeyframeError::InvalidArgument(format!(
                "histogram sums to {total}, expected 1"
            )));
        }
        Ok(Self { width, height, bins, source_frame: source_frame.into() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn source_frame(&self) -> &str {
        &self.source_frame
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.bins[y * self.width + x]
    }

    pub fn with_source(mut self, source_frame: impl Into<String>) -> Self {
        self.source_frame = source_frame.into();
        self
    }
}

/// Pools `raw` onto a `target.0 x target.1` grid by summing blocks, then
/// divides by the total mass.
///
/// Source cell `(x, y)` lands in bin `(x * tw / w, y * th / h)`, which is an
/// exact block sum whenever the raw dimensions are multiples of the target.
pub fn normalize_heatmap(raw: &RawGrid, target: (usize, usize)) -> Result<GazeHeatmap> {
    let (tw, th) = target;
    if raw.cells.is_empty() || raw.width == 0 || raw.height == 0 {
        return Err(KeyframeError::EmptyInput);
    }
    if tw == 0 || th == 0 {
        return Err(KeyframeError::InvalidArgument("target bins must be positive".into()));
    }
    if tw > raw.width || th > raw.height {
        return Err(KeyframeError::InvalidArgument(format!(
            "cannot pool a {}x{} grid onto {tw}x{th} bins",
            raw.width, raw.height
        )));
    }
    if let Some(i) = raw.cells.iter().position(|c| !c.is_finite() || *c < 0.0) {
        return Err(KeyframeError::InvalidCell(i));
    }

    let mut bins = vec![0.0; tw * th];
    for y in 0..raw.height {
        let by = y * th / raw.height;
        for x in 0..raw.width {
            let bx = x * tw / raw.width;
            bins[by * tw + bx] += raw.cells[y * raw.width + x];
        }
    }
    let total: f64 = bins.iter().sum();
    if total <= 0.0 {
        return Err(KeyframeError::ZeroMass);
    }
    for b in &mut bins {
        *b /= total;
    }
    Ok(GazeHeatmap { width: tw, height: th, bins, source_frame: String::new() })
}

static CLAMPED_COUNT: AtomicU64 = AtomicU64::new(0);
static CLAMPED_MAX_BITS: AtomicU64 = AtomicU64::new(0);

/// Counters for negative divergences clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampStats {
    pub count: u64,
    pub max_magnitude: f64,
}

pub fn clamp_stats() -> ClampStats {
    ClampStats {
        count: CLAMPED_COUNT.load(Ordering::Relaxed),
        max_magnitude: f64::from_bits(CLAMPED_MAX_BITS.load(Ordering::Relaxed)),
    }
}

/// Smoothed divergence of `h_t1` from `h_t`, in nats:
/// `sum_i h_t(i) * ln((h_t(i) + eps) / (h_t1(i) + eps))`, clamped at zero.
pub fn kl_divergence(h_t: &GazeHeatmap, h_t1: &GazeHeatmap, epsilon: f64) -> Result<f64> {
    if h_t.width != h_t1.width || h_t.height != h_t1.height {
        return Err(KeyframeError::Shape(format!(
            "{}x{} vs {}x{}",
            h_t.width, h_t.height, h_t1.width, h_t1.height
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(KeyframeError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let kl: f64 = h_t
        .bins
        .iter()
        .zip(&h_t1.bins)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * ((p + epsilon) / (q + epsilon)).ln())
        .sum();
    if kl < 0.0 {
        let magnitude = -kl;
        CLAMPED_COUNT.fetch_add(1, Ordering::Relaxed);
        // Non-negative floats order the same as their bit patterns.
        CLAMPED_MAX_BITS.fetch_max(magnitude.to_bits(), Ordering::Relaxed);
        log::debug!("clamped negative KL divergence of magnitude {magnitude:e}");
        return Ok(0.0);
    }
    Ok(kl)
}

/// A consecutive-frame transition score; `index` is the position of the
/// earlier frame in the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredIndex {
    pub index: usize,
    pub kl_score: f64,
}

pub fn score_video_pairs(frames: &[GazeHeatmap], epsilon: f64) -> Result<Vec<ScoredIndex>> {
    if frames.len() < 2 {
        return Err(KeyframeError::InsufficientFrames(frames.len()));
    }
    frames
        .windows(2)
        .enumerate()
        .map(|(index, w)| Ok(ScoredIndex { index, kl_score: kl_divergence(&w[0], &w[1], epsilon)? }))
        .collect()
}

/// Keeps the `k` largest scores in descending order; ties go to the smaller index.
pub fn select_top_k(scored: &[ScoredIndex], k: usize) -> Result<Vec<ScoredIndex>> {
    if k == 0 {
        return Err(KeyframeError::InvalidArgument("k must be at least 1".into()));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.kl_score.total_cmp(&a.kl_score).then(a.index.cmp(&b.index)));
    sorted.truncate(k);
    Ok(sorted)
}

/// Path and content digest of an on-disk asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRef {
    pub path: String,
    pub sha256: String,
}

/// The four aligned inputs of one attention transition plus its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFramePair {
    pub video_id: String,
    pub index_t: u64,
    pub index_t1: u64,
    pub kl_score: f64,
    pub rgb_t: AssetRef,
    pub rgb_t1: AssetRef,
    pub gaze_t: AssetRef,
    pub gaze_t1: AssetRef,
}

impl ScoredFramePair {
    pub fn sample_id(&self) -> String {
        format!("{}:{}", self.video_id, self.index_t)
    }

    pub fn assets(&self) -> [(AssetSlot, &AssetRef); 4] {
        [
            (AssetSlot::RgbT, &self.rgb_t),
            (AssetSlot::GazeT, &self.gaze_t),
            (AssetSlot::RgbT1, &self.rgb_t1),
            (AssetSlot::GazeT1, &self.gaze_t1),
        ]
    }

    pub fn asset(&self, slot: AssetSlot) -> &AssetRef {
        match slot {
            AssetSlot::RgbT => &self.rgb_t,
            AssetSlot::GazeT => &self.gaze_t,
            AssetSlot::RgbT1 => &self.rgb_t1,
            AssetSlot::GazeT1 => &self.gaze_t1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetSlot {
    RgbT,
    GazeT,
    RgbT1,
    GazeT1,
}

impl AssetSlot {
    pub const ALL: [AssetSlot; 4] = [AssetSlot::RgbT, AssetSlot::GazeT, AssetSlot::RgbT1, AssetSlot::GazeT1];

    pub fn as_str(self) -> &'static str {
        match self {
            AssetSlot::RgbT => "rgb_t",
            AssetSlot::GazeT => "gaze_t",
            AssetSlot::RgbT1 => "rgb_t1",
            AssetSlot::GazeT1 => "gaze_t1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|slot| slot.as_str() == s)
    }

    pub fn is_gaze(self) -> bool {
        matches!(self, AssetSlot::GazeT | AssetSlot::GazeT1)
    }
}

/// Keyframe parameters shared by the scoring and selection stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeParams {
    pub epsilon: f64,
    pub bins: usize,
    pub top_k: usize,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, bins: DEFAULT_BINS, top_k: DEFAULT_TOP_K }
    }
}

/// Scores every video independently (in parallel) and returns results in
/// `video_id` order.
pub fn score_videos(videos: &[VideoFrames], epsilon: f64) -> Result<Vec<(String, Vec<ScoredIndex>)>> {
    use rayon::prelude::*;

    let mut order: Vec<&VideoFrames> = videos.iter().collect();
    order.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    order
        .par_iter()
        .map(|v| Ok((v.video_id.clone(), score_video_pairs(&v.heatmaps, epsilon)?)))
        .collect()
}
