#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeDelta, Utc};
use vista_core::caption::parse_caption;
use vista_core::clock::{Clock, FixedClock};
use vista_core::keyframe::{load_video, score_video_pairs, select_top_k, ScoredFramePair, DEFAULT_BINS, DEFAULT_EPSILON};
use vista_core::store::Store;
use vista_core::synth::SyntheticVideo;

pub const DRAFT: &str = "A car waits at a busy junction. The driver is looking at the traffic light. \
The driver will check the pedestrian on the left next. The pedestrian may step into the road.";

pub const EDIT: &str = "A car waits at a busy junction in rain. The driver is looking at the red traffic light. \
The driver will check the pedestrian at the curb next. The pedestrian is close to the road.";

/// Clock that tests can move forward.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new() -> Arc<Self> {
        Arc::new(Self(Mutex::new(FixedClock::epoch().0)))
    }

    pub fn advance_minutes(&self, m: i64) {
        *self.0.lock().unwrap() += TimeDelta::minutes(m);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

/// Two selected transitions per synthetic video.
pub fn synth_pairs(root: &Path, videos: usize) -> Vec<ScoredFramePair> {
    let mut pairs = Vec::new();
    for v in 0..videos {
        let id = format!("vid{v}");
        SyntheticVideo::new(&id, 6, vec![1, 3], 40 + v as u64).write(root).unwrap();
        let video = load_video(root, &id, DEFAULT_BINS).unwrap();
        let scored = score_video_pairs(&video.heatmaps, DEFAULT_EPSILON).unwrap();
        pairs.extend(video.pairs(&select_top_k(&scored, 2).unwrap()).unwrap());
    }
    pairs
}

/// Store holding `n` samples, each with a parsed draft.
pub fn store_with_drafts(dir: &Path, n: usize, clock: Arc<dyn Clock>) -> Store {
    let assets = dir.join("assets");
    let pairs = synth_pairs(&assets, n.div_ceil(2));
    let mut store = Store::create(
        &dir.join("store"),
        "gazetteer",
        assets.to_str().unwrap(),
        serde_json::json!({}),
        clock,
    )
    .unwrap();
    store.ingest_samples(&pairs[..n]).unwrap();
    let ids: Vec<String> = store.manifest().records.iter().map(|r| r.sample_id.clone()).collect();
    for id in ids {
        store.record_draft(parse_caption(DRAFT, &id).unwrap().caption, "replay").unwrap();
    }
    store
}

pub fn sample_ids(store: &Store) -> Vec<String> {
    store.manifest().records.iter().map(|r| r.sample_id.clone()).collect()
}
