#![allow(dead_code)]

use std::fs;
use std::path::Path;

use vista_core::digest::sha256_hex;
use vista_core::keyframe::{AssetRef, ScoredFramePair};

fn asset(root: &Path, rel: &str) -> AssetRef {
    let bytes = format!("asset {rel}").into_bytes();
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(&path, &bytes).unwrap();
    AssetRef { path: rel.to_string(), sha256: sha256_hex(&bytes) }
}

/// Pairs with placeholder asset files; `videos` lists (video_id, pair count).
pub fn fake_pairs(root: &Path, videos: &[(&str, usize)]) -> Vec<ScoredFramePair> {
    let mut out = Vec::new();
    for (vid, n) in videos {
        for p in 0..*n {
            let t = (p * 2) as u64;
            out.push(ScoredFramePair {
                video_id: vid.to_string(),
                index_t: t,
                index_t1: t + 1,
                kl_score: 1.0 / (p as f64 + 1.0),
                rgb_t: asset(root, &format!("{vid}/rgb/{t:04}.png")),
                rgb_t1: asset(root, &format!("{vid}/rgb/{:04}.png", t + 1)),
                gaze_t: asset(root, &format!("{vid}/gaze/{t:04}.png")),
                gaze_t1: asset(root, &format!("{vid}/gaze/{:04}.png", t + 1)),
            });
        }
    }
    out
}

pub const CAPTION: &str = "A city street with parked cars. The driver is looking at the traffic light. \
The driver will look at the pedestrian next. The pedestrian is about to cross.";

pub fn caption_variant(i: usize) -> String {
    format!(
        "A city street with {i} parked cars. The driver is looking at the traffic light. \
The driver will look at the pedestrian next. The pedestrian is about to cross."
    )
}
