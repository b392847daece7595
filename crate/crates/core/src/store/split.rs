use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Manifest, Split, StoreError, StoreResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Earliest-first subset of `sizes` (restricted to `available`) summing to
/// exactly `target`.
fn pick_exact(sizes: &[usize], available: &[bool], target: usize) -> Option<Vec<usize>> {
    let n = sizes.len();
    // reach[i][s]: groups i.. can form sum s
    let mut reach = vec![vec![false; target + 1]; n + 1];
    reach[n][0] = true;
    for i in (0..n).rev() {
        for s in 0..=target {
            reach[i][s] = reach[i + 1][s] || (available[i] && sizes[i] <= s && reach[i + 1][s - sizes[i]]);
        }
    }
    if !reach[0][target] {
        return None;
    }
    let mut picked = Vec::new();
    let mut rem = target;
    for i in 0..n {
        if rem == 0 {
            break;
        }
        if available[i] && sizes[i] <= rem && reach[i + 1][rem - sizes[i]] {
            picked.push(i);
            rem -= sizes[i];
        }
    }
    Some(picked)
}

/// Seeded video-level assignment: videos are shuffled, then whole videos are
/// taken in shuffled order to fill train, val and test exactly.
pub fn plan_split(manifest: &Manifest, counts: SplitCounts, seed: u64) -> StoreResult<Vec<(String, Split)>> {
    let unassigned: Vec<_> = manifest.records.iter().filter(|r| r.split == Split::Unassigned).collect();
    if counts.total() > unassigned.len() {
        return Err(StoreError::InsufficientSamples { requested: counts.total(), available: unassigned.len() });
    }
    let mut by_video: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &unassigned {
        by_video.entry(r.pair.video_id.as_str()).or_default().push(r.sample_id.as_str());
    }
    for r in &manifest.records {
        if r.split != Split::Unassigned && by_video.contains_key(r.pair.video_id.as_str()) {
            return Err(StoreError::UnsatisfiableSplit(format!(
                "video {} already has records in {}",
                r.pair.video_id,
                r.split.as_str()
            )));
        }
    }
    let mut groups: Vec<(&str, Vec<&str>)> = by_video.into_iter().collect();
    groups.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let sizes: Vec<usize> = groups.iter().map(|(_, ids)| ids.len()).collect();
    let mut available = vec![true; groups.len()];
    let mut split_of: Vec<Option<Split>> = vec![None; groups.len()];
    for (split, target) in [(Split::Train, counts.train), (Split::Val, counts.val), (Split::Test, counts.test)] {
        let picked = pick_exact(&sizes, &available, target).ok_or_else(|| {
            StoreError::UnsatisfiableSplit(format!("cannot fill {} with exactly {target} samples", split.as_str()))
        })?;
        for i in picked {
            available[i] = false;
            split_of[i] = Some(split);
        }
    }
    let mut assign: BTreeMap<&str, Split> = BTreeMap::new();
    for (g, split) in groups.iter().zip(&split_of) {
        if let Some(s) = split {
            for id in &g.1 {
                assign.insert(id, *s);
            }
        }
    }
    Ok(manifest
        .records
        .iter()
        .filter_map(|r| assign.get(r.sample_id.as_str()).map(|s| (r.sample_id.clone(), *s)))
        .collect())
}
