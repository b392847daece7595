use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vista_core::keyframe::*;
use vista_core::synth::SyntheticVideo;

fn random_heatmap(rng: &mut impl Rng, w: usize, h: usize, sparse: bool) -> GazeHeatmap {
    let cells: Vec<f64> =
        (0..w * h).map(|_| if sparse && rng.random_bool(0.7) { 0.0 } else { rng.random::<f64>() }).collect();
    let mut raw = RawGrid::new(w, h, cells).unwrap();
    if raw.cells.iter().all(|&c| c == 0.0) {
        raw.cells[0] = 1.0;
    }
    normalize_heatmap(&raw, (w, h)).unwrap()
}

fn kl_oracle(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        total += p[i] * ((p[i] + eps) / (q[i] + eps)).ln();
    }
    if total < 0.0 {
        0.0
    } else {
        total
    }
}

#[test]
fn self_divergence_is_zero_on_1000_heatmaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let w = rng.random_range(1..=32);
        let h = rng.random_range(1..=32);
        let m = random_heatmap(&mut rng, w, h, i % 2 == 0);
        assert!(kl_divergence(&m, &m, DEFAULT_EPSILON).unwrap().abs() < 1e-12);
    }
}

#[test]
fn matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let a = random_heatmap(&mut rng, w, h, i % 3 == 0);
        let b = random_heatmap(&mut rng, w, h, i % 5 == 0);
        let got = kl_divergence(&a, &b, DEFAULT_EPSILON).unwrap();
        assert!((got - kl_oracle(a.bins(), b.bins(), DEFAULT_EPSILON)).abs() < 1e-9);
        assert!(got >= 0.0);
    }
}

#[test]
fn two_bin_hand_value() {
    let a = GazeHeatmap::from_probabilities(2, 1, vec![0.5, 0.5], "a").unwrap();
    let b = GazeHeatmap::from_probabilities(2, 1, vec![0.9, 0.1], "b").unwrap();
    assert!((kl_divergence(&a, &b, DEFAULT_EPSILON).unwrap() - 0.5108).abs() < 1e-3);
}

#[test]
fn pooling_matches_block_sum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let f = rng.random_range(1..=4);
        let (w, h) = (32 * f, 32 * f);
        let cells: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
        let raw = RawGrid::new(w, h, cells.clone()).unwrap();
        let pooled = normalize_heatmap(&raw, (32, 32)).unwrap();
        let total: f64 = cells.iter().sum();
        for by in 0..32 {
            for bx in 0..32 {
                let mut s = 0.0;
                for y in by * f..(by + 1) * f {
                    for x in bx * f..(bx + 1) * f {
                        s += cells[y * w + x];
                    }
                }
                assert!((pooled.get(bx, by) - s / total).abs() < 1e-12);
            }
        }
        assert!((pooled.bins().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn injected_jump_is_top_one_for_100_cases() {
    for case in 0..100u64 {
        let j = (case % 9) as usize;
        let seed = 1000 + case;
        let video = SyntheticVideo::new("v", 10, vec![j], seed);
        let maps: Vec<GazeHeatmap> = video
            .heatmaps()
            .iter()
            .map(|raw| normalize_heatmap(raw, (DEFAULT_BINS, DEFAULT_BINS)).unwrap())
            .collect();
        let scored = score_video_pairs(&maps, DEFAULT_EPSILON).unwrap();
        let top = select_top_k(&scored, 1).unwrap();
        assert_eq!(top[0].index, j, "case {case}: jump at {j}");
    }
}

#[test]
fn selection_from_files_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    SyntheticVideo::new("clip", 8, vec![2, 5], 77).write(tmp.path()).unwrap();
    assert_eq!(discover_videos(tmp.path()).unwrap(), ["clip"]);
    let video = load_video(tmp.path(), "clip", DEFAULT_BINS).unwrap();
    let scored = score_video_pairs(&video.heatmaps, DEFAULT_EPSILON).unwrap();
    let top = select_top_k(&scored, DEFAULT_TOP_K).unwrap();
    let mut idx: Vec<usize> = top.iter().map(|s| s.index).collect();
    idx.sort();
    assert_eq!(idx, [2, 5]);
    let pairs = video.pairs(&top).unwrap();
    assert_eq!(pairs.len(), 2);
    for p in &pairs {
        assert_eq!(p.index_t1, p.index_t + 1);
        for (_, a) in p.assets() {
            assert_eq!(a.sha256.len(), 64);
            assert!(tmp.path().join(&a.path).is_file());
        }
    }
}
