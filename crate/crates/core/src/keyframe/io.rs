use std::fs;
use std::path::{Path, PathBuf};

use super::{
    normalize_heatmap, AssetRef, GazeHeatmap, KeyframeError, RawGrid, Result, ScoredFramePair,
    ScoredIndex,
};
use crate::digest::sha256_file;

/// Reads an unnormalized heatmap. `.txt`/`.grid` files hold rows of
/// whitespace-separated reals; anything else is decoded as an image and
/// converted to 8-bit grayscale.
pub fn load_heatmap(path: &Path) -> Result<RawGrid> {
    let read_err = |message: String| KeyframeError::Read { path: path.display().to_string(), message };
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "txt" | "grid" => {
            let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
            let mut rows = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let row = line
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| read_err(format!("line {}: {e}", n + 1)))?;
                rows.push(row);
            }
            RawGrid::from_rows(&rows)
        }
        _ => {
            let img = image::open(path).map_err(|e| read_err(e.to_string()))?.to_luma8();
            let (w, h) = img.dimensions();
            let cells = img.into_raw().into_iter().map(f64::from).collect();
            RawGrid::new(w as usize, h as usize, cells)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameAssets {
    pub index: u64,
    pub rgb: PathBuf,
    pub gaze: PathBuf,
}

/// One video's frames with their pooled heatmaps, in frame order.
#[derive(Debug, Clone)]
pub struct VideoFrames {
    pub video_id: String,
    pub root: PathBuf,
    pub frames: Vec<FrameAssets>,
    pub heatmaps: Vec<GazeHeatmap>,
}

fn frame_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let read_err = |message: String| KeyframeError::Read { path: dir.display().to_string(), message };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| read_err(e.to_string()))? {
        let path = entry.map_err(|e| read_err(e.to_string()))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(index) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        out.push((index, path));
    }
    out.sort();
    Ok(out)
}

/// Loads `<root>/<video_id>/{rgb,gaze}/<frame>.*`. Frames must be numbered
/// consecutively and every gaze map must carry mass.
pub fn load_video(root: &Path, video_id: &str, bins: usize) -> Result<VideoFrames> {
    let dir = root.join(video_id);
    let gaze = frame_files(&dir.join("gaze"))?;
    let rgb = frame_files(&dir.join("rgb"))?;
    let mut frames = Vec::with_capacity(gaze.len());
    let mut heatmaps = Vec::with_capacity(gaze.len());
    for (index, gaze_path) in gaze {
        let rgb_path = rgb
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| KeyframeError::Read {
                path: dir.join("rgb").display().to_string(),
                message: format!("no RGB frame for gaze frame {index}"),
            })?;
        if let Some(prev) = frames.last().map(|f: &FrameAssets| f.index) {
            if index != prev + 1 {
                return Err(KeyframeError::FrameGap { video: video_id.to_string(), after: prev, next: index });
            }
        }
        let raw = load_heatmap(&gaze_path)?;
        let heatmap = normalize_heatmap(&raw, (bins, bins)).map_err(|e| match e {
            KeyframeError::ZeroMass => KeyframeError::Read {
                path: gaze_path.display().to_string(),
                message: "gaze map has zero mass".into(),
            },
            other => other,
        })?;
        heatmaps.push(heatmap.with_source(format!("{video_id}:{index}")));
        frames.push(FrameAssets { index, rgb: rgb_path, gaze: gaze_path });
    }
    Ok(VideoFrames { video_id: video_id.to_string(), root: root.to_path_buf(), frames, heatmaps })
}

/// Lists video directories under `root` in name order.
pub fn discover_videos(root: &Path) -> Result<Vec<String>> {
    let read_err = |message: String| KeyframeError::Read { path: root.display().to_string(), message };
    let mut ids = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| read_err(e.to_string()))? {
        let entry = entry.map_err(|e| read_err(e.to_string()))?;
        if entry.path().join("gaze").is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

impl VideoFrames {
    fn asset_ref(&self, path: &Path) -> Result<AssetRef> {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        let sha256 = sha256_file(path).map_err(|e| KeyframeError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(AssetRef { path: rel.to_string_lossy().replace('\\', "/"), sha256 })
    }

    /// Materializes scored transitions as frame pairs with asset digests.
    pub fn pairs(&self, selected: &[ScoredIndex]) -> Result<Vec<ScoredFramePair>> {
        selected
            .iter()
            .map(|s| {
                let (a, b) = (&self.frames[s.index], &self.frames[s.index + 1]);
                Ok(ScoredFramePair {
                    video_id: self.video_id.clone(),
                    index_t: a.index,
                    index_t1: b.index,
                    kl_score: s.kl_score,
                    rgb_t: self.asset_ref(&a.rgb)?,
                    rgb_t1: self.asset_ref(&b.rgb)?,
                    gaze_t: self.asset_ref(&a.gaze)?,
                    gaze_t1: self.asset_ref(&b.gaze)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_grid_parses_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        fs::write(&p, "# comment\n1 2\n3 4\n").unwrap();
        let g = load_heatmap(&p).unwrap();
        assert_eq!((g.width, g.height), (2, 2));
        assert_eq!(g.cells, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn png_grid_reads_gray_levels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = image::GrayImage::from_raw(2, 1, vec![10, 200]).unwrap();
        img.save(&p).unwrap();
        let g = load_heatmap(&p).unwrap();
        assert_eq!(g.cells, vec![10.0, 200.0]);
    }
}
