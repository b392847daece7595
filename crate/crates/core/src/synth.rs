//! Synthetic frame/gaze asset trees for tests and demos.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::keyframe::RawGrid;

/// Isotropic Gaussian blob on a `w x h` grid with a small positive floor.
pub fn gaze_blob(w: usize, h: usize, cx: f64, cy: f64, sigma: f64) -> RawGrid {
    let mut cells = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            cells.push((-d2 / (2.0 * sigma * sigma)).exp() + 1e-3);
        }
    }
    RawGrid::new(w, h, cells).expect("dimensions match")
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub frames: usize,
    /// Frame indices `j` where the gaze jumps between `j` and `j + 1`.
    pub jumps: Vec<usize>,
    pub seed: u64,
    pub size: u32,
}

impl SyntheticVideo {
    pub fn new(video_id: impl Into<String>, frames: usize, jumps: Vec<usize>, seed: u64) -> Self {
        Self { video_id: video_id.into(), frames, jumps, seed, size: 64 }
    }

    /// Gaze centres per frame: small drift, large displacement at each jump.
    pub fn centres(&self) -> Vec<(f64, f64)> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let s = self.size as f64;
        let mut c = (rng.random_range(0.3..0.7) * s, rng.random_range(0.3..0.7) * s);
        let mut out = vec![c];
        for j in 0..self.frames.saturating_sub(1) {
            if self.jumps.contains(&j) {
                // move to the opposite half of the frame
                c = (s - c.0, (c.1 + 0.45 * s) % s);
                c = (c.0.clamp(0.15 * s, 0.85 * s), c.1.clamp(0.15 * s, 0.85 * s));
            } else {
                c = (
                    (c.0 + rng.random_range(-0.4..0.4)).clamp(0.1 * s, 0.9 * s),
                    (c.1 + rng.random_range(-0.4..0.4)).clamp(0.1 * s, 0.9 * s),
                );
            }
            out.push(c);
        }
        out
    }

    pub fn heatmaps(&self) -> Vec<RawGrid> {
        let n = self.size as usize;
        self.centres().into_iter().map(|(x, y)| gaze_blob(n, n, x, y, n as f64 / 10.0)).collect()
    }

    /// Writes `<root>/<video>/rgb/NNNN.png` and `<root>/<video>/gaze/NNNN.png`.
    pub fn write(&self, root: &Path) -> std::io::Result<()> {
        let dir = root.join(&self.video_id);
        fs::create_dir_all(dir.join("rgb"))?;
        fs::create_dir_all(dir.join("gaze"))?;
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x5eed);
        let base: [u8; 3] = [rng.random_range(40..120), rng.random_range(40..120), rng.random_range(40..120)];
        for (i, (heat, (cx, cy))) in self.heatmaps().iter().zip(self.centres()).enumerate() {
            let max = heat.cells.iter().copied().fold(0.0, f64::max);
            let gray = GrayImage::from_fn(self.size, self.size, |x, y| {
                let v = heat.cells[y as usize * heat.width + x as usize] / max;
                Luma([(v * 254.0).round() as u8 + 1])
            });
            let rgb = RgbImage::from_fn(self.size, self.size, |x, y| {
                let near = (x as f64 - cx).abs() < 4.0 && (y as f64 - cy).abs() < 4.0;
                if near {
                    Rgb([220, 40, 40])
                } else {
                    let shade = ((x + y + i as u32) % 32) as u8;
                    Rgb([base[0] + shade, base[1] + shade / 2, base[2]])
                }
            });
            let name = format!("{i:04}.png");
            gray.save(dir.join("gaze").join(&name)).map_err(std::io::Error::other)?;
            rgb.save(dir.join("rgb").join(&name)).map_err(std::io::Error::other)?;
        }
        Ok(())
    }
}
