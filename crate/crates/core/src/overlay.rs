//! Gaze-over-frame composites for human review.

use image::{imageops, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use std::path::Path;

use crate::keyframe::{load_heatmap, KeyframeError, RawGrid};

#[derive(Debug, thiserror::Error)]
pub enum OverlayError {
    #[error("cannot read frame {path}: {message}")]
    Frame { path: String, message: String },
    #[error(transparent)]
    Heatmap(#[from] KeyframeError),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// Heatmap layer opacity.
pub const OVERLAY_OPACITY: f64 = 0.4;

/// Blue-cyan-yellow-red ramp for `v` in `[0, 1]`.
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let stops: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 128.0]),
        (0.25, [0.0, 128.0, 255.0]),
        (0.5, [0.0, 255.0, 128.0]),
        (0.75, [255.0, 255.0, 0.0]),
        (1.0, [255.0, 0.0, 0.0]),
    ];
    for w in stops.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if v <= t1 {
            let f = (v - t0) / (t1 - t0);
            return [0, 1, 2].map(|i| (c0[i] + f * (c1[i] - c0[i])).round() as u8);
        }
    }
    [255, 0, 0]
}

fn grid_to_gray(grid: &RawGrid) -> GrayImage {
    let max = grid.cells.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    ImageBuffer::from_fn(grid.width as u32, grid.height as u32, |x, y| {
        Luma([(grid.cells[y as usize * grid.width + x as usize] * scale).round() as u8])
    })
}

/// Blends the colormapped heatmap over `rgb`; the heatmap is resized to the frame.
pub fn render_overlay(rgb: &RgbImage, heat: &RawGrid) -> RgbImage {
    let gray = grid_to_gray(heat);
    let resized = imageops::resize(&gray, rgb.width(), rgb.height(), imageops::FilterType::Triangle);
    ImageBuffer::from_fn(rgb.width(), rgb.height(), |x, y| {
        let base = rgb.get_pixel(x, y).0;
        let c = colormap(resized.get_pixel(x, y).0[0] as f64 / 255.0);
        Rgb([0, 1, 2].map(|i| {
            ((1.0 - OVERLAY_OPACITY) * base[i] as f64 + OVERLAY_OPACITY * c[i] as f64).round() as u8
        }))
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// PNG bytes for a frame; PNG inputs are passed through unchanged.
pub fn frame_png(path: &Path) -> Result<Vec<u8>, OverlayError> {
    let frame_err = |message: String| OverlayError::Frame { path: path.display().to_string(), message };
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        return std::fs::read(path).map_err(|e| frame_err(e.to_string()));
    }
    let img = image::open(path).map_err(|e| frame_err(e.to_string()))?.to_rgb8();
    encode_png(&img).map_err(|e| OverlayError::Encode(e.to_string()))
}

/// Composite of the frame at `rgb_path` with the heatmap at `gaze_path`, as PNG.
pub fn overlay_png(rgb_path: &Path, gaze_path: &Path) -> Result<Vec<u8>, OverlayError> {
    let rgb = image::open(rgb_path)
        .map_err(|e| OverlayError::Frame { path: rgb_path.display().to_string(), message: e.to_string() })?
        .to_rgb8();
    let heat = load_heatmap(gaze_path)?;
    encode_png(&render_overlay(&rgb, &heat)).map_err(|e| OverlayError::Encode(e.to_string()))
}
