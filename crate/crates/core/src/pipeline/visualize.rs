//! Box overlays on result frames.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use log::warn;

use super::run::VideoResult;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const PREDICTION_COLOR: [u8; 3] = [255, 0, 0];
pub const GROUND_TRUTH_COLOR: [u8; 3] = [0, 255, 0];
pub const LINE_WIDTH: usize = 2;

/// Draw the outline of `b`, `thickness` pixels wide and inside the box,
/// clipped to the image.
pub fn draw_box(img: &mut RgbImage, b: &BoundingBox, color: [u8; 3], thickness: usize) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if b.top >= h || b.left >= w {
        return;
    }
    let bottom = b.bottom.min(h - 1);
    let right = b.right.min(w - 1);
    for y in b.top..=bottom {
        for x in b.left..=right {
            let on_edge = y < b.top + thickness
                || y + thickness > b.bottom
                || x < b.left + thickness
                || x + thickness > b.right;
            if on_edge {
                img.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VisualizeSummary {
    pub written: usize,
    pub skipped: usize,
}

/// Overlay predicted (red) and ground-truth (green) boxes for every result
/// file in `results_dir/videos`, writing `out/<video_id>/<frame_id>.png`.
pub fn visualize(results_dir: &Path, out: &Path) -> Result<VisualizeSummary> {
    let dir = results_dir.join("videos");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut summary = VisualizeSummary::default();
    for file in files {
        let result = VideoResult::load(&file)?;
        let video_dir = out.join(&result.video_id);
        fs::create_dir_all(&video_dir).map_err(|e| Error::io(&video_dir, e))?;
        for f in &result.frames {
            let mut img = match image::open(&f.frame_path) {
                Ok(i) => i.to_rgb8(),
                Err(e) => {
                    warn!("skipping {}: {e}", f.frame_path);
                    summary.skipped += 1;
                    continue;
                }
            };
            if let Some(gt) = &f.ground_truth {
                draw_box(&mut img, gt, GROUND_TRUTH_COLOR, LINE_WIDTH);
            }
            draw_box(&mut img, &f.bbox, PREDICTION_COLOR, LINE_WIDTH);
            let path = video_dir.join(format!("{}.png", f.frame_id));
            img.save(&path).map_err(|source| Error::Image { path, source })?;
            summary.written += 1;
        }
    }
    Ok(summary)
}
