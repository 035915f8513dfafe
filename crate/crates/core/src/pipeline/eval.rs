//! CorLoc evaluation of written results against ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::manifest::Manifest;
use super::run::{video_result_path, VideoResult};
use crate::error::Result;
use crate::geometry::{iou, BoundingBox};

/// A prediction counts as correct when its IoU with the ground truth exceeds this.
pub const CORLOC_IOU: f64 = 0.5;

/// Fraction of annotated frames localized correctly; a missing prediction
/// is a miss. Returns 0 when there are no annotated frames.
pub fn corloc(pairs: &[(Option<BoundingBox>, BoundingBox)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|(p, gt)| p.is_some_and(|p| iou(&p, gt) > CORLOC_IOU))
        .count();
    hits as f64 / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScore {
    pub annotated_frames: usize,
    pub correct_frames: usize,
    pub corloc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorLocReport {
    pub categories: BTreeMap<String, CategoryScore>,
    /// Mean of the per-category scores.
    pub average: f64,
    /// Pooled over every annotated frame.
    pub overall: f64,
    pub missing_videos: Vec<String>,
}

/// Score in-memory results against the manifest's ground truth.
pub fn evaluate_results(manifest: &Manifest, results: &[VideoResult]) -> CorLocReport {
    let by_id: BTreeMap<&str, &VideoResult> = results.iter().map(|r| (r.video_id.as_str(), r)).collect();
    let mut pairs: BTreeMap<String, Vec<(Option<BoundingBox>, BoundingBox)>> = BTreeMap::new();
    let mut missing_videos = Vec::new();
    for v in &manifest.videos {
        let result = by_id.get(v.video_id.as_str());
        if result.is_none() {
            missing_videos.push(v.video_id.clone());
        }
        let predicted: BTreeMap<&str, BoundingBox> = result
            .map(|r| r.frames.iter().map(|f| (f.frame_id.as_str(), f.bbox)).collect())
            .unwrap_or_default();
        for (i, f) in v.frames.iter().enumerate() {
            if let Some(gt) = f.ground_truth {
                let id = v.frame_id(i);
                pairs
                    .entry(v.category().to_string())
                    .or_default()
                    .push((predicted.get(id.as_str()).copied(), gt));
            }
        }
    }
    let mut categories = BTreeMap::new();
    let mut all = Vec::new();
    for (cat, p) in pairs {
        let score = corloc(&p);
        categories.insert(
            cat,
            CategoryScore {
                annotated_frames: p.len(),
                correct_frames: (score * p.len() as f64).round() as usize,
                corloc: score,
            },
        );
        all.extend(p);
    }
    let average = if categories.is_empty() {
        0.0
    } else {
        categories.values().map(|c| c.corloc).sum::<f64>() / categories.len() as f64
    };
    CorLocReport {
        categories,
        average,
        overall: corloc(&all),
        missing_videos,
    }
}

/// Read `videos/<id>.json` under `results_dir` for every manifest video and score them.
pub fn evaluate(results_dir: &Path, manifest: &Manifest) -> Result<CorLocReport> {
    let mut results = Vec::new();
    for v in &manifest.videos {
        let path = video_result_path(results_dir, &v.video_id);
        if path.exists() {
            results.push(VideoResult::load(&path)?);
        }
    }
    Ok(evaluate_results(manifest, &results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(t: usize, b: usize, l: usize, r: usize) -> BoundingBox {
        BoundingBox::new(t, b, l, r).unwrap()
    }

    #[test]
    fn perfect() {
        let b = bb(0, 10, 0, 10);
        assert_eq!(corloc(&[(Some(b), b), (Some(b), b)]), 1.0);
    }

    #[test]
    fn half_iou_is_a_miss() {
        // 100 vs 50 inside it: IoU 0.5.
        assert_eq!(iou(&bb(0, 10, 0, 10), &bb(0, 10, 0, 5)), 0.5);
        assert_eq!(corloc(&[(Some(bb(0, 10, 0, 5)), bb(0, 10, 0, 10))]), 0.0);
    }

    #[test]
    fn counting_and_missing() {
        let b = bb(0, 10, 0, 10);
        let far = bb(20, 30, 20, 30);
        assert_eq!(corloc(&[(Some(b), b), (Some(b), b), (Some(b), b), (Some(far), b)]), 0.75);
        assert_eq!(corloc(&[(None, b), (Some(b), b)]), 0.5);
    }
}
