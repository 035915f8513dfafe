//! Synthetic video collections with known object boxes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{
    write_json, CuePaths, FrameEntry, GroundTruth, Manifest, Mode, VideoEntry, GROUND_TRUTH_SCHEMA_VERSION,
    MANIFEST_SCHEMA_VERSION,
};
use crate::cue::{CueKind, CueMap};
use crate::error::{Error, Result};
use crate::frame::{gaussian_blur, normalize_min_max, RgbFrame};
use crate::geometry::BoundingBox;
use crate::providers::{motion_sequence, save_cue_map, spectral_saliency};

const CHECKER_CELL: usize = 6;
const OBJECT_COLORS: [[f64; 3]; 2] = [[0.85, 0.12, 0.10], [0.95, 0.82, 0.15]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Replace the cue with one minus the built-in map.
    Invert,
    /// Replace the cue with a heavily blurred built-in map.
    Blur,
}

/// Write a damaged version of one built-in cue and reference it from the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub cue: CueKind,
    pub kind: CorruptionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub width: usize,
    pub height: usize,
    /// Object area as a fraction of the frame area.
    pub object_size: f64,
    /// Object speed in pixels per frame.
    pub motion: f64,
    /// Peak relative growth of the object's sides; the size oscillates
    /// between `1` and `1 + scale_change` times the base size.
    pub scale_change: f64,
    /// Frames per size oscillation.
    pub scale_period: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub corrupt: Option<Corruption>,
    pub label: String,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_videos: 5,
            frames_per_video: 60,
            width: 128,
            height: 96,
            object_size: 0.16,
            motion: 1.5,
            scale_change: 0.6,
            scale_period: 8.0,
            noise: 0.02,
            corrupt: None,
            label: "object".into(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.frames_per_video == 0 {
            return Err(Error::InvalidValue("video and frame counts must be positive".into()));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::FrameTooSmall {
                width: self.width,
                height: self.height,
                min: 64,
            });
        }
        if !(self.object_size > 0.0 && self.object_size < 1.0) {
            return Err(Error::InvalidValue(format!("object_size {} outside (0, 1)", self.object_size)));
        }
        if !(self.motion >= 0.0) || !(self.noise >= 0.0) || !(self.scale_change >= 0.0) {
            return Err(Error::InvalidValue("motion, scale_change and noise must be >= 0".into()));
        }
        if !(self.scale_period > 0.0) {
            return Err(Error::InvalidValue("scale_period must be positive".into()));
        }
        Ok(())
    }

    pub fn object_dims(&self) -> (usize, usize) {
        let s = self.object_size.sqrt();
        let w = ((self.width as f64 * s).round() as usize).clamp(2, self.width);
        let h = ((self.height as f64 * s).round() as usize).clamp(2, self.height);
        (w, h)
    }

    /// Object size at frame `t`, never larger than the frame.
    pub fn object_dims_at(&self, t: usize) -> (usize, usize) {
        let (ow, oh) = self.object_dims();
        let phase = std::f64::consts::TAU * t as f64 / self.scale_period;
        let s = 1.0 + self.scale_change * 0.5 * (1.0 - phase.cos());
        let w = ((ow as f64 * s).round() as usize).min(self.width);
        let h = ((oh as f64 * s).round() as usize).min(self.height);
        (w, h)
    }

    fn max_object_dims(&self) -> (usize, usize) {
        let (ow, oh) = self.object_dims();
        let s = 1.0 + self.scale_change;
        let w = ((ow as f64 * s).round() as usize).min(self.width);
        let h = ((oh as f64 * s).round() as usize).min(self.height);
        (w, h)
    }
}

/// Position on a segment of length `range`, bouncing off both ends.
fn bounce(start: f64, velocity: f64, t: f64, range: f64) -> f64 {
    if range <= 0.0 {
        return 0.0;
    }
    let p = (start + velocity * t).rem_euclid(2.0 * range);
    if p > range {
        2.0 * range - p
    } else {
        p
    }
}

/// One synthetic video: frames and the object box in each.
pub fn synth_video(spec: &SynthSpec, video: usize) -> Result<(Vec<RgbFrame>, Vec<BoundingBox>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (video as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (w, h) = (spec.width, spec.height);
    let (mw, mh) = spec.max_object_dims();

    // Smooth background far from the object's reds and yellows.
    let base = [rng.gen_range(0.15..0.45), rng.gen_range(0.35..0.65), rng.gen_range(0.45..0.8)];
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.04..0.1),
            )
        })
        .collect();
    let mut background = RgbFrame::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let mut c = base;
            for (ch, &(fx, fy, phase, amp)) in waves.iter().enumerate() {
                let arg = std::f64::consts::TAU * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64) + phase;
                c[ch] += amp * arg.sin();
            }
            background.set(x, y, c);
        }
    }

    // The largest box bounces; smaller ones stay centered inside it.
    let (rx, ry) = ((w - mw) as f64, (h - mh) as f64);
    let (sx, sy) = (rng.gen_range(0.0..=rx), rng.gen_range(0.0..=ry));
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (vx, vy) = (spec.motion * angle.cos(), spec.motion * angle.sin());
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidValue(e.to_string()))?;

    let mut frames = Vec::with_capacity(spec.frames_per_video);
    let mut boxes = Vec::with_capacity(spec.frames_per_video);
    for t in 0..spec.frames_per_video {
        let (ow, oh) = spec.object_dims_at(t);
        let x0 = bounce(sx, vx, t as f64, rx).round() as usize + (mw - ow) / 2;
        let y0 = bounce(sy, vy, t as f64, ry).round() as usize + (mh - oh) / 2;
        let mut f = background.clone();
        for y in 0..oh {
            for x in 0..ow {
                let cell = (x / CHECKER_CELL + y / CHECKER_CELL) % 2;
                f.set(x0 + x, y0 + y, OBJECT_COLORS[cell]);
            }
        }
        if spec.noise > 0.0 {
            for p in f.pixels_mut() {
                for c in p.iter_mut() {
                    *c = (*c + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
        }
        // Quantize as the saved PNG will.
        frames.push(RgbFrame::from_rgb8(&f.to_rgb8()));
        boxes.push(BoundingBox::new(y0, y0 + oh - 1, x0, x0 + ow - 1)?);
    }
    Ok((frames, boxes))
}

fn corrupt_maps(frames: &[RgbFrame], corruption: Corruption) -> Result<Vec<CueMap>> {
    let clean: Vec<CueMap> = match corruption.cue {
        CueKind::Visual => frames.iter().map(spectral_saliency).collect::<Result<_>>()?,
        CueKind::Motion => motion_sequence(frames)?,
        CueKind::Cosaliency => {
            return Err(Error::InvalidValue("co-saliency cannot be corrupted at generation time".into()))
        }
    };
    clean
        .into_iter()
        .map(|m| {
            let (w, h) = m.dims();
            let values = match corruption.kind {
                CorruptionKind::Invert => m.values().iter().map(|v| 1.0 - v).collect(),
                CorruptionKind::Blur => {
                    let mut v = gaussian_blur(m.values(), w, h, 0.25 * w.min(h) as f64);
                    normalize_min_max(&mut v);
                    v
                }
            };
            CueMap::from_clamped(w, h, values, corruption.cue)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub ground_truth_path: PathBuf,
    /// Manifest with paths relative to its own directory.
    pub manifest: Manifest,
    pub ground_truth: GroundTruth,
}

/// Write frames, manifest, ground truth and any corrupted cue files under `out`.
pub fn synth_dataset(spec: &SynthSpec, out: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut gt = BTreeMap::new();
    for v in 0..spec.n_videos {
        let video_id = format!("v{v}");
        let (frames, boxes) = synth_video(spec, v)?;
        let frame_dir = out.join("frames").join(&video_id);
        fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        let corrupted = spec.corrupt.map(|c| corrupt_maps(&frames, c)).transpose()?;
        let mut entries = Vec::with_capacity(frames.len());
        let mut video_gt = BTreeMap::new();
        for (j, (f, b)) in frames.iter().zip(&boxes).enumerate() {
            let frame_id = format!("f{j:03}");
            let rel = PathBuf::from("frames").join(&video_id).join(format!("{frame_id}.png"));
            f.save_png(&out.join(&rel))?;
            let mut cues = CuePaths::default();
            if let (Some(maps), Some(c)) = (&corrupted, spec.corrupt) {
                let rel_cue = PathBuf::from("cues").join(&video_id).join(format!("{frame_id}_{}.bin", c.cue.name()));
                let path = out.join(&rel_cue);
                fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
                save_cue_map(&maps[j], &path)?;
                match c.cue {
                    CueKind::Visual => cues.visual = Some(rel_cue),
                    CueKind::Motion => cues.motion = Some(rel_cue),
                    CueKind::Cosaliency => unreachable!(),
                }
            }
            video_gt.insert(frame_id.clone(), *b);
            entries.push(FrameEntry {
                frame_id: Some(frame_id),
                frame_path: rel,
                cues,
                ground_truth: Some(*b),
            });
        }
        gt.insert(video_id.clone(), video_gt);
        videos.push(VideoEntry {
            video_id,
            label: Some(spec.label.clone()),
            frames: entries,
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        mode: Mode::WeaklySupervised,
        videos,
    };
    let ground_truth = GroundTruth {
        schema_version: GROUND_TRUTH_SCHEMA_VERSION,
        videos: gt,
    };
    let manifest_path = out.join("manifest.json");
    let ground_truth_path = out.join("ground_truth.json");
    write_json(&manifest_path, &manifest)?;
    write_json(&ground_truth_path, &ground_truth)?;
    Ok(SynthOutput {
        manifest_path,
        ground_truth_path,
        manifest,
        ground_truth,
    })
}
