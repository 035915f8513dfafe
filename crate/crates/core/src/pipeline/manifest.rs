//! Dataset manifest and ground-truth files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cue::CueKind;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const GROUND_TRUTH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One hierarchy per video label.
    WeaklySupervised,
    /// One hierarchy over every video.
    Unsupervised,
}

/// Optional precomputed cue maps for a frame; missing kinds are computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CuePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosaliency: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<PathBuf>,
}

impl CuePaths {
    pub fn get(&self, kind: CueKind) -> Option<&PathBuf> {
        match kind {
            CueKind::Cosaliency => self.cosaliency.as_ref(),
            CueKind::Visual => self.visual.as_ref(),
            CueKind::Motion => self.motion.as_ref(),
        }
    }

    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        [&mut self.cosaliency, &mut self.visual, &mut self.motion]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<String>,
    pub frame_path: PathBuf,
    #[serde(default, skip_serializing_if = "is_default")]
    pub cues: CuePaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<BoundingBox>,
}

fn is_default(c: &CuePaths) -> bool {
    *c == CuePaths::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub frames: Vec<FrameEntry>,
}

impl VideoEntry {
    /// Frame identifier, defaulting to the zero-padded index.
    pub fn frame_id(&self, index: usize) -> String {
        self.frames[index]
            .frame_id
            .clone()
            .unwrap_or_else(|| format!("{index:05}"))
    }

    pub fn category(&self) -> &str {
        self.label.as_deref().unwrap_or("unlabeled")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub mode: Mode,
    pub videos: Vec<VideoEntry>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.videos.is_empty() {
            return Err(Error::Manifest("no videos".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.videos {
            if !valid_id(&v.video_id) {
                return Err(Error::Manifest(format!("invalid video_id {:?}", v.video_id)));
            }
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate video_id {:?}", v.video_id)));
            }
            if v.frames.is_empty() {
                return Err(Error::Manifest(format!("video {:?} has no frames", v.video_id)));
            }
            let mut ids = std::collections::BTreeSet::new();
            for i in 0..v.frames.len() {
                let id = v.frame_id(i);
                if !valid_id(&id) {
                    return Err(Error::Manifest(format!("invalid frame_id {id:?} in {:?}", v.video_id)));
                }
                if !ids.insert(id.clone()) {
                    return Err(Error::Manifest(format!("duplicate frame_id {id:?} in {:?}", v.video_id)));
                }
                if let Some(b) = &v.frames[i].ground_truth {
                    BoundingBox::new(b.top, b.bottom, b.left, b.right)
                        .map_err(|e| Error::Manifest(format!("frame {id:?} of {:?}: {e}", v.video_id)))?;
                }
            }
        }
        Ok(())
    }

    /// Reads and validates a manifest; relative paths are resolved against
    /// the manifest's directory.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut m.videos {
            for f in &mut v.frames {
                f.frame_path = base.join(&f.frame_path);
                for p in f.cues.paths_mut() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Groups of video indices that share a hierarchy.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        match self.mode {
            Mode::Unsupervised => vec![("all".to_string(), (0..self.videos.len()).collect())],
            Mode::WeaklySupervised => {
                let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                for (i, v) in self.videos.iter().enumerate() {
                    let key = match &v.label {
                        Some(l) => format!("label-{l}"),
                        None => format!("video-{}", v.video_id),
                    };
                    groups.entry(key).or_default().push(i);
                }
                groups.into_iter().collect()
            }
        }
    }

    /// Replace ground truth with the boxes in `gt` where present.
    pub fn apply_ground_truth(&mut self, gt: &GroundTruth) {
        for v in &mut self.videos {
            if let Some(boxes) = gt.videos.get(&v.video_id) {
                for i in 0..v.frames.len() {
                    if let Some(b) = boxes.get(&v.frame_id(i)) {
                        v.frames[i].ground_truth = Some(*b);
                    }
                }
            }
        }
    }
}

/// Boxes keyed by video id, then frame id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub videos: BTreeMap<String, BTreeMap<String, BoundingBox>>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<GroundTruth> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: GroundTruth = serde_json::from_str(&text)?;
        if gt.schema_version != GROUND_TRUTH_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported ground-truth schema_version {}",
                gt.schema_version
            )));
        }
        Ok(gt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
