use serde::{Deserialize, Serialize};

use crate::cosaliency::hierarchy::DEFAULT_MIN_SIZE;
use crate::cue::CueKind;
use crate::error::{Error, Result};
use crate::gmm::{DEFAULT_COMPONENTS, DEFAULT_GAMMA};
use crate::localization::DEFAULT_LAMBDA;
use crate::proposals::{DEFAULT_MAX_PROPOSALS, DEFAULT_MAX_SAMPLES};

/// Units used for link lengths between boxes of consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkUnits {
    /// Row offsets divided by frame height, column offsets by frame width.
    FrameRelative,
    Pixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    pub n_components: usize,
    /// Process every n-th frame; the others get interpolated boxes.
    pub frame_sampling_stride: usize,
    pub hierarchy_min_size: usize,
    /// Defaults to twice the ground-level descriptor variance.
    pub var_threshold: Option<f64>,
    pub seed: u64,
    pub gamma: f64,
    pub max_samples: usize,
    pub max_proposals: usize,
    pub link_units: LinkUnits,
    pub cues: Vec<CueKind>,
    /// Also write masks and co-saliency maps.
    pub save_intermediates: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: DEFAULT_LAMBDA,
            n_components: DEFAULT_COMPONENTS,
            frame_sampling_stride: 1,
            hierarchy_min_size: DEFAULT_MIN_SIZE,
            var_threshold: None,
            seed: 0,
            gamma: DEFAULT_GAMMA,
            max_samples: DEFAULT_MAX_SAMPLES,
            max_proposals: DEFAULT_MAX_PROPOSALS,
            link_units: LinkUnits::FrameRelative,
            cues: CueKind::ALL.to_vec(),
            save_intermediates: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.n_components == 0 {
            return bad("n_components must be >= 1".into());
        }
        if self.frame_sampling_stride == 0 {
            return bad("frame_sampling_stride must be >= 1".into());
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.max_samples == 0 {
            return bad("max_samples must be >= 1".into());
        }
        if self.cues.is_empty() {
            return bad("at least one cue is required".into());
        }
        let mut seen = self.cues.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.cues.len() {
            return bad("duplicate cue kinds".into());
        }
        Ok(())
    }
}
