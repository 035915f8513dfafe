//! Shared fixtures for the benchmarks.

use coloc_core::cue::CueMap;
use coloc_core::frame::RgbFrame;
use coloc_core::geometry::BoundingBox;
use coloc_core::pipeline::synth::synth_video;
use coloc_core::pipeline::SynthSpec;
use coloc_core::providers::{motion_sequence, spectral_saliency};

/// Frames, boxes and built-in visual and motion cues of one synthetic video.
pub struct VideoFixture {
    pub frames: Vec<RgbFrame>,
    pub boxes: Vec<BoundingBox>,
    pub visual: Vec<CueMap>,
    pub motion: Vec<CueMap>,
}

pub fn video(frames: usize) -> VideoFixture {
    let spec = SynthSpec {
        n_videos: 1,
        frames_per_video: frames,
        ..Default::default()
    };
    let (frames, boxes) = synth_video(&spec, 0).expect("synthetic video");
    let visual = frames.iter().map(|f| spectral_saliency(f).expect("saliency")).collect();
    let motion = motion_sequence(&frames).expect("motion");
    VideoFixture {
        frames,
        boxes,
        visual,
        motion,
    }
}
