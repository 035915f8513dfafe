//! Manifest-driven batch processing, evaluation, synthetic data and overlays.

pub mod config;
pub mod eval;
pub mod manifest;
pub mod run;
pub mod synth;
pub mod visualize;

pub use config::{LinkUnits, RunConfig};
pub use eval::{corloc, evaluate, evaluate_results, CorLocReport};
pub use manifest::{GroundTruth, Manifest, Mode};
pub use run::{prepare, run, select, write_outputs, Prepared, RunOutput, VideoResult};
pub use synth::{synth_dataset, SynthSpec};
pub use visualize::visualize;
