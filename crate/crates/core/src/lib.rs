pub mod cluster;
pub mod cosaliency;
pub mod cue;
pub mod error;
mod fft;
pub mod frame;
pub mod geometry;
pub mod gmm;
pub mod localization;
pub mod maxflow;
pub mod pipeline;
pub mod proposals;
pub mod providers;

pub use error::{Error, Result};
