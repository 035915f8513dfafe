//! A GIST-style global descriptor: Gabor-bank energy pooled on a coarse grid.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{fft2d, signed_frequency};
use crate::frame::{resize_centered, RgbFrame};

pub const GIST_MIN_SIZE: usize = 32;
/// Side of the square grayscale raster the filters run on.
pub const GIST_RESOLUTION: usize = 64;
pub const GIST_SCALES: usize = 4;
pub const GIST_ORIENTATIONS: usize = 8;
pub const GIST_GRID: usize = 4;
pub const GIST_LENGTH: usize = GIST_SCALES * GIST_ORIENTATIONS * GIST_GRID * GIST_GRID;

/// Descriptor layout: for each filter (scale-major, then orientation) the
/// `GIST_GRID x GIST_GRID` cells in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GistDescriptor(pub Vec<f64>);

impl GistDescriptor {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &GistDescriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Real, even transfer functions: each depends only on the radial frequency
/// and on the orientation modulo pi, and is zero on the DC and Nyquist lines.
fn filter_bank() -> &'static Vec<Vec<f64>> {
    static BANK: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    BANK.get_or_init(|| {
        let n = GIST_RESOLUTION;
        let mut bank = Vec::with_capacity(GIST_SCALES * GIST_ORIENTATIONS);
        let radial_sigma = 0.55f64.ln();
        let angular_sigma = PI / GIST_ORIENTATIONS as f64 * 0.6;
        for s in 0..GIST_SCALES {
            let center = (n as f64 * 0.375) / (1u32 << s) as f64;
            for o in 0..GIST_ORIENTATIONS {
                let theta = o as f64 * PI / GIST_ORIENTATIONS as f64;
                let mut h = vec![0.0; n * n];
                for ky in 0..n {
                    for kx in 0..n {
                        if kx == n / 2 || ky == n / 2 || (kx == 0 && ky == 0) {
                            continue;
                        }
                        let (fx, fy) = (signed_frequency(kx, n), signed_frequency(ky, n));
                        let rho = (fx * fx + fy * fy).sqrt();
                        let radial = (-(rho / center).ln().powi(2) / (2.0 * radial_sigma * radial_sigma)).exp();
                        let mut d = fy.atan2(fx) - theta;
                        d = d.rem_euclid(PI);
                        if d > PI / 2.0 {
                            d -= PI;
                        }
                        let angular = (-(d * d) / (2.0 * angular_sigma * angular_sigma)).exp();
                        h[ky * n + kx] = radial * angular;
                    }
                }
                bank.push(h);
            }
        }
        bank
    })
}

pub fn gist_descriptor(frame: &RgbFrame) -> Result<GistDescriptor> {
    let (w, h) = frame.dims();
    if w < GIST_MIN_SIZE || h < GIST_MIN_SIZE {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min: GIST_MIN_SIZE,
        });
    }
    let n = GIST_RESOLUTION;
    let gray = resize_centered(&frame.gray(), w, h, n, n);
    let mut spectrum: Vec<Complex<f64>> = gray.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2d(&mut spectrum, n, n, false);

    let cell = n / GIST_GRID;
    let mut out = Vec::with_capacity(GIST_LENGTH);
    let mut buf = vec![Complex::new(0.0, 0.0); n * n];
    for filter in filter_bank() {
        for ((b, s), f) in buf.iter_mut().zip(&spectrum).zip(filter) {
            *b = s * f;
        }
        fft2d(&mut buf, n, n, true);
        for gy in 0..GIST_GRID {
            for gx in 0..GIST_GRID {
                let mut acc = 0.0;
                for y in gy * cell..(gy + 1) * cell {
                    for x in gx * cell..(gx + 1) * cell {
                        acc += buf[y * n + x].norm_sqr();
                    }
                }
                out.push(acc / (cell * cell) as f64);
            }
        }
    }
    Ok(GistDescriptor(out))
}
