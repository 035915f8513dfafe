//! Built-in visual and motion saliency providers and cue-map persistence.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rustfft::num_complex::Complex;

use crate::cue::{CueKind, CueMap};
use crate::error::{Error, Result};
use crate::fft::fft2d;
use crate::frame::{gaussian_blur, normalize_min_max, resize_corner_aligned, RgbFrame};

pub const MIN_SALIENCY_SIZE: usize = 64;
pub const MOTION_BLOCK: usize = 8;
pub const MOTION_SEARCH: isize = 16;
/// Matching cost added per pixel of the block and per pixel of L1
/// displacement, so flat or noisy blocks stay at rest.
pub const MOTION_DISPLACEMENT_PENALTY: f64 = 0.01;
/// Saliency smoothing scale relative to the shorter frame side.
pub const SALIENCY_BLUR_FRACTION: f64 = 0.1;

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Spectral-residual saliency: the log-amplitude spectrum minus its 3x3 local
/// mean, recombined with the original phase, inverse transformed, squared,
/// smoothed and min-max normalized.
pub fn spectral_saliency(frame: &RgbFrame) -> Result<CueMap> {
    let (w, h) = frame.dims();
    if w < MIN_SALIENCY_SIZE || h < MIN_SALIENCY_SIZE {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min: MIN_SALIENCY_SIZE,
        });
    }
    let gray = frame.gray();
    let (lo, hi) = gray
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 0.0 {
        return CueMap::constant(w, h, 0.0, CueKind::Visual);
    }

    let mut spectrum: Vec<Complex<f64>> = gray.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2d(&mut spectrum, w, h, false);
    let log_amp: Vec<f64> = spectrum.iter().map(|c| (c.norm() + 1e-12).ln()).collect();
    let mut residual = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    acc += log_amp[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            residual[y * w + x] = log_amp[y * w + x] - acc / 9.0;
        }
    }
    for (c, r) in spectrum.iter_mut().zip(&residual) {
        *c = Complex::from_polar(r.exp(), c.arg());
    }
    fft2d(&mut spectrum, w, h, true);
    let energy: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();
    let sigma = SALIENCY_BLUR_FRACTION * w.min(h) as f64;
    let mut sal = gaussian_blur(&energy, w, h, sigma);
    normalize_min_max(&mut sal);
    CueMap::from_clamped(w, h, sal, CueKind::Visual)
}

/// A block as `(x, y, width, height)` and its displacement `(dx, dy)`.
pub type BlockFlow = ((usize, usize, usize, usize), (f64, f64));

fn block_sad(
    prev: &[f64],
    curr: &[f64],
    width: usize,
    block: (usize, usize, usize, usize),
    offset: (isize, isize),
    bound: f64,
) -> f64 {
    let (bx, by, bw, bh) = block;
    let mut sad = 0.0;
    for y in by..by + bh {
        let py = (y as isize + offset.1) as usize;
        for x in bx..bx + bw {
            let px = (x as isize + offset.0) as usize;
            sad += (curr[y * width + x] - prev[py * width + px]).abs();
        }
        if sad > bound {
            break;
        }
    }
    sad
}

/// Per-block translation of `curr` relative to `prev`, found by exhaustive
/// search over SAD plus a small displacement penalty. Ties prefer the
/// smaller displacement.
pub fn block_flow(prev: &RgbFrame, curr: &RgbFrame) -> Result<Vec<BlockFlow>> {
    if prev.dims() != curr.dims() {
        return Err(Error::DimensionMismatch {
            expected: prev.dims(),
            actual: curr.dims(),
        });
    }
    let (w, h) = curr.dims();
    let (gp, gc) = (prev.gray(), curr.gray());
    let mut offsets: Vec<(isize, isize)> = Vec::new();
    for dy in -MOTION_SEARCH..=MOTION_SEARCH {
        for dx in -MOTION_SEARCH..=MOTION_SEARCH {
            offsets.push((dx, dy));
        }
    }
    offsets.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));

    let mut out = Vec::new();
    for by in (0..h).step_by(MOTION_BLOCK) {
        for bx in (0..w).step_by(MOTION_BLOCK) {
            let block = (bx, by, MOTION_BLOCK.min(w - bx), MOTION_BLOCK.min(h - by));
            let per_step = MOTION_DISPLACEMENT_PENALTY * (block.2 * block.3) as f64;
            let mut best = (f64::INFINITY, (0isize, 0isize));
            for &(dx, dy) in &offsets {
                let (x0, y0) = (bx as isize + dx, by as isize + dy);
                if x0 < 0 || y0 < 0 || x0 + block.2 as isize > w as isize || y0 + block.3 as isize > h as isize {
                    continue;
                }
                let penalty = per_step * (dx.abs() + dy.abs()) as f64;
                if penalty >= best.0 {
                    // Offsets are sorted by L1 length, so no later one can win.
                    break;
                }
                let cost = penalty + block_sad(&gp, &gc, w, block, (dx, dy), best.0 - penalty);
                if cost < best.0 {
                    best = (cost, (dx, dy));
                }
            }
            // The block came from `block + offset` in the previous frame.
            let (dx, dy) = best.1;
            out.push((block, (-dx as f64, -dy as f64)));
        }
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Motion saliency from block flow relative to the median (camera) flow.
pub fn motion_saliency(prev: &RgbFrame, curr: &RgbFrame) -> Result<CueMap> {
    let flow = block_flow(prev, curr)?;
    let (w, h) = curr.dims();
    let mut fx: Vec<f64> = flow.iter().map(|(_, f)| f.0).collect();
    let mut fy: Vec<f64> = flow.iter().map(|(_, f)| f.1).collect();
    let (mx, my) = (median(&mut fx), median(&mut fy));
    let mut values = vec![0.0; w * h];
    for ((bx, by, bw, bh), (dx, dy)) in flow {
        let mag = ((dx - mx).powi(2) + (dy - my).powi(2)).sqrt();
        for y in by..by + bh {
            for x in bx..bx + bw {
                values[y * w + x] = mag;
            }
        }
    }
    normalize_min_max(&mut values);
    CueMap::from_clamped(w, h, values, CueKind::Motion)
}

/// Motion cues for an ordered frame sequence; the first frame reuses the
/// second frame's map and a single frame gets an all-zero map.
pub fn motion_sequence(frames: &[RgbFrame]) -> Result<Vec<CueMap>> {
    match frames.len() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![CueMap::constant(frames[0].width(), frames[0].height(), 0.0, CueKind::Motion)?]),
        _ => {
            let mut maps = Vec::with_capacity(frames.len());
            for pair in frames.windows(2) {
                maps.push(motion_saliency(&pair[0], &pair[1])?);
            }
            maps.insert(0, maps[0].clone());
            Ok(maps)
        }
    }
}

/// Writes the float raster format: little-endian `u32` width and height
/// followed by `width * height` little-endian `f32` values.
pub fn save_cue_map(map: &CueMap, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * map.values().len());
    bytes.extend_from_slice(&(map.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit grayscale PNG with `round(value * 255)`.
pub fn save_cue_map_png(map: &CueMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let v = map.values()[y as usize * map.width() + x as usize];
        image::Luma([(v * 255.0).round() as u8])
    });
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_raster(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |msg: String| Error::InvalidCueMap(format!("{}: {msg}", path.display()));
    if bytes.len() < 8 {
        return Err(bad("truncated header".into()));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * w * h {
        return Err(bad(format!("expected {} bytes for {w}x{h}, found {}", 8 + 4 * w * h, bytes.len())));
    }
    let values: Vec<f64> = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(bad("NaN value".into()));
    }
    Ok((w, h, values))
}

/// Loads a cue map from an 8-bit PNG or the float raster format (detected by
/// content), normalizes it into `[0, 1]` and resamples it to `expected_dims`
/// with corner-aligned bilinear interpolation when sizes differ.
pub fn load_cue_map(path: &Path, kind: CueKind, expected_dims: (usize, usize)) -> Result<CueMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, mut values) = if bytes.starts_with(&PNG_MAGIC) {
        let img = image::load_from_memory(&bytes)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        (
            w as usize,
            h as usize,
            img.pixels().map(|p| p[0] as f64 / 255.0).collect(),
        )
    } else {
        let (w, h, v) = parse_raster(&bytes, path)?;
        // Rasters outside [0, 1] are rescaled; in-range rasters load verbatim.
        let v = if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            let mut v = v;
            normalize_min_max(&mut v);
            v
        } else {
            v
        };
        (w, h, v)
    };
    if w == 0 || h == 0 {
        return Err(Error::InvalidCueMap(format!("{}: empty map", path.display())));
    }
    if (w, h) != expected_dims {
        values = resize_corner_aligned(&values, w, h, expected_dims.0, expected_dims.1);
    }
    CueMap::from_clamped(expected_dims.0, expected_dims.1, values, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> RgbFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbFrame::new(w, h, (0..w * h).map(|_| {
            let g = rng.gen_range(0.2..0.8);
            [g, g, g]
        }).collect()).unwrap()
    }

    fn shift(frame: &RgbFrame, dx: isize, dy: isize, rect: Option<(usize, usize, usize, usize)>) -> RgbFrame {
        // Moves either the whole frame (rect = None, edges replicated) or only a rectangle.
        let (w, h) = frame.dims();
        let mut out = frame.clone();
        match rect {
            None => {
                for y in 0..h {
                    for x in 0..w {
                        let sx = (x as isize - dx).clamp(0, w as isize - 1) as usize;
                        let sy = (y as isize - dy).clamp(0, h as isize - 1) as usize;
                        out.set(x, y, frame.get(sx, sy));
                    }
                }
            }
            Some((x0, y0, rw, rh)) => {
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                        out.set(nx, ny, frame.get(x, y));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn saliency_of_constant_frame_is_zero() {
        let m = spectral_saliency(&RgbFrame::filled(64, 64, [0.4, 0.4, 0.4])).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saliency_peaks_at_bright_dot() {
        let mut f = RgbFrame::filled(80, 64, [0.2, 0.2, 0.2]);
        f.set(50, 20, [1.0, 1.0, 1.0]);
        let m = spectral_saliency(&f).unwrap();
        let argmax = m
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!((argmax % 80, argmax / 80), (50, 20));
    }

    #[test]
    fn saliency_range_and_size_check() {
        let m = spectral_saliency(&textured(96, 72, 1)).unwrap();
        assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(
            spectral_saliency(&textured(63, 80, 1)),
            Err(Error::FrameTooSmall { .. })
        ));
    }

    #[test]
    fn no_motion_gives_zero_map() {
        let f = textured(64, 48, 2);
        let m = motion_saliency(&f, &f).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moving_rectangle_is_salient() {
        let f = textured(96, 80, 3);
        // Give the rectangle its own texture so it is distinguishable.
        let mut base = f.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for y in 24..56 {
            for x in 24..56 {
                let g = rng.gen_range(0.0..1.0);
                base.set(x, y, [g, 0.5 * g, 1.0 - g]);
            }
        }
        let next = shift(&base, 5, 0, Some((24, 24, 32, 32)));
        let m = motion_saliency(&base, &next).unwrap();
        let v = m.values();
        // Interior of the moved rectangle versus far background.
        let inside = v[40 * 96 + 45];
        assert!(inside > 0.9, "inside {inside}");
        for &(x, y) in &[(2usize, 2usize), (90, 5), (5, 75), (90, 75)] {
            assert!(v[y * 96 + x] < 0.05);
        }
    }

    #[test]
    fn global_pan_cancels() {
        let f = textured(96, 80, 4);
        let next = shift(&f, 5, 0, None);
        let m = motion_saliency(&f, &next).unwrap();
        let nonzero = m.values().iter().filter(|&&v| v > 0.0).count();
        // Only blocks touching the newly exposed border may deviate.
        let border = 8 * 80;
        assert!(nonzero <= border, "{nonzero} nonzero pixels");
    }

    #[test]
    fn motion_dimension_mismatch() {
        assert!(motion_saliency(&textured(64, 64, 1), &textured(64, 48, 1)).is_err());
    }

    #[test]
    fn png_loads_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        GrayImage::from_pixel(10, 6, image::Luma([128])).save(&p).unwrap();
        let m = load_cue_map(&p, CueKind::Visual, (10, 6)).unwrap();
        assert!(m.values().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn raster_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.f32");
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..35).map(|_| rng.gen::<f32>() as f64).collect();
        let m = CueMap::new(7, 5, vals, CueKind::Motion).unwrap();
        save_cue_map(&m, &p).unwrap();
        let back = load_cue_map(&p, CueKind::Motion, (7, 5)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn half_resolution_upsample_keeps_corners() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("half.f32");
        let vals: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        save_cue_map(&CueMap::new(4, 3, vals.clone(), CueKind::Visual).unwrap(), &p).unwrap();
        let m = load_cue_map(&p, CueKind::Visual, (8, 6)).unwrap();
        let f = |v: f64| v as f32 as f64;
        let v = m.values();
        assert_eq!(v[0], f(vals[0]));
        assert_eq!(v[7], f(vals[3]));
        assert_eq!(v[40], f(vals[8]));
        assert_eq!(v[47], f(vals[11]));
    }

    #[test]
    fn nan_raster_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.f32");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(load_cue_map(&p, CueKind::Visual, (1, 1)).is_err());
        assert!(load_cue_map(&dir.path().join("missing"), CueKind::Visual, (1, 1)).is_err());
    }
}
