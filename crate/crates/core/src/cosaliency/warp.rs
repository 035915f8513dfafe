//! Block-matching warp of a map from one frame onto another.

use crate::cue::CueMap;
use crate::error::{Error, Result};
use crate::frame::RgbFrame;

pub const WARP_BLOCK: usize = 16;
/// Search radius in whole blocks.
pub const WARP_SEARCH_BLOCKS: i64 = 3;

fn candidate_offsets() -> Vec<(i64, i64)> {
    let b = WARP_BLOCK as i64;
    let mut offsets = Vec::new();
    for dy in -WARP_SEARCH_BLOCKS..=WARP_SEARCH_BLOCKS {
        for dx in -WARP_SEARCH_BLOCKS..=WARP_SEARCH_BLOCKS {
            offsets.push((dx * b, dy * b));
        }
    }
    offsets.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    offsets
}

/// For each destination block of `dst`, find the best matching block of `src`
/// by RGB sum of squared differences and copy the matching values of `map`
/// (defined on `src`). Ties go to the smaller displacement.
pub fn warp_map(src: &RgbFrame, dst: &RgbFrame, map: &CueMap) -> Result<CueMap> {
    if src.dims() != dst.dims() {
        return Err(Error::DimensionMismatch {
            expected: dst.dims(),
            actual: src.dims(),
        });
    }
    if map.dims() != src.dims() {
        return Err(Error::DimensionMismatch {
            expected: src.dims(),
            actual: map.dims(),
        });
    }
    let (w, h) = dst.dims();
    let offsets = candidate_offsets();
    let mut out = vec![0.0; w * h];
    for by in (0..h).step_by(WARP_BLOCK) {
        for bx in (0..w).step_by(WARP_BLOCK) {
            let bw = WARP_BLOCK.min(w - bx);
            let bh = WARP_BLOCK.min(h - by);
            let mut best: Option<((i64, i64), f64)> = None;
            for &(dx, dy) in &offsets {
                let (sx, sy) = (bx as i64 + dx, by as i64 + dy);
                if sx < 0 || sy < 0 || sx as usize + bw > w || sy as usize + bh > h {
                    continue;
                }
                let (sx, sy) = (sx as usize, sy as usize);
                let limit = best.map_or(f64::INFINITY, |b| b.1);
                let mut ssd = 0.0;
                'rows: for y in 0..bh {
                    for x in 0..bw {
                        let a = dst.get(bx + x, by + y);
                        let b = src.get(sx + x, sy + y);
                        ssd += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
                    }
                    if ssd >= limit {
                        break 'rows;
                    }
                }
                if ssd < limit {
                    best = Some(((dx, dy), ssd));
                }
            }
            // The zero offset is always a candidate.
            let ((dx, dy), _) = best.expect("zero offset is always valid");
            for y in 0..bh {
                for x in 0..bw {
                    let sx = (bx as i64 + dx) as usize + x;
                    let sy = (by as i64 + dy) as usize + y;
                    out[(by + y) * w + bx + x] = map.get(sx, sy);
                }
            }
        }
    }
    CueMap::new(w, h, out, map.kind())
}
