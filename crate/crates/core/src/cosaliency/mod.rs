//! Hierarchical co-saliency: saliency maps are warped up a hierarchy of
//! representative frames, fused by reliability, and propagated back down.

pub mod gist;
pub mod hierarchy;
pub mod warp;

use rayon::prelude::*;

use crate::cue::{build_trimap, reliability_score, CueKind, CueMap};
use crate::error::{Error, Result};
use crate::frame::{resize_centered, RgbFrame};

pub use gist::{gist_descriptor, GistDescriptor, GIST_LENGTH};
pub use hierarchy::{build_hierarchy, Hierarchy, HierarchyParams};
pub use warp::warp_map;

/// Warp with resampling when the two frames differ in size.
fn warp_between(src: &RgbFrame, dst: &RgbFrame, map: &CueMap) -> Result<CueMap> {
    if src.dims() == dst.dims() {
        return warp_map(src, dst, map);
    }
    let (w, h) = dst.dims();
    let src = src.resize(w, h);
    let values = resize_centered(map.values(), map.width(), map.height(), w, h);
    warp_map(&src, dst, &CueMap::from_clamped(w, h, values, map.kind())?)
}

fn map_reliability(map: &CueMap) -> Result<f64> {
    let t = build_trimap(map)?;
    Ok(reliability_score(map, &t)?.value())
}

fn check_inputs(h: &Hierarchy, frames: &[RgbFrame], maps: &[CueMap]) -> Result<()> {
    if frames.len() != maps.len() || h.levels[0].len() != frames.len() {
        return Err(Error::InvalidValue(format!(
            "{} frames, {} maps, {} ground-level nodes",
            frames.len(),
            maps.len(),
            h.levels[0].len()
        )));
    }
    Ok(())
}

/// Co-saliency maps for every level above the ground level;
/// `result[l - 1][j]` belongs to frame `h.levels[l][j]`.
///
/// Each representative's map is the reliability-weighted mean of its
/// children's maps after warping them onto it, scaled so its maximum is 1.
pub fn aggregate_up(h: &Hierarchy, frames: &[RgbFrame], saliency: &[CueMap]) -> Result<Vec<Vec<CueMap>>> {
    check_inputs(h, frames, saliency)?;
    let mut out: Vec<Vec<CueMap>> = Vec::new();
    for l in 0..h.top() {
        let below: &[CueMap] = if l == 0 { saliency } else { &out[l - 1] };
        let scores: Vec<f64> = below.par_iter().map(map_reliability).collect::<Result<_>>()?;
        let level: Vec<CueMap> = h.levels[l + 1]
            .par_iter()
            .enumerate()
            .map(|(j, &rep)| {
                let dst = &frames[rep];
                let (w, hh) = dst.dims();
                let children = h.children(l, j);
                let total: f64 = children.iter().map(|&c| scores[c]).sum();
                let mut acc = vec![0.0; w * hh];
                for &c in &children {
                    let weight = if total > 0.0 {
                        scores[c] / total
                    } else {
                        1.0 / children.len() as f64
                    };
                    if weight == 0.0 {
                        continue;
                    }
                    let warped = warp_between(&frames[h.levels[l][c]], dst, &below[c])?;
                    for (a, v) in acc.iter_mut().zip(warped.values()) {
                        *a += weight * v;
                    }
                }
                let max = acc.iter().cloned().fold(0.0, f64::max);
                if max > 0.0 {
                    acc.iter_mut().for_each(|v| *v /= max);
                }
                CueMap::from_clamped(w, hh, acc, CueKind::Cosaliency)
            })
            .collect::<Result<_>>()?;
        out.push(level);
    }
    Ok(out)
}

/// Push co-saliency back to the ground level. At depth `d` below the top
/// (starting at 1) a node's map becomes `(d * parent + own) / (d + 1)`, where
/// `parent` is the already-propagated parent map warped onto the node.
pub fn propagate_down(
    h: &Hierarchy,
    frames: &[RgbFrame],
    saliency: &[CueMap],
    upper: &[Vec<CueMap>],
) -> Result<Vec<CueMap>> {
    check_inputs(h, frames, saliency)?;
    if upper.len() != h.top() {
        return Err(Error::InvalidValue(format!(
            "{} upper levels for a hierarchy of height {}",
            upper.len(),
            h.top()
        )));
    }
    if h.top() == 0 {
        return Ok(saliency.iter().map(|m| m.clone().with_kind(CueKind::Cosaliency)).collect());
    }
    let mut current: Vec<CueMap> = upper[h.top() - 1].clone();
    let mut depth = 1.0;
    for l in (1..=h.top()).rev() {
        let own: &[CueMap] = if l == 1 { saliency } else { &upper[l - 2] };
        let next: Vec<CueMap> = h.levels[l - 1]
            .par_iter()
            .enumerate()
            .map(|(i, &f)| {
                let parent = h.parents[l - 1][i];
                let src = &frames[h.levels[l][parent]];
                let warped = warp_between(src, &frames[f], &current[parent])?;
                let values = warped
                    .values()
                    .iter()
                    .zip(own[i].values())
                    .map(|(p, o)| (depth * p + o) / (depth + 1.0))
                    .collect();
                CueMap::from_clamped(own[i].width(), own[i].height(), values, CueKind::Cosaliency)
            })
            .collect::<Result<_>>()?;
        current = next;
        depth += 1.0;
    }
    Ok(current)
}

/// Full co-saliency computation for a collection of frames.
pub fn compute_cosaliency(
    frames: &[RgbFrame],
    saliency: &[CueMap],
    params: HierarchyParams,
) -> Result<(Hierarchy, Vec<GistDescriptor>, Vec<CueMap>)> {
    let descriptors: Vec<GistDescriptor> = frames.par_iter().map(gist_descriptor).collect::<Result<_>>()?;
    let h = build_hierarchy(&descriptors, params);
    let upper = aggregate_up(&h, frames, saliency)?;
    let maps = propagate_down(&h, frames, saliency, &upper)?;
    Ok((h, descriptors, maps))
}
