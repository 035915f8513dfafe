//! Mask-driven bounding-box proposals: edge maps, exact distance transforms,
//! mask-specific edges and centroid-constrained candidate boxes.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cue::otsu_threshold_values;
use crate::error::{Error, Result};
use crate::frame::{sobel_magnitude, RgbFrame};
use crate::geometry::BoundingBox;
use crate::gmm::ObjectMask;

pub const DEFAULT_MAX_SAMPLES: usize = 40;
pub const DEFAULT_MAX_PROPOSALS: usize = 50;

/// Binary set of edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize, edges: Vec<bool>) -> Result<Self> {
        if edges.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "{} edge flags for a {width}x{height} frame",
                edges.len()
            )));
        }
        Ok(EdgeMap { width, height, edges })
    }

    /// Edge map holding exactly the given `(row, col)` pixels.
    pub fn from_points(width: usize, height: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut edges = vec![false; width * height];
        for &(r, c) in points {
            if r >= height || c >= width {
                return Err(Error::InvalidValue(format!("edge pixel ({r}, {c}) outside frame")));
            }
            edges[r * width + c] = true;
        }
        Ok(EdgeMap { width, height, edges })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_edge(&self, row: usize, col: usize) -> bool {
        self.edges[row * self.width + col]
    }

    pub fn flags(&self) -> &[bool] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.edges.iter().any(|e| *e)
    }

    /// Edge pixels as `(row, col)` in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| **e)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }
}

/// Sobel gradient magnitude, normalized by its maximum and cut at its Otsu level.
pub fn edge_map(frame: &RgbFrame) -> EdgeMap {
    let (w, h) = frame.dims();
    let mut mag = sobel_magnitude(&frame.gray(), w, h);
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return EdgeMap {
            width: w,
            height: h,
            edges: vec![false; w * h],
        };
    }
    mag.iter_mut().for_each(|v| *v /= max);
    let phi = otsu_threshold_values(&mag).expect("nonempty frame");
    EdgeMap {
        width: w,
        height: h,
        edges: mag.iter().map(|&v| v >= phi).collect(),
    }
}

/// Euclidean distance to, and identity of, the nearest edge pixel for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTransform {
    width: usize,
    height: usize,
    distance: Vec<f64>,
    nearest: Vec<(usize, usize)>,
}

impl DistanceTransform {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn distance(&self, row: usize, col: usize) -> f64 {
        self.distance[row * self.width + col]
    }

    /// Nearest edge pixel as `(row, col)`.
    pub fn nearest(&self, row: usize, col: usize) -> (usize, usize) {
        self.nearest[row * self.width + col]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }
}

/// Exact Euclidean distance transform. Among equidistant edge pixels the
/// first in row-major order wins.
///
/// A column pass finds, for every pixel, the nearest edge row within its
/// column; a row pass then scans columns outward from each pixel and stops
/// once the column offset alone exceeds the best distance found.
pub fn distance_transform(edges: &EdgeMap) -> Result<DistanceTransform> {
    if edges.is_empty() {
        return Err(Error::Empty("edge map"));
    }
    let (w, h) = edges.dims();
    // nearest_row[r * w + c]: nearest edge row in column c for row r.
    let mut nearest_row: Vec<Option<usize>> = vec![None; w * h];
    for c in 0..w {
        let mut above: Option<usize> = None;
        for r in 0..h {
            if edges.is_edge(r, c) {
                above = Some(r);
            }
            nearest_row[r * w + c] = above;
        }
        let mut below: Option<usize> = None;
        for r in (0..h).rev() {
            if edges.is_edge(r, c) {
                below = Some(r);
            }
            let slot = &mut nearest_row[r * w + c];
            if let Some(b) = below {
                match *slot {
                    // Equal distances keep the upper row.
                    Some(a) if r - a <= b - r => {}
                    _ => *slot = Some(b),
                }
            }
        }
    }

    let mut distance = vec![0.0; w * h];
    let mut nearest = vec![(0, 0); w * h];
    for r in 0..h {
        for c in 0..w {
            let mut best: Option<(usize, usize, usize)> = None; // (d2, row, col)
            for off in 0..w {
                let off2 = off * off;
                if let Some((d2, _, _)) = best {
                    if off2 > d2 {
                        break;
                    }
                }
                let cols = [c.checked_sub(off), (off > 0).then_some(c + off).filter(|&x| x < w)];
                for cc in cols.into_iter().flatten() {
                    if let Some(er) = nearest_row[r * w + cc] {
                        let dr = er.abs_diff(r);
                        let cand = (dr * dr + off2, er, cc);
                        if best.is_none_or(|b| cand < b) {
                            best = Some(cand);
                        }
                    }
                }
            }
            let (d2, er, ec) = best.expect("edge map is nonempty");
            distance[r * w + c] = (d2 as f64).sqrt();
            nearest[r * w + c] = (er, ec);
        }
    }
    Ok(DistanceTransform {
        width: w,
        height: h,
        distance,
        nearest,
    })
}

/// The nearest edge pixel of every foreground pixel of the mask.
pub fn mask_specific_edges(mask: &ObjectMask, edges: &EdgeMap) -> Result<EdgeMap> {
    if mask.dims() != edges.dims() {
        return Err(Error::DimensionMismatch {
            expected: edges.dims(),
            actual: mask.dims(),
        });
    }
    if mask.foreground_count() == 0 {
        return Err(Error::Empty("mask foreground"));
    }
    let dt = distance_transform(edges)?;
    let (w, h) = edges.dims();
    let mut out = vec![false; w * h];
    for (i, &f) in mask.foreground().iter().enumerate() {
        if f {
            let (r, c) = dt.nearest(i / w, i % w);
            out[r * w + c] = true;
        }
    }
    EdgeMap::new(w, h, out)
}

/// Box spanned by the extreme rows and columns of the edge set.
pub fn reference_box(ms_edges: &EdgeMap) -> Result<BoundingBox> {
    let points = ms_edges.points();
    if points.is_empty() {
        return Err(Error::Empty("mask-specific edges"));
    }
    let top = points.iter().map(|p| p.0).min().unwrap();
    let bottom = points.iter().map(|p| p.0).max().unwrap();
    let left = points.iter().map(|p| p.1).min().unwrap();
    let right = points.iter().map(|p| p.1).max().unwrap();
    let b = BoundingBox::new(top, bottom, left, right)?;
    if b.perimeter() == 0 {
        return Err(Error::DegenerateBox);
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposalParams {
    pub max_samples: usize,
    /// Upper bound on returned boxes; `0` keeps every candidate.
    pub max_proposals: usize,
    pub seed: u64,
}

impl Default for ProposalParams {
    fn default() -> Self {
        ProposalParams {
            max_samples: DEFAULT_MAX_SAMPLES,
            max_proposals: DEFAULT_MAX_PROPOSALS,
            seed: 0,
        }
    }
}

/// Uniform sample without replacement of at most `max_samples` edge pixels,
/// returned in row-major order.
pub fn sample_edge_pixels(edges: &EdgeMap, max_samples: usize, seed: u64) -> Vec<(usize, usize)> {
    let points = edges.points();
    if points.len() <= max_samples {
        return points;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, points.len(), max_samples).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

fn any_in_range(sorted: &[usize], lo: usize, hi: usize) -> bool {
    let i = sorted.partition_point(|&v| v < lo);
    i < sorted.len() && sorted[i] <= hi
}

/// Every box whose sides lie on rows and columns of the sampled pixels, whose
/// four sides each pass through at least one sampled pixel and which holds
/// `centroid` (`(row, col)`) strictly inside. Sorted by box coordinates.
pub fn candidate_boxes(samples: &[(usize, usize)], centroid: (f64, f64)) -> Vec<BoundingBox> {
    let rows: BTreeSet<usize> = samples.iter().map(|p| p.0).collect();
    let cols: BTreeSet<usize> = samples.iter().map(|p| p.1).collect();
    let max_r = rows.iter().next_back().copied().unwrap_or(0);
    let max_c = cols.iter().next_back().copied().unwrap_or(0);
    // Sorted sampled columns per row and sampled rows per column.
    let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); max_r + 1];
    let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); max_c + 1];
    for &(r, c) in samples {
        by_row[r].push(c);
        by_col[c].push(r);
    }
    by_row.iter_mut().for_each(|v| v.sort_unstable());
    by_col.iter_mut().for_each(|v| v.sort_unstable());

    let (cr, cc) = centroid;
    let tops: Vec<usize> = rows.iter().copied().filter(|&r| (r as f64) < cr).collect();
    let bottoms: Vec<usize> = rows.iter().copied().filter(|&r| (r as f64) > cr).collect();
    let lefts: Vec<usize> = cols.iter().copied().filter(|&c| (c as f64) < cc).collect();
    let rights: Vec<usize> = cols.iter().copied().filter(|&c| (c as f64) > cc).collect();

    let mut out = Vec::new();
    for &top in &tops {
        for &bottom in &bottoms {
            for &left in &lefts {
                if !any_in_range(&by_col[left], top, bottom) {
                    continue;
                }
                for &right in &rights {
                    if any_in_range(&by_col[right], top, bottom)
                        && any_in_range(&by_row[top], left, right)
                        && any_in_range(&by_row[bottom], left, right)
                    {
                        out.push(BoundingBox {
                            top,
                            bottom,
                            left,
                            right,
                        });
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Proposals for one frame: the sampled candidate boxes, thinned to at most
/// `max_proposals` by taking evenly spaced picks from the perimeter-sorted
/// list, followed by the reference box.
pub fn generate_proposals(mask: &ObjectMask, ms_edges: &EdgeMap, params: ProposalParams) -> Result<Vec<BoundingBox>> {
    let centroid = mask.centroid().ok_or(Error::Empty("mask foreground"))?;
    let reference = reference_box(ms_edges)?;
    let samples = sample_edge_pixels(ms_edges, params.max_samples, params.seed);
    let mut boxes: Vec<BoundingBox> = candidate_boxes(&samples, centroid)
        .into_iter()
        .filter(|b| *b != reference)
        .collect();
    boxes.sort_by(|a, b| b.perimeter().cmp(&a.perimeter()).then(a.cmp(b)));
    let limit = params.max_proposals.saturating_sub(1);
    if params.max_proposals > 0 && boxes.len() > limit {
        boxes = evenly_spaced(&boxes, limit);
    }
    boxes.push(reference);
    Ok(boxes)
}

fn evenly_spaced<T: Copy>(items: &[T], k: usize) -> Vec<T> {
    match k {
        0 => Vec::new(),
        1 => vec![items[0]],
        _ => {
            let n = items.len() - 1;
            (0..k)
                .map(|i| items[(i * n + (k - 1) / 2) / (k - 1)])
                .collect()
        }
    }
}

/// JSON record of one proposal.
#[derive(Debug, Clone, Serialize)]
pub struct ProposalRecord {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
    pub perimeter: usize,
}

impl From<&BoundingBox> for ProposalRecord {
    fn from(b: &BoundingBox) -> Self {
        ProposalRecord {
            top: b.top,
            bottom: b.bottom,
            left: b.left,
            right: b.right,
            perimeter: b.perimeter(),
        }
    }
}
