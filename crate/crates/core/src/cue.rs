//! Cue maps, tri-maps, per-cue reliability and the consensus-aware reliability map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of histogram bins used for Otsu thresholding.
pub const OTSU_BINS: usize = 256;

/// Fraction of the map maximum above which pixels become foreground seeds when
/// the regular foreground cut selects nothing.
pub const FALLBACK_FOREGROUND_FRACTION: f64 = 0.95;

/// Variance floor for the 1-D Gaussian fits inside [`reliability_score`].
pub const RELIABILITY_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Cosaliency,
    Visual,
    Motion,
}

impl CueKind {
    pub const ALL: [CueKind; 3] = [CueKind::Cosaliency, CueKind::Visual, CueKind::Motion];

    pub fn name(&self) -> &'static str {
        match self {
            CueKind::Cosaliency => "cosaliency",
            CueKind::Visual => "visual",
            CueKind::Motion => "motion",
        }
    }
}

/// A per-pixel object probability for one cue on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CueMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    kind: CueKind,
}

impl CueMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, kind: CueKind) -> Result<Self> {
        if width == 0 || height == 0 || values.is_empty() {
            return Err(Error::Empty("cue map"));
        }
        if values.len() != width * height {
            return Err(Error::InvalidCueMap(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(bad) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidCueMap(format!("value {bad} outside [0, 1]")));
        }
        Ok(CueMap {
            width,
            height,
            values,
            kind,
        })
    }

    /// Builds a map from arbitrary finite values by clamping into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, values: Vec<f64>, kind: CueKind) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { v } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, values, kind)
    }

    pub fn constant(width: usize, height: usize, value: f64, kind: CueKind) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], kind)
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn kind(&self) -> CueKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: CueKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Tri-map label of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Label {
    Background = -1,
    Unknown = 0,
    Foreground = 1,
}

impl Label {
    pub fn sign(self) -> f64 {
        self as i8 as f64
    }

    pub fn negate(self) -> Label {
        match self {
            Label::Background => Label::Foreground,
            Label::Unknown => Label::Unknown,
            Label::Foreground => Label::Background,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl TriMap {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "{} labels for a {width}x{height} tri-map",
                labels.len()
            )));
        }
        Ok(TriMap {
            width,
            height,
            labels,
        })
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

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    pub fn has_seeds(&self) -> bool {
        self.labels.contains(&Label::Foreground) && self.labels.contains(&Label::Background)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReliabilityScore(f64);

impl ReliabilityScore {
    pub const ZERO: ReliabilityScore = ReliabilityScore(0.0);

    pub fn new(psi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&psi) {
            return Err(Error::InvalidValue(format!("reliability {psi} outside [0, 1]")));
        }
        Ok(ReliabilityScore(psi))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn otsu_bin(v: f64) -> usize {
    ((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

fn bin_center(i: usize) -> f64 {
    (i as f64 + 0.5) / OTSU_BINS as f64
}

fn bin_upper_edge(i: usize) -> f64 {
    (i + 1) as f64 / OTSU_BINS as f64
}

/// Otsu threshold over a 256-bin histogram of the map values.
///
/// Returns the upper edge of the last bin of the lower class for the split
/// that maximizes the between-class variance, so every lower-class value lies
/// strictly below it; the smallest such bin wins ties. When no split puts
/// pixels on both sides (e.g. a constant map) the mean value is returned.
pub fn otsu_threshold(map: &CueMap) -> Result<f64> {
    otsu_threshold_values(map.values())
}

pub(crate) fn otsu_threshold_values(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("otsu input"));
    }
    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        hist[otsu_bin(v)] += 1;
    }
    let n = values.len() as f64;
    let total_sum: f64 = (0..OTSU_BINS).map(|i| hist[i] as f64 * bin_center(i)).sum();

    let mut best: Option<(usize, f64)> = None;
    let (mut n0, mut s0) = (0.0f64, 0.0f64);
    for i in 0..OTSU_BINS - 1 {
        n0 += hist[i] as f64;
        s0 += hist[i] as f64 * bin_center(i);
        let n1 = n - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let mu0 = s0 / n0;
        let mu1 = (total_sum - s0) / n1;
        let var = (n0 / n) * (n1 / n) * (mu0 - mu1) * (mu0 - mu1);
        match best {
            Some((_, b)) if var <= b * (1.0 + 1e-12) => {}
            _ => best = Some((i, var)),
        }
    }
    Ok(match best {
        Some((i, _)) => bin_upper_edge(i),
        None if values.iter().all(|&v| v == values[0]) => values[0],
        None => values.iter().sum::<f64>() / n,
    })
}

/// Label pixels given a threshold: foreground above `phi + avg(P > phi)`,
/// background below `phi`, unknown otherwise. Falls back to the top band
/// below the map maximum when the foreground cut is empty on a nonconstant map.
pub fn trimap_from_threshold(map: &CueMap, phi: f64) -> TriMap {
    let values = map.values();
    let above: Vec<f64> = values.iter().cloned().filter(|&v| v > phi).collect();
    let fg_cut = if above.is_empty() {
        f64::INFINITY
    } else {
        phi + above.iter().sum::<f64>() / above.len() as f64
    };

    let mut labels: Vec<Label> = values
        .iter()
        .map(|&v| {
            if v > fg_cut {
                Label::Foreground
            } else if v < phi {
                Label::Background
            } else {
                Label::Unknown
            }
        })
        .collect();

    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !labels.contains(&Label::Foreground) && hi > lo {
        let cut = FALLBACK_FOREGROUND_FRACTION * hi;
        for (l, &v) in labels.iter_mut().zip(values) {
            if v >= cut {
                *l = Label::Foreground;
            }
        }
    }
    TriMap {
        width: map.width(),
        height: map.height(),
        labels,
    }
}

pub fn build_trimap(map: &CueMap) -> Result<TriMap> {
    let phi = otsu_threshold(map)?;
    Ok(trimap_from_threshold(map, phi))
}

fn gaussian_fit(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(RELIABILITY_VARIANCE_FLOOR))
}

/// Bhattacharyya coefficient between two 1-D Gaussians given as `(mean, variance)`.
pub fn bhattacharyya_coefficient(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (m1, v1) = a;
    let (m2, v2) = b;
    let s = v1 + v2;
    let scale = (2.0 * (v1 * v2).sqrt() / s).sqrt();
    (scale * (-(m1 - m2) * (m1 - m2) / (4.0 * s)).exp()).clamp(0.0, 1.0)
}

/// Area of the foreground set over the area of its bounding box.
pub fn foreground_concentration(trimap: &TriMap) -> f64 {
    let w = trimap.width();
    let mut count = 0usize;
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for (i, l) in trimap.labels().iter().enumerate() {
        if *l == Label::Foreground {
            let (r, c) = (i / w, i % w);
            count += 1;
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
    }
    if count == 0 {
        return 0.0;
    }
    count as f64 / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64
}

/// Reliability of a cue: `(1 - overlap) * concentration`, where overlap is the
/// Bhattacharyya coefficient between Gaussian fits of the foreground and
/// background seed values. Empty seed sets score 0.
pub fn reliability_score(map: &CueMap, trimap: &TriMap) -> Result<ReliabilityScore> {
    if map.dims() != trimap.dims() {
        return Err(Error::DimensionMismatch {
            expected: map.dims(),
            actual: trimap.dims(),
        });
    }
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (&v, l) in map.values().iter().zip(trimap.labels()) {
        match l {
            Label::Foreground => fg.push(v),
            Label::Background => bg.push(v),
            Label::Unknown => {}
        }
    }
    if fg.is_empty() || bg.is_empty() {
        return Ok(ReliabilityScore::ZERO);
    }
    let overlap = bhattacharyya_coefficient(gaussian_fit(&fg), gaussian_fit(&bg));
    let psi = (1.0 - overlap) * foreground_concentration(trimap);
    Ok(ReliabilityScore(psi.clamp(0.0, 1.0)))
}

/// Signed, reliability-weighted sum of tri-map labels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    total_reliability: f64,
}

impl ConsensusMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw signed sums.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_reliability(&self) -> f64 {
        self.total_reliability
    }

    /// Value divided by the total reliability, in `[-1, 1]`; identically 0 when
    /// every cue has zero reliability.
    pub fn normalized(&self, index: usize) -> f64 {
        if self.total_reliability > 0.0 {
            self.values[index] / self.total_reliability
        } else {
            0.0
        }
    }

    pub fn normalized_values(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.normalized(i)).collect()
    }
}

pub fn consensus_reliability_map(
    trimaps: &[TriMap],
    scores: &[ReliabilityScore],
) -> Result<ConsensusMap> {
    if trimaps.is_empty() {
        return Err(Error::Empty("tri-map list"));
    }
    if trimaps.len() != scores.len() {
        return Err(Error::InvalidValue(format!(
            "{} tri-maps but {} reliability scores",
            trimaps.len(),
            scores.len()
        )));
    }
    let dims = trimaps[0].dims();
    if let Some(bad) = trimaps.iter().find(|t| t.dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: bad.dims(),
        });
    }
    let mut values = vec![0.0; dims.0 * dims.1];
    for (t, s) in trimaps.iter().zip(scores) {
        for (x, l) in values.iter_mut().zip(t.labels()) {
            *x += l.sign() * s.value();
        }
    }
    Ok(ConsensusMap {
        width: dims.0,
        height: dims.1,
        values,
        total_reliability: scores.iter().map(|s| s.value()).sum(),
    })
}
