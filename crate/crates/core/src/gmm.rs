//! Appearance fusion: per-cue GMM components weighted by the consensus map,
//! pooled into one foreground and one background mixture, followed by a
//! single graph-cut segmentation.

use std::collections::HashSet;
use std::path::Path;

use image::GrayImage;
use nalgebra::{Matrix3, Vector3};

use crate::cluster::{kmeans, KMeansParams};
use crate::cue::{
    build_trimap, consensus_reliability_map, reliability_score, ConsensusMap, CueMap, Label,
    ReliabilityScore, TriMap,
};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::maxflow::FlowNetwork;

/// Diagonal loading added to every component covariance.
pub const COVARIANCE_EPSILON: f64 = 1e-5;
pub const DEFAULT_COMPONENTS: usize = 5;
pub const DEFAULT_GAMMA: f64 = 50.0;
pub const KMEANS_MAX_ITERATIONS: usize = 50;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComponentOrigin {
    pub cue: usize,
    pub index: usize,
    pub side: Side,
}

/// One Gaussian of a colour mixture.
#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// Mixture weight after normalization over all components of a side.
    pub weight: f64,
    /// Weight before normalization, i.e. the consensus-derived confidence.
    pub confidence: f64,
    pub origin: ComponentOrigin,
    precision: Matrix3<f64>,
    log_norm: f64,
}

impl GmmComponent {
    pub fn new(
        mean: Vector3<f64>,
        covariance: Matrix3<f64>,
        weight: f64,
        origin: ComponentOrigin,
    ) -> Result<Self> {
        let det = covariance.determinant();
        let precision = covariance
            .try_inverse()
            .filter(|_| det > 0.0 && det.is_finite())
            .ok_or_else(|| Error::InvalidValue("covariance is not positive definite".into()))?;
        Ok(GmmComponent {
            mean,
            covariance,
            weight,
            confidence: weight,
            origin,
            precision,
            log_norm: -1.5 * LN_2PI - 0.5 * det.ln(),
        })
    }

    pub fn log_density(&self, color: &[f64; 3]) -> f64 {
        let d = Vector3::new(color[0], color[1], color[2]) - self.mean;
        self.log_norm - 0.5 * (d.transpose() * self.precision * d)[(0, 0)]
    }

    pub fn density(&self, color: &[f64; 3]) -> f64 {
        self.log_density(color).exp()
    }
}

/// A colour cluster found among seed pixels.
#[derive(Debug, Clone)]
pub struct SeedCluster {
    pub mean: Vector3<f64>,
    /// Sample covariance plus [`COVARIANCE_EPSILON`] on the diagonal.
    pub covariance: Matrix3<f64>,
    /// Fraction of the seeds that fell into this cluster.
    pub fraction: f64,
    /// Indices into the colour list given to [`cluster_seeds`].
    pub members: Vec<usize>,
}

/// Clusters seed colours with seeded k-means++ and summarizes each cluster as a
/// Gaussian. The component count drops to the number of distinct colours when
/// fewer are available.
pub fn cluster_seeds(colors: &[[f64; 3]], n_components: usize, seed: u64) -> Result<Vec<SeedCluster>> {
    if colors.is_empty() {
        return Err(Error::Empty("seed colours"));
    }
    let distinct: HashSet<[u64; 3]> = colors
        .iter()
        .map(|c| [c[0].to_bits(), c[1].to_bits(), c[2].to_bits()])
        .collect();
    let k = n_components.max(1).min(distinct.len());
    let points: Vec<Vec<f64>> = colors.iter().map(|c| c.to_vec()).collect();
    let result = kmeans(
        &points,
        KMeansParams {
            k,
            max_iterations: KMEANS_MAX_ITERATIONS,
            restarts: 1,
            seed,
        },
    );

    let mut members = vec![Vec::new(); result.centers.len()];
    for (i, &a) in result.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let total = colors.len() as f64;
    Ok(members
        .into_iter()
        .map(|m| {
            let n = m.len() as f64;
            let mut mean = Vector3::zeros();
            for &i in &m {
                mean += Vector3::from(colors[i]);
            }
            mean /= n;
            let mut cov = Matrix3::zeros();
            for &i in &m {
                let d = Vector3::from(colors[i]) - mean;
                cov += d * d.transpose();
            }
            cov /= n;
            cov += Matrix3::identity() * COVARIANCE_EPSILON;
            SeedCluster {
                mean,
                covariance: cov,
                fraction: n / total,
                members: m,
            }
        })
        .collect())
}

/// Consensus-derived confidence of a component: `0.5 * (1 + mean)` for the
/// foreground side and `0.5 * (1 - mean)` for the background side, where
/// `mean` is the average normalized consensus over the member pixels.
pub fn component_weight(side: Side, consensus: &ConsensusMap, member_pixels: &[usize]) -> f64 {
    if member_pixels.is_empty() {
        return 0.5;
    }
    let mean = member_pixels
        .iter()
        .map(|&p| consensus.normalized(p))
        .sum::<f64>()
        / member_pixels.len() as f64;
    let w = match side {
        Side::Foreground => 0.5 * (1.0 + mean),
        Side::Background => 0.5 * (1.0 - mean),
    };
    w.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default)]
pub struct FusedGmm {
    pub foreground: Vec<GmmComponent>,
    pub background: Vec<GmmComponent>,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    pub n_components: usize,
    pub seed: u64,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            n_components: DEFAULT_COMPONENTS,
            seed: 0,
        }
    }
}

/// Everything produced while fusing the cues of one frame.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub gmm: FusedGmm,
    /// Pixels that every informative cue labels as background.
    pub fixed_background: Vec<bool>,
    pub trimaps: Vec<TriMap>,
    pub scores: Vec<ReliabilityScore>,
    pub consensus: ConsensusMap,
}

fn normalize_weights(components: &mut [GmmComponent]) {
    let total: f64 = components.iter().map(|c| c.confidence).sum();
    let n = components.len() as f64;
    for c in components.iter_mut() {
        c.weight = if total > 0.0 { c.confidence / total } else { 1.0 / n };
    }
}

fn side_seed(base: u64, cue: usize, side: Side) -> u64 {
    let s = match side {
        Side::Foreground => 0u64,
        Side::Background => 1u64,
    };
    base ^ ((cue as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)) ^ (s << 63)
}

pub fn build_fused_gmm(frame: &RgbFrame, cuemaps: &[CueMap], params: FusionParams) -> Result<Fusion> {
    if cuemaps.is_empty() {
        return Err(Error::Empty("cue list"));
    }
    for m in cuemaps {
        if m.dims() != frame.dims() {
            return Err(Error::DimensionMismatch {
                expected: frame.dims(),
                actual: m.dims(),
            });
        }
    }
    let mut trimaps = Vec::with_capacity(cuemaps.len());
    let mut scores = Vec::with_capacity(cuemaps.len());
    for m in cuemaps {
        let t = build_trimap(m)?;
        scores.push(reliability_score(m, &t)?);
        trimaps.push(t);
    }
    let consensus = consensus_reliability_map(&trimaps, &scores)?;

    let mut gmm = FusedGmm::default();
    let mut fixed_background: Option<Vec<bool>> = None;
    for (k, t) in trimaps.iter().enumerate() {
        for side in [Side::Foreground, Side::Background] {
            let label = match side {
                Side::Foreground => Label::Foreground,
                Side::Background => Label::Background,
            };
            let pixels = t.indices_of(label);
            if pixels.is_empty() {
                continue;
            }
            let colors: Vec<[f64; 3]> = pixels.iter().map(|&p| frame.pixels()[p]).collect();
            let clusters = cluster_seeds(&colors, params.n_components, side_seed(params.seed, k, side))?;
            for (c, cluster) in clusters.into_iter().enumerate() {
                let member_pixels: Vec<usize> = cluster.members.iter().map(|&i| pixels[i]).collect();
                let confidence = component_weight(side, &consensus, &member_pixels);
                let origin = ComponentOrigin { cue: k, index: c, side };
                let component = GmmComponent::new(cluster.mean, cluster.covariance, confidence, origin)?;
                match side {
                    Side::Foreground => gmm.foreground.push(component),
                    Side::Background => gmm.background.push(component),
                }
            }
        }
        if t.has_seeds() {
            let bg: Vec<bool> = t.labels().iter().map(|l| *l == Label::Background).collect();
            fixed_background = Some(match fixed_background {
                None => bg,
                Some(acc) => acc.iter().zip(&bg).map(|(a, b)| *a && *b).collect(),
            });
        }
    }
    if gmm.foreground.is_empty() || gmm.background.is_empty() {
        return Err(Error::DegenerateFrame(
            "no cue produced both foreground and background seeds".into(),
        ));
    }
    normalize_weights(&mut gmm.foreground);
    normalize_weights(&mut gmm.background);
    Ok(Fusion {
        gmm,
        fixed_background: fixed_background.unwrap_or_else(|| vec![false; frame.len()]),
        trimaps,
        scores,
        consensus,
    })
}

/// Log of the mixture density, computed with log-sum-exp.
pub fn gmm_log_score(color: &[f64; 3], components: &[GmmComponent]) -> f64 {
    let terms: Vec<f64> = components
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| c.weight.ln() + c.log_density(color))
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Mixture density `sum_c weight_c * N(color; mean_c, cov_c)`.
pub fn gmm_score(color: &[f64; 3], components: &[GmmComponent]) -> f64 {
    gmm_log_score(color, components).exp()
}

/// Binary segmentation of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMask {
    width: usize,
    height: usize,
    foreground: Vec<bool>,
}

impl ObjectMask {
    pub fn new(width: usize, height: usize, foreground: Vec<bool>) -> Result<Self> {
        if foreground.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "{} mask labels for a {width}x{height} frame",
                foreground.len()
            )));
        }
        Ok(ObjectMask {
            width,
            height,
            foreground,
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

    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }

    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.foreground[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|f| **f).count()
    }

    /// Mean `(row, col)` of the foreground pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut r, mut c, mut n) = (0.0, 0.0, 0usize);
        for (i, &f) in self.foreground.iter().enumerate() {
            if f {
                r += (i / self.width) as f64;
                c += (i % self.width) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (r / n as f64, c / n as f64))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.is_foreground(x as usize, y as usize) { 255 } else { 0 }])
        });
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// The graph-cut energy for one frame: unary costs from the two mixtures and a
/// contrast-sensitive Potts term on the 8-neighbourhood.
#[derive(Debug, Clone)]
pub struct GrabCutEnergy {
    width: usize,
    height: usize,
    /// Cost of labelling each pixel foreground; infinite on fixed background.
    fg_cost: Vec<f64>,
    bg_cost: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

fn neighbour_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(4 * width * height);
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                pairs.push((p, p + 1));
            }
            if y + 1 < height {
                pairs.push((p, p + width));
                if x + 1 < width {
                    pairs.push((p, p + width + 1));
                }
                if x > 0 {
                    pairs.push((p, p + width - 1));
                }
            }
        }
    }
    pairs
}

fn color_sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

impl GrabCutEnergy {
    pub fn new(frame: &RgbFrame, gmm: &FusedGmm, fixed_background: &[bool], gamma: f64) -> Result<Self> {
        if fixed_background.len() != frame.len() {
            return Err(Error::InvalidValue("fixed background mask has wrong size".into()));
        }
        if gmm.foreground.is_empty() || gmm.background.is_empty() {
            return Err(Error::Empty("mixture side"));
        }
        let px = frame.pixels();
        let mut fg_cost = Vec::with_capacity(px.len());
        let mut bg_cost = Vec::with_capacity(px.len());
        for (c, &fixed) in px.iter().zip(fixed_background) {
            fg_cost.push(if fixed {
                f64::INFINITY
            } else {
                -gmm_log_score(c, &gmm.foreground)
            });
            bg_cost.push(-gmm_log_score(c, &gmm.background));
        }

        let raw = neighbour_pairs(frame.width(), frame.height());
        let mean_sq = if raw.is_empty() {
            0.0
        } else {
            raw.iter().map(|&(p, q)| color_sq_dist(&px[p], &px[q])).sum::<f64>() / raw.len() as f64
        };
        let beta = if mean_sq > 0.0 { 1.0 / (2.0 * mean_sq) } else { 0.0 };
        let pairs = raw
            .into_iter()
            .map(|(p, q)| (p, q, gamma * (-beta * color_sq_dist(&px[p], &px[q])).exp()))
            .collect();
        Ok(GrabCutEnergy {
            width: frame.width(),
            height: frame.height(),
            fg_cost,
            bg_cost,
            pairs,
        })
    }

    pub fn evaluate(&self, foreground: &[bool]) -> f64 {
        let unary: f64 = foreground
            .iter()
            .enumerate()
            .map(|(i, &f)| if f { self.fg_cost[i] } else { self.bg_cost[i] })
            .sum();
        let pairwise: f64 = self
            .pairs
            .iter()
            .filter(|(p, q, _)| foreground[*p] != foreground[*q])
            .map(|(_, _, w)| w)
            .sum();
        unary + pairwise
    }

    /// Exact minimizer via a single s-t min cut.
    pub fn minimize(&self) -> ObjectMask {
        let n = self.fg_cost.len();
        let (s, t) = (n, n + 1);
        let mut net = FlowNetwork::new(n + 2);
        for i in 0..n {
            let (f, b) = (self.fg_cost[i], self.bg_cost[i]);
            if f.is_infinite() {
                net.add_edge(i, t, f64::INFINITY, 0.0);
                continue;
            }
            let m = f.min(b);
            // Source side is foreground: cutting s->i pays the background cost.
            if b - m > 0.0 {
                net.add_edge(s, i, b - m, 0.0);
            }
            if f - m > 0.0 {
                net.add_edge(i, t, f - m, 0.0);
            }
        }
        for &(p, q, w) in &self.pairs {
            if w > 0.0 {
                net.add_edge(p, q, w, w);
            }
        }
        net.max_flow(s, t);
        let side = net.source_side(s);
        ObjectMask {
            width: self.width,
            height: self.height,
            foreground: side[..n].to_vec(),
        }
    }
}

/// One graph-cut iteration with the fused mixtures; fixed background pixels
/// are hard-constrained to background.
pub fn grabcut_once(frame: &RgbFrame, gmm: &FusedGmm, fixed_background: &[bool], gamma: f64) -> Result<ObjectMask> {
    Ok(GrabCutEnergy::new(frame, gmm, fixed_background, gamma)?.minimize())
}
