//! Running the full localization pipeline over a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LinkUnits, RunConfig};
use super::manifest::{write_json, Manifest, VideoEntry};
use crate::cosaliency::hierarchy::HierarchyDump;
use crate::cosaliency::{compute_cosaliency, HierarchyParams};
use crate::cue::{build_trimap, reliability_score, CueKind, CueMap};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::geometry::BoundingBox;
use crate::gmm::{build_fused_gmm, grabcut_once, FusionParams, ObjectMask};
use crate::localization::{build_graph, shortest_path, LinkMetric, ProposalGraph};
use crate::proposals::{
    edge_map, generate_proposals, mask_specific_edges, EdgeMap, ProposalParams, ProposalRecord,
};
use crate::providers::{load_cue_map, motion_sequence, save_cue_map, spectral_saliency};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Reliability of each cue on a frame; absent cues are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CueReliability {
    pub cosaliency: Option<f64>,
    pub visual: Option<f64>,
    pub motion: Option<f64>,
}

impl CueReliability {
    pub fn get(&self, kind: CueKind) -> Option<f64> {
        match kind {
            CueKind::Cosaliency => self.cosaliency,
            CueKind::Visual => self.visual,
            CueKind::Motion => self.motion,
        }
    }

    fn set(&mut self, kind: CueKind, v: f64) {
        match kind {
            CueKind::Cosaliency => self.cosaliency = Some(v),
            CueKind::Visual => self.visual = Some(v),
            CueKind::Motion => self.motion = Some(v),
        }
    }
}

/// Where the mask that produced a frame's proposals came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    Own,
    /// Borrowed from the nearest usable frame because this frame's cues were degenerate.
    Inherited,
    /// No usable mask anywhere in the video; the whole frame is the only proposal.
    WholeFrame,
}

#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub frame_id: String,
    pub frame_path: PathBuf,
    pub ground_truth: Option<BoundingBox>,
    pub reliability: CueReliability,
    pub mask_source: MaskSource,
    pub proposals: Vec<BoundingBox>,
    pub mask: Option<ObjectMask>,
    pub cosaliency: Option<CueMap>,
}

/// A video after every per-frame stage, ready for box selection.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub video_id: String,
    pub label: Option<String>,
    pub width: usize,
    pub height: usize,
    /// Every frame of the video, in order.
    pub frame_ids: Vec<String>,
    pub frame_paths: Vec<PathBuf>,
    pub ground_truth: Vec<Option<BoundingBox>>,
    /// Indices into the frame list of the processed frames.
    pub sampled: Vec<usize>,
    /// One entry per sampled frame.
    pub frames: Vec<PreparedFrame>,
    pub graph: ProposalGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub video_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub videos: Vec<PreparedVideo>,
    pub failures: Vec<Failure>,
    pub hierarchies: Vec<(String, HierarchyDump)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: String,
    pub frame_path: String,
    /// False for frames skipped by the sampling stride, whose boxes are interpolated.
    pub sampled: bool,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub node_weight: Option<f64>,
    /// Cost of the path link entering this frame's node.
    pub link_cost: Option<f64>,
    pub reliability: Option<CueReliability>,
    pub mask_source: Option<MaskSource>,
    pub ground_truth: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub schema_version: u32,
    pub video_id: String,
    pub label: Option<String>,
    pub lambda: f64,
    pub total_cost: f64,
    /// Cost of the final link into the virtual target.
    pub exit_cost: f64,
    pub length_sum: f64,
    pub frames: Vec<FrameResult>,
}

impl VideoResult {
    pub fn load(path: &Path) -> Result<VideoResult> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FailureReport {
    pub schema_version: u32,
    pub failures: Vec<Failure>,
}

pub fn sampled_indices(n: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).step_by(stride.max(1)).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx
}

fn frame_seed(seed: u64, video: usize, frame: usize) -> u64 {
    seed ^ (video as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (frame as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn cue_reliability(map: &CueMap) -> Result<f64> {
    let t = build_trimap(map)?;
    Ok(reliability_score(map, &t)?.value())
}

/// Loaded frames and cue maps of one video, restricted to sampled frames.
struct LoadedVideo {
    index: usize,
    sampled: Vec<usize>,
    frames: Vec<RgbFrame>,
    cues: BTreeMap<CueKind, Vec<CueMap>>,
}

fn load_video(index: usize, video: &VideoEntry, config: &RunConfig) -> Result<LoadedVideo> {
    let sampled = sampled_indices(video.frames.len(), config.frame_sampling_stride);
    let frames: Vec<RgbFrame> = sampled
        .par_iter()
        .map(|&i| RgbFrame::load(&video.frames[i].frame_path))
        .collect::<Result<_>>()?;
    let dims = frames[0].dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: f.dims(),
        });
    }
    let mut cues = BTreeMap::new();
    for &kind in &config.cues {
        let supplied: Vec<Option<&PathBuf>> = sampled.iter().map(|&i| video.frames[i].cues.get(kind)).collect();
        let maps: Vec<CueMap> = match kind {
            CueKind::Visual => supplied
                .par_iter()
                .zip(&frames)
                .map(|(p, f)| match p {
                    Some(p) => load_cue_map(p, kind, dims),
                    None => spectral_saliency(f),
                })
                .collect::<Result<_>>()?,
            CueKind::Motion if supplied.iter().all(Option::is_some) => supplied
                .par_iter()
                .map(|p| load_cue_map(p.unwrap(), kind, dims))
                .collect::<Result<_>>()?,
            CueKind::Motion => {
                let computed = motion_sequence(&frames)?;
                supplied
                    .iter()
                    .zip(computed)
                    .map(|(p, m)| match p {
                        Some(p) => load_cue_map(p, kind, dims),
                        None => Ok(m),
                    })
                    .collect::<Result<_>>()?
            }
            // Filled per group once every video is loaded.
            CueKind::Cosaliency => Vec::new(),
        };
        cues.insert(kind, maps);
    }
    Ok(LoadedVideo {
        index,
        sampled,
        frames,
        cues,
    })
}

/// Co-saliency for every sampled frame of a group. Supplied maps win; the
/// others come from a hierarchy built over the whole group.
fn group_cosaliency(
    name: &str,
    manifest: &Manifest,
    videos: &mut [LoadedVideo],
    config: &RunConfig,
) -> Result<Option<HierarchyDump>> {
    let supplied = |v: &LoadedVideo, j: usize| manifest.videos[v.index].frames[v.sampled[j]].cues.cosaliency.clone();
    let all_supplied = videos
        .iter()
        .all(|v| (0..v.sampled.len()).all(|j| supplied(v, j).is_some()));
    let mut dump = None;
    let mut computed: Vec<Vec<CueMap>> = Vec::new();
    if !all_supplied {
        let frames: Vec<RgbFrame> = videos.iter().flat_map(|v| v.frames.iter().cloned()).collect();
        let mut base = Vec::with_capacity(frames.len());
        for v in videos.iter() {
            match v.cues.get(&CueKind::Visual) {
                Some(maps) => base.extend(maps.iter().cloned()),
                None => {
                    for f in &v.frames {
                        base.push(spectral_saliency(f)?);
                    }
                }
            }
        }
        let params = HierarchyParams {
            min_size: config.hierarchy_min_size,
            var_threshold: config.var_threshold,
            seed: config.seed,
        };
        let (h, descriptors, maps) = compute_cosaliency(&frames, &base, params)?;
        info!("group {name}: hierarchy levels {:?}", h.levels.iter().map(Vec::len).collect::<Vec<_>>());
        let names: Vec<String> = videos
            .iter()
            .flat_map(|v| {
                let entry = &manifest.videos[v.index];
                v.sampled.iter().map(move |&i| format!("{}/{}", entry.video_id, entry.frame_id(i)))
            })
            .collect();
        dump = Some(h.dump(&names, &descriptors));
        let mut rest = maps.into_iter();
        for v in videos.iter() {
            computed.push(rest.by_ref().take(v.sampled.len()).collect());
        }
    }
    for (vi, v) in videos.iter_mut().enumerate() {
        let dims = v.frames[0].dims();
        let mut maps = Vec::with_capacity(v.sampled.len());
        for j in 0..v.sampled.len() {
            maps.push(match supplied(v, j) {
                Some(p) => load_cue_map(&p, CueKind::Cosaliency, dims)?,
                None => computed[vi][j].clone(),
            });
        }
        v.cues.insert(CueKind::Cosaliency, maps);
    }
    Ok(dump)
}

struct FrameAnalysis {
    mask: Option<ObjectMask>,
    edges: EdgeMap,
    reliability: CueReliability,
}

fn analyze_frame(frame: &RgbFrame, cues: &[CueMap], config: &RunConfig) -> Result<FrameAnalysis> {
    let mut reliability = CueReliability::default();
    for m in cues {
        reliability.set(m.kind(), cue_reliability(m)?);
    }
    let fusion = build_fused_gmm(
        frame,
        cues,
        FusionParams {
            n_components: config.n_components,
            seed: config.seed,
        },
    );
    let mask = match fusion {
        Ok(f) => {
            let m = grabcut_once(frame, &f.gmm, &f.fixed_background, config.gamma)?;
            (m.foreground_count() > 0).then_some(m)
        }
        Err(Error::DegenerateFrame(msg)) => {
            debug!("degenerate frame: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(FrameAnalysis {
        mask,
        edges: edge_map(frame),
        reliability,
    })
}

fn proposals_for(mask: &ObjectMask, edges: &EdgeMap, params: ProposalParams) -> Result<Vec<BoundingBox>> {
    let ms = mask_specific_edges(mask, edges)?;
    generate_proposals(mask, &ms, params)
}

fn prepare_video(
    manifest: &Manifest,
    loaded: LoadedVideo,
    config: &RunConfig,
) -> Result<PreparedVideo> {
    let entry = &manifest.videos[loaded.index];
    let (width, height) = loaded.frames[0].dims();
    let n = loaded.sampled.len();
    let analyses: Vec<FrameAnalysis> = (0..n)
        .into_par_iter()
        .map(|j| {
            let cues: Vec<CueMap> = config.cues.iter().map(|k| loaded.cues[k][j].clone()).collect();
            analyze_frame(&loaded.frames[j], &cues, config)
        })
        .collect::<Result<_>>()?;

    let frames: Vec<PreparedFrame> = (0..n)
        .into_par_iter()
        .map(|j| {
            let i = loaded.sampled[j];
            let params = ProposalParams {
                max_samples: config.max_samples,
                max_proposals: config.max_proposals,
                seed: frame_seed(config.seed, loaded.index, i),
            };
            // Own mask first, then earlier frames nearest first, then later ones.
            let order = std::iter::once(j).chain((0..j).rev()).chain(j + 1..n);
            let mut found = None;
            for k in order {
                if let Some(mask) = &analyses[k].mask {
                    match proposals_for(mask, &analyses[j].edges, params) {
                        Ok(p) => {
                            found = Some((k, p));
                            break;
                        }
                        Err(e) => debug!("{} frame {i} with mask of {k}: {e}", entry.video_id),
                    }
                }
            }
            let (mask_source, proposals, mask) = match found {
                Some((k, p)) if k == j => (MaskSource::Own, p, analyses[k].mask.clone()),
                Some((k, p)) => (MaskSource::Inherited, p, analyses[k].mask.clone()),
                None => {
                    warn!("{} frame {}: no usable mask, using the whole frame", entry.video_id, entry.frame_id(i));
                    let whole = BoundingBox::new(0, height - 1, 0, width - 1)?;
                    (MaskSource::WholeFrame, vec![whole], None)
                }
            };
            Ok(PreparedFrame {
                frame_id: entry.frame_id(i),
                frame_path: entry.frames[i].frame_path.clone(),
                ground_truth: entry.frames[i].ground_truth,
                reliability: analyses[j].reliability,
                mask_source,
                proposals,
                mask: if config.save_intermediates { mask } else { None },
                cosaliency: if config.save_intermediates {
                    loaded.cues.get(&CueKind::Cosaliency).map(|m| m[j].clone())
                } else {
                    None
                },
            })
        })
        .collect::<Result<_>>()?;

    let layers: Vec<Vec<BoundingBox>> = frames.iter().map(|f| f.proposals.clone()).collect();
    let references: Vec<f64> = layers
        .iter()
        .map(|l| l.iter().map(BoundingBox::perimeter).max().unwrap_or(0) as f64)
        .collect();
    let metric = match config.link_units {
        LinkUnits::Pixels => LinkMetric::Pixels,
        LinkUnits::FrameRelative => LinkMetric::FrameRelative { width, height },
    };
    let graph = build_graph(&layers, &references, metric)?;
    Ok(PreparedVideo {
        video_id: entry.video_id.clone(),
        label: entry.label.clone(),
        width,
        height,
        frame_ids: (0..entry.frames.len()).map(|i| entry.frame_id(i)).collect(),
        frame_paths: entry.frames.iter().map(|f| f.frame_path.clone()).collect(),
        ground_truth: entry.frames.iter().map(|f| f.ground_truth).collect(),
        sampled: loaded.sampled,
        frames,
        graph,
    })
}

/// Every stage up to and including the proposal graphs. Failing videos are
/// recorded and skipped.
pub fn prepare(manifest: &Manifest, config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    manifest.validate()?;
    let mut failures = Vec::new();
    let mut videos = Vec::new();
    let mut hierarchies = Vec::new();
    for (name, members) in manifest.groups() {
        let mut loaded = Vec::new();
        for &vi in &members {
            match load_video(vi, &manifest.videos[vi], config) {
                Ok(v) => loaded.push(v),
                Err(e) => {
                    warn!("{}: {e}", manifest.videos[vi].video_id);
                    failures.push(Failure {
                        video_id: manifest.videos[vi].video_id.clone(),
                        stage: "load".into(),
                        message: e.to_string(),
                    });
                }
            }
        }
        if loaded.is_empty() {
            continue;
        }
        if config.cues.contains(&CueKind::Cosaliency) {
            match group_cosaliency(&name, manifest, &mut loaded, config) {
                Ok(Some(dump)) => hierarchies.push((name.clone(), dump)),
                Ok(None) => {}
                Err(e) => {
                    for v in &loaded {
                        failures.push(Failure {
                            video_id: manifest.videos[v.index].video_id.clone(),
                            stage: "cosaliency".into(),
                            message: e.to_string(),
                        });
                    }
                    continue;
                }
            }
        }
        let results: Vec<(usize, Result<PreparedVideo>)> = loaded
            .into_par_iter()
            .map(|v| (v.index, prepare_video(manifest, v, config)))
            .collect();
        for (vi, r) in results {
            match r {
                Ok(v) => videos.push(v),
                Err(e) => {
                    warn!("{}: {e}", manifest.videos[vi].video_id);
                    failures.push(Failure {
                        video_id: manifest.videos[vi].video_id.clone(),
                        stage: "localize".into(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    // Manifest order regardless of grouping.
    let order: BTreeMap<&str, usize> = manifest
        .videos
        .iter()
        .enumerate()
        .map(|(i, v)| (v.video_id.as_str(), i))
        .collect();
    videos.sort_by_key(|v| order[v.video_id.as_str()]);
    failures.sort_by_key(|f| order[f.video_id.as_str()]);
    Ok(Prepared {
        videos,
        failures,
        hierarchies,
    })
}

fn interpolate(a: &BoundingBox, b: &BoundingBox, t: f64) -> BoundingBox {
    let lerp = |x: usize, y: usize| (x as f64 + (y as f64 - x as f64) * t).round() as usize;
    BoundingBox {
        top: lerp(a.top, b.top),
        bottom: lerp(a.bottom, b.bottom),
        left: lerp(a.left, b.left),
        right: lerp(a.right, b.right),
    }
}

/// Shortest-path box selection for one prepared video.
pub fn select_video(video: &PreparedVideo, lambda: f64) -> Result<VideoResult> {
    let sel = shortest_path(&video.graph, lambda)?;
    let chosen: Vec<BoundingBox> = sel
        .z
        .iter()
        .enumerate()
        .map(|(j, &z)| video.graph.node(j, z).bbox)
        .collect();
    let mut frames = Vec::with_capacity(video.frame_ids.len());
    let mut next = 0usize;
    for i in 0..video.frame_ids.len() {
        while video.sampled[next] < i {
            next += 1;
        }
        let (bbox, sampled) = if video.sampled[next] == i {
            (chosen[next], Some(next))
        } else {
            let (a, b) = (video.sampled[next - 1], video.sampled[next]);
            let t = (i - a) as f64 / (b - a) as f64;
            (interpolate(&chosen[next - 1], &chosen[next], t), None)
        };
        frames.push(FrameResult {
            frame_id: video.frame_ids[i].clone(),
            frame_path: video.frame_paths[i].display().to_string(),
            sampled: sampled.is_some(),
            bbox,
            node_weight: sampled.map(|j| video.graph.node(j, sel.z[j]).weight),
            link_cost: sampled.map(|j| sel.link_costs[j]),
            reliability: sampled.map(|j| video.frames[j].reliability),
            mask_source: sampled.map(|j| video.frames[j].mask_source),
            ground_truth: video.ground_truth[i],
        });
    }
    Ok(VideoResult {
        schema_version: RESULT_SCHEMA_VERSION,
        video_id: video.video_id.clone(),
        label: video.label.clone(),
        lambda,
        total_cost: sel.total_cost,
        exit_cost: *sel.link_costs.last().unwrap(),
        length_sum: sel.length_sum,
        frames,
    })
}

pub fn select(prepared: &Prepared, lambda: f64) -> Result<Vec<VideoResult>> {
    prepared.videos.par_iter().map(|v| select_video(v, lambda)).collect()
}

/// Results written by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: Vec<VideoResult>,
    pub failures: Vec<Failure>,
}

pub fn video_result_path(out: &Path, video_id: &str) -> PathBuf {
    out.join("videos").join(format!("{video_id}.json"))
}

/// Write per-video results, failures, hierarchy dumps and proposal lists.
pub fn write_outputs(out: &Path, prepared: &Prepared, results: &[VideoResult]) -> Result<()> {
    fs::create_dir_all(out.join("videos")).map_err(|e| Error::io(out, e))?;
    for r in results {
        write_json(&video_result_path(out, &r.video_id), r)?;
    }
    write_json(
        &out.join("failures.json"),
        &FailureReport {
            schema_version: RESULT_SCHEMA_VERSION,
            failures: prepared.failures.clone(),
        },
    )?;
    for (name, dump) in &prepared.hierarchies {
        write_json(&out.join("hierarchy").join(format!("{name}.json")), dump)?;
    }
    for v in &prepared.videos {
        #[derive(Serialize)]
        struct FrameProposals<'a> {
            frame_id: &'a str,
            proposals: Vec<ProposalRecord>,
        }
        let records: Vec<FrameProposals> = v
            .frames
            .iter()
            .map(|f| FrameProposals {
                frame_id: &f.frame_id,
                proposals: f.proposals.iter().map(ProposalRecord::from).collect(),
            })
            .collect();
        write_json(&out.join("proposals").join(format!("{}.json", v.video_id)), &records)?;
        for f in &v.frames {
            if let Some(m) = &f.mask {
                let dir = out.join("masks").join(&v.video_id);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                m.save_png(&dir.join(format!("{}.png", f.frame_id)))?;
            }
            if let Some(c) = &f.cosaliency {
                let dir = out.join("cosaliency").join(&v.video_id);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                save_cue_map(c, &dir.join(format!("{}.bin", f.frame_id)))?;
            }
        }
    }
    Ok(())
}

/// Full pipeline: prepare, select with `config.lambda`, write into `out`.
pub fn run(manifest: &Manifest, config: &RunConfig, out: &Path) -> Result<RunOutput> {
    let prepared = prepare(manifest, config)?;
    let results = select(&prepared, config.lambda)?;
    write_outputs(out, &prepared, &results)?;
    Ok(RunOutput {
        results,
        failures: prepared.failures,
    })
}
