use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use coloc_core::cue::CueKind;
use coloc_core::geometry::BoundingBox;
use coloc_core::gmm::ObjectMask;
use coloc_core::pipeline::run::{MaskSource, VideoResult};
use coloc_core::pipeline::synth::synth_video;
use coloc_core::pipeline::{
    corloc, prepare, run, select, synth_dataset, GroundTruth, Manifest, RunConfig, SynthSpec,
};
use coloc_core::proposals::{edge_map, mask_specific_edges, reference_box};
use coloc_core::providers::{motion_sequence, MOTION_BLOCK};
use proptest::prelude::*;

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_videos: 2,
        frames_per_video: 12,
        ..Default::default()
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_dataset(&small_spec(), &tmp.path().join("data")).unwrap();
    let manifest = Manifest::load(&data.manifest_path).unwrap();
    let config = RunConfig::default();
    run(&manifest, &config, &tmp.path().join("a")).unwrap();
    run(&manifest, &config, &tmp.path().join("b")).unwrap();
    let (a, b) = (read_tree(&tmp.path().join("a")), read_tree(&tmp.path().join("b")));
    assert!(a.keys().any(|k| k.ends_with(".json")));
    assert_eq!(a, b);
}

#[test]
fn every_frame_gets_one_box_with_stride() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_dataset(&small_spec(), &tmp.path().join("data")).unwrap();
    let manifest = Manifest::load(&data.manifest_path).unwrap();
    let config = RunConfig {
        frame_sampling_stride: 5,
        ..Default::default()
    };
    let out = tmp.path().join("out");
    run(&manifest, &config, &out).unwrap();
    for video in &manifest.videos {
        let result = VideoResult::load(&out.join("videos").join(format!("{}.json", video.video_id))).unwrap();
        assert_eq!(result.frames.len(), video.frames.len());
        let sampled: Vec<usize> = (0..result.frames.len()).filter(|&i| result.frames[i].sampled).collect();
        assert_eq!(sampled, vec![0, 5, 10, 11]);
        for (i, f) in result.frames.iter().enumerate() {
            assert_eq!(f.frame_id, video.frame_id(i));
        }
    }
}

#[test]
fn single_frame_selects_reference_box() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_videos: 1,
        frames_per_video: 3,
        ..Default::default()
    };
    let data = synth_dataset(&spec, &tmp.path().join("data")).unwrap();
    let mut manifest = Manifest::load(&data.manifest_path).unwrap();
    manifest.videos[0].frames.truncate(1);

    let config = RunConfig {
        save_intermediates: true,
        ..Default::default()
    };
    let prepared = prepare(&manifest, &config).unwrap();
    let frame = &prepared.videos[0].frames[0];
    assert_eq!(frame.mask_source, MaskSource::Own);
    let mask: &ObjectMask = frame.mask.as_ref().unwrap();
    let image = coloc_core::frame::RgbFrame::load(&manifest.videos[0].frames[0].frame_path).unwrap();
    let expected = reference_box(&mask_specific_edges(mask, &edge_map(&image)).unwrap()).unwrap();

    let results = select(&prepared, 5.0).unwrap();
    assert_eq!(results[0].frames.len(), 1);
    assert_eq!(results[0].frames[0].bbox, expected);
    assert_eq!(results[0].frames[0].node_weight, Some(1.0));
}

#[test]
fn ground_truth_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let data = synth_dataset(&spec, tmp.path()).unwrap();
    let loaded = GroundTruth::load(&data.ground_truth_path).unwrap();
    assert_eq!(loaded, data.ground_truth);
    for (v, video) in data.manifest.videos.iter().enumerate() {
        let (_, boxes) = synth_video(&spec, v).unwrap();
        let stored = &loaded.videos[&video.video_id];
        assert_eq!(stored.len(), boxes.len());
        for (i, b) in boxes.iter().enumerate() {
            assert_eq!(stored[&video.frame_id(i)], *b);
        }
    }
}

#[test]
fn motion_peaks_on_the_object_without_noise() {
    for scale_change in [0.0, 0.6] {
        let spec = SynthSpec {
            frames_per_video: 20,
            noise: 0.0,
            scale_change,
            ..Default::default()
        };
        for v in 0..3 {
            let (frames, boxes) = synth_video(&spec, v).unwrap();
            let maps = motion_sequence(&frames).unwrap();
            for (t, m) in maps.iter().enumerate() {
                // Map t compares frames t - 1 and t; the first map repeats the second.
                let pair = if t == 0 { [boxes[0], boxes[1]] } else { [boxes[t - 1], boxes[t]] };
                let values = m.values();
                let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(peak > 0.0, "video {v} frame {t}: flat motion map");
                // Maps are painted per block, so a peak block only has to overlap a box.
                for (i, &val) in values.iter().enumerate() {
                    if val == peak {
                        let (row, col) = (i / m.width(), i % m.width());
                        let (r0, c0) = (row - row % MOTION_BLOCK, col - col % MOTION_BLOCK);
                        let overlaps = pair.iter().any(|b| {
                            r0 <= b.bottom && b.top < r0 + MOTION_BLOCK && c0 <= b.right && b.left < c0 + MOTION_BLOCK
                        });
                        assert!(overlaps, "video {v} frame {t}: peak block at ({r0}, {c0}) misses {pair:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn static_object_has_no_motion_reliability() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_videos: 1,
        frames_per_video: 8,
        motion: 0.0,
        scale_change: 0.0,
        ..Default::default()
    };
    let (frames, _) = synth_video(&spec, 0).unwrap();
    for m in motion_sequence(&frames).unwrap() {
        assert!(m.values().iter().all(|&v| v == 0.0));
    }
    let data = synth_dataset(&spec, tmp.path()).unwrap();
    let manifest = Manifest::load(&data.manifest_path).unwrap();
    let prepared = prepare(&manifest, &RunConfig::default()).unwrap();
    for f in &prepared.videos[0].frames {
        let psi = f.reliability.get(CueKind::Motion).unwrap();
        assert!(psi < 1e-9, "motion reliability {psi}");
        assert!(f.reliability.get(CueKind::Visual).unwrap() > 0.0);
    }
}

fn boxes() -> impl Strategy<Value = BoundingBox> {
    (0usize..200, 0usize..100, 0usize..200, 0usize..100)
        .prop_map(|(t, h, l, w)| BoundingBox::new(t, t + h, l, l + w).unwrap())
}

proptest! {
    #[test]
    fn corloc_ignores_uniform_rescaling(
        pairs in prop::collection::vec((prop::option::of(boxes()), boxes()), 1..30),
        k in 2usize..6,
    ) {
        let scale = |b: &BoundingBox| BoundingBox::new(b.top * k, b.bottom * k, b.left * k, b.right * k).unwrap();
        let scaled: Vec<_> = pairs.iter().map(|(p, g)| (p.as_ref().map(scale), scale(g))).collect();
        prop_assert_eq!(corloc(&pairs), corloc(&scaled));
    }
}
