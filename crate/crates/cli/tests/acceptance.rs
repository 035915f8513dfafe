//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use coloc_core::cue::{
    build_trimap, consensus_reliability_map, otsu_threshold, CueKind, CueMap, Label, ReliabilityScore, TriMap,
};
use coloc_core::frame::RgbFrame;
use coloc_core::geometry::BoundingBox;
use coloc_core::gmm::{
    build_fused_gmm, component_weight, grabcut_once, ComponentOrigin, FusedGmm, FusionParams, GmmComponent, Side,
};
use coloc_core::localization::{build_graph, link_cost, path_cost, shortest_path, LinkMetric, ProposalGraph};
use coloc_core::pipeline::synth::synth_video;
use coloc_core::pipeline::{evaluate_results, prepare, select, Manifest, Prepared, RunConfig, SynthSpec};
use coloc_core::proposals::{distance_transform, EdgeMap};
use coloc_core::providers::{motion_sequence, spectral_saliency};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- oracles

fn otsu_oracle(values: &[f64]) -> f64 {
    let bin = |v: f64| ((v * 256.0) as usize).min(255);
    let center = |i: usize| (i as f64 + 0.5) / 256.0;
    let n = values.len() as f64;
    let mut scores = Vec::new();
    for i in 0..255 {
        let lower: Vec<f64> = values.iter().filter(|&&v| bin(v) <= i).map(|&v| center(bin(v))).collect();
        let upper: Vec<f64> = values.iter().filter(|&&v| bin(v) > i).map(|&v| center(bin(v))).collect();
        if lower.is_empty() || upper.is_empty() {
            continue;
        }
        let m0 = lower.iter().sum::<f64>() / lower.len() as f64;
        let m1 = upper.iter().sum::<f64>() / upper.len() as f64;
        let var = (lower.len() as f64 / n) * (upper.len() as f64 / n) * (m0 - m1).powi(2);
        scores.push((i, var));
    }
    if scores.is_empty() {
        return if values.iter().all(|&v| v == values[0]) {
            values[0]
        } else {
            values.iter().sum::<f64>() / n
        };
    }
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let i = scores.iter().find(|s| s.1 * (1.0 + 1e-12) >= best).unwrap().0;
    (i + 1) as f64 / 256.0
}

fn random_map(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(4..40) * rng.gen_range(4..40);
    match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.gen::<f64>()).collect(),
        1 => {
            let modes: Vec<(f64, f64)> = (0..rng.gen_range(1..5))
                .map(|_| (rng.gen::<f64>(), rng.gen_range(0.005..0.15)))
                .collect();
            (0..n)
                .map(|_| {
                    let (m, s) = modes[rng.gen_range(0..modes.len())];
                    (m + s * (rng.gen::<f64>() - 0.5) * 3.4).clamp(0.0, 1.0)
                })
                .collect()
        }
        _ => {
            let levels = rng.gen_range(1..6);
            (0..n).map(|_| rng.gen_range(0..levels) as f64 / (levels.max(2) - 1) as f64).collect()
        }
    }
}

fn check_otsu(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..100 {
        let values = random_map(rng);
        let n = values.len();
        let map = CueMap::new(n, 1, values.clone(), CueKind::Visual).map_err(|e| e.to_string())?;
        let got = otsu_threshold(&map).map_err(|e| e.to_string())?;
        let want = otsu_oracle(&values);
        ensure(got == want, || format!("otsu case {case}: {got} vs oracle {want}"))?;
    }
    Ok(())
}

fn check_distance_transform(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..50 {
        let density = rng.gen_range(0.002..0.3);
        let mut flags: Vec<bool> = (0..32 * 32).map(|_| rng.gen::<f64>() < density).collect();
        if !flags.iter().any(|&f| f) {
            flags[rng.gen_range(0..32 * 32)] = true;
        }
        let points: Vec<(usize, usize)> = (0..32 * 32).filter(|&i| flags[i]).map(|i| (i / 32, i % 32)).collect();
        let edges = EdgeMap::new(32, 32, flags).map_err(|e| e.to_string())?;
        let dt = distance_transform(&edges).map_err(|e| e.to_string())?;
        for r in 0..32 {
            for c in 0..32 {
                let d2 = points
                    .iter()
                    .map(|&(pr, pc)| {
                        let (dr, dc) = (pr as i64 - r as i64, pc as i64 - c as i64);
                        dr * dr + dc * dc
                    })
                    .min()
                    .unwrap();
                let want = (d2 as f64).sqrt();
                let got = dt.distance(r, c);
                ensure(got == want, || format!("dt case {case} at ({r},{c}): {got} vs {want}"))?;
                let (nr, nc) = dt.nearest(r, c);
                let (dr, dc) = (nr as i64 - r as i64, nc as i64 - c as i64);
                ensure(points.contains(&(nr, nc)) && dr * dr + dc * dc == d2, || {
                    format!("dt case {case} at ({r},{c}): nearest ({nr},{nc}) is not a closest edge")
                })?;
            }
        }
    }
    Ok(())
}

/// A Gaussian kept as plain arrays so the oracle evaluates it without the library.
struct OracleGaussian {
    weight: f64,
    mean: [f64; 3],
    cov: [[f64; 3]; 3],
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3(m);
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            // Adjugate: cofactor of (j, i).
            let (r0, r1) = ([1, 0, 0][j], [2, 2, 1][j]);
            let (c0, c1) = ([1, 0, 0][i], [2, 2, 1][i]);
            let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            *v = sign * minor / d;
        }
    }
    out
}

fn mixture_density(x: &[f64; 3], parts: &[OracleGaussian]) -> f64 {
    parts
        .iter()
        .map(|g| {
            let p = inv3(&g.cov);
            let d = [x[0] - g.mean[0], x[1] - g.mean[1], x[2] - g.mean[2]];
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += d[i] * p[i][j] * d[j];
                }
            }
            g.weight * (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(3) * det3(&g.cov)).sqrt()
        })
        .sum()
}

fn random_gaussians(rng: &mut ChaCha8Rng, count: usize) -> Vec<OracleGaussian> {
    let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|w| {
            let a: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let mut cov = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] = (0..3).map(|k| a[i * 3 + k] * a[j * 3 + k]).sum::<f64>();
                }
                cov[i][i] += 0.01;
            }
            OracleGaussian {
                weight: w / total,
                mean: [rng.gen(), rng.gen(), rng.gen()],
                cov,
            }
        })
        .collect()
}

fn to_components(parts: &[OracleGaussian], side: Side) -> Vec<GmmComponent> {
    parts
        .iter()
        .enumerate()
        .map(|(index, g)| {
            let mut c = GmmComponent::new(
                Vector3::from(g.mean),
                Matrix3::from_fn(|i, j| g.cov[i][j]),
                g.weight,
                ComponentOrigin { cue: 0, index, side },
            )
            .unwrap();
            c.weight = g.weight;
            c
        })
        .collect()
}

fn grabcut_oracle_energy(
    px: &[[f64; 3]],
    fg: &[OracleGaussian],
    bg: &[OracleGaussian],
    fixed: &[bool],
    gamma: f64,
    labels: &[bool],
) -> f64 {
    let mut pairs = Vec::new();
    for a in 0..9usize {
        for b in a + 1..9 {
            let (dr, dc) = ((a / 3) as i64 - (b / 3) as i64, (a % 3) as i64 - (b % 3) as i64);
            if dr.abs() <= 1 && dc.abs() <= 1 {
                pairs.push((a, b));
            }
        }
    }
    let sq = |a: usize, b: usize| (0..3).map(|c| (px[a][c] - px[b][c]).powi(2)).sum::<f64>();
    let mean_sq = pairs.iter().map(|&(a, b)| sq(a, b)).sum::<f64>() / pairs.len() as f64;
    let beta = if mean_sq > 0.0 { 0.5 / mean_sq } else { 0.0 };
    let mut e = 0.0;
    for i in 0..9 {
        e += if labels[i] {
            if fixed[i] {
                f64::INFINITY
            } else {
                -mixture_density(&px[i], fg).ln()
            }
        } else {
            -mixture_density(&px[i], bg).ln()
        };
    }
    for &(a, b) in &pairs {
        if labels[a] != labels[b] {
            e += gamma * (-beta * sq(a, b)).exp();
        }
    }
    e
}

fn check_grabcut(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..20 {
        let (nf, nb) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let fg = random_gaussians(rng, nf);
        let bg = random_gaussians(rng, nb);
        let px: Vec<[f64; 3]> = (0..9)
            .map(|_| {
                let src = if rng.gen_bool(0.5) { &fg } else { &bg };
                let m = src[rng.gen_range(0..src.len())].mean;
                [0, 1, 2].map(|c| (m[c] + rng.gen_range(-0.15..0.15)).clamp(0.0, 1.0))
            })
            .collect();
        let fixed: Vec<bool> = (0..9).map(|_| rng.gen_bool(0.15)).collect();
        let gamma = if case % 4 == 0 { 50.0 } else { rng.gen_range(0.05..5.0) };
        let frame = RgbFrame::new(3, 3, px.clone()).map_err(|e| e.to_string())?;
        let gmm = FusedGmm {
            foreground: to_components(&fg, Side::Foreground),
            background: to_components(&bg, Side::Background),
        };
        let mask = grabcut_once(&frame, &gmm, &fixed, gamma).map_err(|e| e.to_string())?;
        let best = (0..512u32)
            .map(|bits| {
                let labels: Vec<bool> = (0..9).map(|i| bits >> i & 1 == 1).collect();
                grabcut_oracle_energy(&px, &fg, &bg, &fixed, gamma, &labels)
            })
            .fold(f64::INFINITY, f64::min);
        let got = grabcut_oracle_energy(&px, &fg, &bg, &fixed, gamma, mask.foreground());
        ensure(close(got, best, 1e-9), || format!("grabcut case {case}: energy {got} vs minimum {best}"))?;
    }
    Ok(())
}

fn oracle_length(metric: LinkMetric, a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (sh, sw) = match metric {
        LinkMetric::Pixels => (1.0, 1.0),
        LinkMetric::FrameRelative { width, height } => (height as f64, width as f64),
    };
    let d = [
        (a.top as f64 - b.top as f64) / sh,
        (a.bottom as f64 - b.bottom as f64) / sh,
        (a.left as f64 - b.left as f64) / sw,
        (a.right as f64 - b.right as f64) / sw,
    ];
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let top = rng.gen_range(0..40);
    let left = rng.gen_range(0..40);
    BoundingBox::new(top, top + rng.gen_range(1..30), left, left + rng.gen_range(1..30)).unwrap()
}

fn check_shortest_path(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..100 {
        let layers: Vec<Vec<BoundingBox>> = (0..4).map(|_| (0..3).map(|_| random_box(rng)).collect()).collect();
        let refs: Vec<f64> = layers
            .iter()
            .map(|l| l.iter().map(|b| b.perimeter()).max().unwrap() as f64 + rng.gen_range(0.0..20.0))
            .collect();
        let metric = if case % 2 == 0 {
            LinkMetric::Pixels
        } else {
            LinkMetric::FrameRelative { width: 80, height: 60 }
        };
        let lambda = if case % 10 == 0 { 0.0 } else { rng.gen_range(0.0..10.0) };
        let graph = build_graph(&layers, &refs, metric).map_err(|e| e.to_string())?;
        let result = shortest_path(&graph, lambda).map_err(|e| e.to_string())?;

        let h = |f: usize, i: usize| layers[f][i].perimeter() as f64 / refs[f];
        let cost_of = |z: &[usize]| {
            let mut c = -h(0, z[0]).ln() - h(3, z[3]).ln();
            for f in 0..3 {
                c += -(h(f, z[f]) * h(f + 1, z[f + 1])).ln()
                    + lambda * oracle_length(metric, &layers[f][z[f]], &layers[f + 1][z[f + 1]]);
            }
            c
        };
        let mut best = f64::INFINITY;
        for code in 0..81 {
            let z = [code % 3, code / 3 % 3, code / 9 % 3, code / 27];
            best = best.min(cost_of(&z));
        }
        ensure(close(result.total_cost, best, 1e-9), || {
            format!("path case {case}: cost {} vs enumeration {best}", result.total_cost)
        })?;
        ensure(close(cost_of(&result.z), best, 1e-9), || format!("path case {case}: z {:?} not optimal", result.z))?;
    }
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    check_otsu(&mut rng)?;
    check_distance_transform(&mut rng)?;
    check_grabcut(&mut rng)?;
    check_shortest_path(&mut rng)?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "100 otsu, 50 distance transforms, 20 grabcuts, 100 paths match their oracles in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------- consensus weights

fn consensus_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let all = [Label::Foreground, Label::Background, Label::Unknown];
    let sign = |l: Label| match l {
        Label::Foreground => 1.0,
        Label::Background => -1.0,
        Label::Unknown => 0.0,
    };
    let mut checked = 0usize;
    for cues in 1..=3usize {
        let combos = 3usize.pow(cues as u32);
        // Pixel p carries the p-th label combination across the cues.
        let label = |p: usize, k: usize| all[p / 3usize.pow(k as u32) % 3];
        let trimaps: Vec<TriMap> = (0..cues)
            .map(|k| TriMap::new(combos, 1, (0..combos).map(|p| label(p, k)).collect()).unwrap())
            .collect();
        for trial in 0..60 {
            let psi: Vec<f64> = (0..cues)
                .map(|_| match trial {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen::<f64>(),
                })
                .collect();
            let scores: Vec<ReliabilityScore> = psi.iter().map(|&v| ReliabilityScore::new(v).unwrap()).collect();
            let x = consensus_reliability_map(&trimaps, &scores).map_err(|e| e.to_string())?;
            let total: f64 = psi.iter().sum();
            let mut normalized = Vec::with_capacity(combos);
            for p in 0..combos {
                let want: f64 = (0..cues).map(|k| sign(label(p, k)) * psi[k]).sum();
                let want_hat = if total > 0.0 { want / total } else { 0.0 };
                normalized.push(want_hat);
                ensure((x.values()[p] - want).abs() <= 1e-12, || {
                    format!("X at combo {p} with {cues} cues: {} vs {want}", x.values()[p])
                })?;
                ensure((x.normalized(p) - want_hat).abs() <= 1e-12, || format!("normalized X at combo {p}"))?;
                let fg = component_weight(Side::Foreground, &x, &[p]);
                let bg = component_weight(Side::Background, &x, &[p]);
                ensure((fg - 0.5 * (1.0 + want_hat)).abs() <= 1e-12, || format!("fg weight at combo {p}"))?;
                ensure((bg - 0.5 * (1.0 - want_hat)).abs() <= 1e-12, || format!("bg weight at combo {p}"))?;
                checked += 1;
            }
            // A component spanning random member pixels uses their mean.
            let members: Vec<usize> = (0..combos).filter(|_| rng.gen_bool(0.5)).collect();
            if !members.is_empty() {
                let mean = members.iter().map(|&p| normalized[p]).sum::<f64>() / members.len() as f64;
                let fg = component_weight(Side::Foreground, &x, &members);
                let bg = component_weight(Side::Background, &x, &members);
                ensure((fg - 0.5 * (1.0 + mean)).abs() <= 1e-12, || "fg weight over member set".into())?;
                ensure((bg - 0.5 * (1.0 - mean)).abs() <= 1e-12, || "bg weight over member set".into())?;
            }
        }
    }
    Ok(format!("{checked} label combinations over 1 to 3 cues agree to 1e-12"))
}

// -------------------------------------------------------------- invariants

fn trimap_invariants(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for case in 0..200 {
        let values = random_map(rng);
        let n = values.len();
        let map = CueMap::new(n, 1, values.clone(), CueKind::Motion).map_err(|e| e.to_string())?;
        let t = build_trimap(&map).map_err(|e| e.to_string())?;
        let counts = [Label::Foreground, Label::Background, Label::Unknown].map(|l| t.count(l));
        ensure(counts.iter().sum::<usize>() == n, || format!("trimap case {case}: counts {counts:?} over {n}"))?;
        let min_fg = t.indices_of(Label::Foreground).iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        let max_bg = t.indices_of(Label::Background).iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
        ensure(max_bg < min_fg, || format!("trimap case {case}: background value above foreground"))?;
    }
    Ok(200)
}

fn fusion_invariants(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let spec = SynthSpec {
        n_videos: 1,
        frames_per_video: 6,
        ..Default::default()
    };
    let (frames, _) = synth_video(&spec, 2).map_err(|e| e.to_string())?;
    let motion = motion_sequence(&frames).map_err(|e| e.to_string())?;
    let mut fused = 0;
    for (f, m) in frames.iter().zip(&motion) {
        let visual = spectral_saliency(f).map_err(|e| e.to_string())?;
        let (w, h) = f.dims();
        let noise = CueMap::new(w, h, (0..w * h).map(|_| rng.gen()).collect(), CueKind::Cosaliency).unwrap();
        for n_components in [1, 3, 5] {
            let cues = vec![visual.clone(), m.clone(), noise.clone()];
            let Ok(fusion) = build_fused_gmm(f, &cues, FusionParams { n_components, seed: 4 }) else {
                continue;
            };
            for side in [&fusion.gmm.foreground, &fusion.gmm.background] {
                let sum: f64 = side.iter().map(|c| c.weight).sum();
                ensure((sum - 1.0).abs() <= 1e-9, || format!("component weights sum to {sum}"))?;
                ensure(side.iter().all(|c| (0.0..=1.0).contains(&c.confidence)), || "confidence outside [0,1]".into())?;
            }
            fused += 1;
        }
    }
    ensure(fused > 0, || "no frame produced a fusion".into())?;
    Ok(fused)
}

fn graph_invariants(graph: &ProposalGraph, lambdas: &[f64]) -> Result<Vec<f64>, String> {
    for layer in graph.layers() {
        for node in layer {
            ensure(node.weight > 0.0 && node.weight <= 1.0, || format!("node weight {}", node.weight))?;
        }
    }
    for &lambda in lambdas {
        for f in 0..graph.layer_count().saturating_sub(1) {
            for (i, a) in graph.layers()[f].iter().enumerate() {
                for (j, b) in graph.layers()[f + 1].iter().enumerate() {
                    let c = link_cost(a.weight, b.weight, graph.link_length(f, i, j), lambda).map_err(|e| e.to_string())?;
                    ensure(c >= 0.0, || format!("negative link cost {c}"))?;
                }
            }
        }
    }
    let mut sums = Vec::new();
    for &lambda in lambdas {
        let r = shortest_path(graph, lambda).map_err(|e| e.to_string())?;
        ensure(close(path_cost(graph, &r.z, lambda).map_err(|e| e.to_string())?, r.total_cost, 1e-9), || {
            "path cost mismatch".into()
        })?;
        sums.push(r.length_sum);
    }
    ensure(sums.windows(2).all(|w| w[1] <= w[0] + 1e-9), || format!("L-sums {sums:?} increase with lambda"))?;
    Ok(sums)
}

fn invariant_suites(prepared: &Prepared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let trimaps = trimap_invariants(&mut rng)?;
    let fusions = fusion_invariants(&mut rng)?;
    let lambdas = [0.0, 1.0, 5.0, 10.0];

    let mut graphs = 0;
    for case in 0..50 {
        let layers: Vec<Vec<BoundingBox>> = (0..rng.gen_range(2..8))
            .map(|_| (0..rng.gen_range(1..6)).map(|_| random_box(&mut rng)).collect())
            .collect();
        let refs: Vec<f64> = layers
            .iter()
            .map(|l| l.iter().map(|b| b.perimeter()).max().unwrap() as f64)
            .collect();
        let metric = if case % 2 == 0 {
            LinkMetric::Pixels
        } else {
            LinkMetric::FrameRelative { width: 70, height: 70 }
        };
        graph_invariants(&build_graph(&layers, &refs, metric).unwrap(), &lambdas)?;
        graphs += 1;
    }

    let mut proposals = 0usize;
    for video in &prepared.videos {
        graph_invariants(&video.graph, &lambdas).map_err(|e| format!("{}: {e}", video.video_id))?;
        graphs += 1;
        for frame in &video.frames {
            let Some(mask) = &frame.mask else { continue };
            let (row, col) = mask.centroid().ok_or("empty mask")?;
            for b in &frame.proposals {
                ensure(b.contains(row, col), || {
                    format!("{} {}: {b:?} misses centroid ({row:.2}, {col:.2})", video.video_id, frame.frame_id)
                })?;
                proposals += 1;
            }
        }
    }
    ensure(proposals > 0, || "no prepared frame kept a mask".into())?;
    Ok(format!(
        "{trimaps} tri-maps partition, {fusions} fusions normalize, {graphs} graphs keep H in (0,1], \
         nonnegative costs and non-increasing L-sums over lambda {{0,1,5,10}}, {proposals} proposals hold their centroid"
    ))
}

// ---------------------------------------------------------- end to end

fn coloc(args: &[&str], threads: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_coloc"))
        .args(args)
        .env("COLOC_THREADS", threads)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("coloc {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn overall_corloc(results: &Path, manifest: &Path) -> Result<f64, String> {
    let text = coloc(&["eval", "--results", path_str(results), "--manifest", path_str(manifest), "--json"], "1")?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v["overall"].as_f64().ok_or_else(|| "eval output has no overall score".into())
}

fn mean_reliability(results: &Path, cue: &str) -> Result<f64, String> {
    let mut values = Vec::new();
    for entry in fs::read_dir(results.join("videos")).map_err(|e| e.to_string())? {
        let text = fs::read_to_string(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        for frame in v["frames"].as_array().ok_or("no frames")? {
            if let Some(psi) = frame["reliability"][cue].as_f64() {
                values.push(psi);
            }
        }
    }
    ensure(!values.is_empty(), || format!("no {cue} reliability values"))?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

struct Datasets {
    clean_manifest: PathBuf,
    clean_results: PathBuf,
}

fn synthetic_end_to_end(root: &Path) -> Result<(String, Datasets), String> {
    let clean = root.join("clean");
    let inverted = root.join("inverted");
    coloc(&["synth", "--out", path_str(&clean)], "1")?;
    let spec = root.join("inverted.json");
    fs::write(&spec, r#"{"corrupt": {"cue": "visual", "kind": "invert"}}"#).map_err(|e| e.to_string())?;
    coloc(&["synth", "--spec", path_str(&spec), "--out", path_str(&inverted)], "1")?;

    let clean_manifest = clean.join("manifest.json");
    let manifest = Manifest::load(&clean_manifest).map_err(|e| e.to_string())?;
    ensure(manifest.videos.len() == 5 && manifest.videos.iter().all(|v| v.frames.len() == 60), || {
        "dataset is not 5 videos x 60 frames".into()
    })?;

    let clean_results = root.join("clean_out");
    let start = Instant::now();
    coloc(&["run", "--manifest", path_str(&clean_manifest), "--lambda", "5", "--out", path_str(&clean_results)], "1")?;
    let clean_time = start.elapsed();
    let inverted_manifest = inverted.join("manifest.json");
    let inverted_results = root.join("inverted_out");
    let start = Instant::now();
    coloc(&["run", "--manifest", path_str(&inverted_manifest), "--lambda", "5", "--out", path_str(&inverted_results)], "1")?;
    let inverted_time = start.elapsed();

    let clean_score = overall_corloc(&clean_results, &clean_manifest)?;
    let inverted_score = overall_corloc(&inverted_results, &inverted_manifest)?;
    let clean_psi = mean_reliability(&clean_results, "visual")?;
    let inverted_psi = mean_reliability(&inverted_results, "visual")?;
    let drop = 1.0 - inverted_psi / clean_psi;
    let slowest = clean_time.max(inverted_time);

    let detail = format!(
        "clean CorLoc {clean_score:.3}, inverted visual CorLoc {inverted_score:.3}, \
         visual psi {clean_psi:.3} -> {inverted_psi:.3} (drop {:.0}%), slowest single-thread run {:.1}s",
        100.0 * drop,
        slowest.as_secs_f64()
    );
    let pass = clean_score >= 0.9 && inverted_score >= 0.8 && drop >= 0.5 && slowest < Duration::from_secs(600);
    let data = Datasets {
        clean_manifest,
        clean_results,
    };
    if pass {
        Ok((detail, data))
    } else {
        Err(detail)
    }
}

fn lambda_sensitivity(manifest: &Manifest, prepared: &Prepared) -> Outcome {
    let mut scores = BTreeMap::new();
    for lambda in [1, 2, 3, 4, 5, 6, 7, 50] {
        let results = select(prepared, lambda as f64).map_err(|e| e.to_string())?;
        scores.insert(lambda, evaluate_results(manifest, &results).overall);
    }
    let base = scores[&5];
    let listing = scores.iter().map(|(l, s)| format!("{l}:{s:.3}")).collect::<Vec<_>>().join(" ");
    let in_range = (1..=7).all(|l| (scores[&l] - base).abs() <= 0.1 * base);
    if in_range && scores[&50] < base {
        Ok(format!("CorLoc by lambda {listing}"))
    } else {
        Err(format!("CorLoc by lambda {listing}"))
    }
}

fn collect_files(dir: &Path, prefix: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, prefix, out)?;
        } else {
            out.insert(path.strip_prefix(prefix).unwrap().to_path_buf(), fs::read(&path)?);
        }
    }
    Ok(())
}

fn determinism(root: &Path, data: &Datasets) -> Outcome {
    let second = root.join("second_out");
    coloc(
        &["run", "--manifest", path_str(&data.clean_manifest), "--lambda", "5", "--out", path_str(&second)],
        "3",
    )?;
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    collect_files(&data.clean_results, &data.clean_results, &mut a).map_err(|e| e.to_string())?;
    collect_files(&second, &second, &mut b).map_err(|e| e.to_string())?;
    ensure(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    for (name, bytes) in &a {
        ensure(b[name] == *bytes, || format!("{} differs between runs", name.display()))?;
    }
    let json = a.keys().filter(|k| k.extension().is_some_and(|e| e == "json")).count();
    Ok(format!("{json} result JSON files byte-identical across 1 and 3 threads"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {name}: {detail}");
        }
    };

    report("oracle equivalence", oracle_equivalence());
    report("consensus and component weight arithmetic", consensus_arithmetic());

    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let e2e = synthetic_end_to_end(root);
    let data = match e2e {
        Ok((detail, data)) => {
            report("synthetic end to end", Ok(detail));
            Some(data)
        }
        Err(detail) => {
            report("synthetic end to end", Err(detail));
            let clean_manifest = root.join("clean/manifest.json");
            let clean_results = root.join("clean_out");
            clean_results.join("videos").is_dir().then_some(Datasets {
                clean_manifest,
                clean_results,
            })
        }
    };

    let prepared = data.as_ref().and_then(|d| {
        let manifest = Manifest::load(&d.clean_manifest).ok()?;
        // Masks are kept so proposal containment can be checked.
        let config = RunConfig {
            save_intermediates: true,
            ..Default::default()
        };
        let prepared = prepare(&manifest, &config).ok()?;
        Some((manifest, prepared))
    });
    match &prepared {
        Some((manifest, prepared)) => {
            report("invariant suites", invariant_suites(prepared));
            report("lambda sensitivity", lambda_sensitivity(manifest, prepared));
        }
        None => {
            report("invariant suites", Err("synthetic dataset unavailable".into()));
            report("lambda sensitivity", Err("synthetic dataset unavailable".into()));
        }
    }
    match &data {
        Some(d) => report("determinism", determinism(root, d)),
        None => report("determinism", Err("synthetic dataset unavailable".into())),
    }

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
