//! Multi-level hierarchy of representative frames built by repeated k-means
//! over global descriptors.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::gist::GistDescriptor;
use crate::cluster::{kmeans, KMeansParams};

/// Average number of frames a representative stands for.
pub const FRAMES_PER_CLUSTER: f64 = 15.0;
pub const DEFAULT_MIN_SIZE: usize = 4;
const KMEANS_RESTARTS: usize = 8;
const KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct HierarchyParams {
    /// Stop before clustering a level with fewer frames than this.
    pub min_size: usize,
    /// Stop before clustering a level whose descriptor variance exceeds this.
    /// `None` uses twice the ground-level variance.
    pub var_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        HierarchyParams {
            min_size: DEFAULT_MIN_SIZE,
            var_threshold: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    /// Frame indices per level; level 0 holds every frame in order.
    pub levels: Vec<Vec<usize>>,
    /// `parents[l][i]` is the position in `levels[l + 1]` of the
    /// representative of `levels[l][i]`.
    pub parents: Vec<Vec<usize>>,
    /// Total descriptor variance of each level.
    pub variances: Vec<f64>,
}

impl Hierarchy {
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    /// Positions in `levels[level]` whose parent is `levels[level + 1][parent]`.
    pub fn children(&self, level: usize, parent: usize) -> Vec<usize> {
        self.parents[level]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == parent)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Number of representatives for a level of `n` frames.
pub fn cluster_count(n: usize) -> usize {
    ((n as f64 / FRAMES_PER_CLUSTER).round() as usize).max(1)
}

/// Mean squared distance of the selected descriptors to their centroid.
pub fn descriptor_variance(descriptors: &[GistDescriptor], ids: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let dim = descriptors[ids[0]].0.len();
    let mut mean = vec![0.0; dim];
    for &i in ids {
        for (m, v) in mean.iter_mut().zip(&descriptors[i].0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= ids.len() as f64);
    ids.iter()
        .map(|&i| {
            descriptors[i]
                .0
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        / ids.len() as f64
}

pub fn build_hierarchy(descriptors: &[GistDescriptor], params: HierarchyParams) -> Hierarchy {
    let ground: Vec<usize> = (0..descriptors.len()).collect();
    let base_var = descriptor_variance(descriptors, &ground);
    let threshold = params.var_threshold.unwrap_or(2.0 * base_var);
    let mut h = Hierarchy {
        levels: vec![ground],
        parents: Vec::new(),
        variances: vec![base_var],
    };
    loop {
        let current = h.levels.last().unwrap().clone();
        let var = *h.variances.last().unwrap();
        if current.len() < params.min_size || current.len() < 2 || var > threshold {
            break;
        }
        let k = cluster_count(current.len());
        if k >= current.len() {
            break;
        }
        let points: Vec<Vec<f64>> = current.iter().map(|&i| descriptors[i].0.clone()).collect();
        let result = kmeans(
            &points,
            KMeansParams {
                k,
                max_iterations: KMEANS_ITERATIONS,
                restarts: KMEANS_RESTARTS,
                seed: params.seed ^ (h.levels.len() as u64).wrapping_mul(0x2545_F491_4F6C_DD1D),
            },
        );
        // Representative of each cluster: the member nearest its center.
        let mut reps: Vec<(usize, f64)> = vec![(usize::MAX, f64::INFINITY); result.centers.len()];
        for (pos, &c) in result.assignments.iter().enumerate() {
            let d: f64 = points[pos]
                .iter()
                .zip(&result.centers[c])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < reps[c].1 {
                reps[c] = (pos, d);
            }
        }
        // Order the next level by frame index.
        let mut order: Vec<usize> = (0..reps.len()).collect();
        order.sort_by_key(|&c| current[reps[c].0]);
        let mut slot = vec![0usize; reps.len()];
        for (s, &c) in order.iter().enumerate() {
            slot[c] = s;
        }
        let next: Vec<usize> = order.iter().map(|&c| current[reps[c].0]).collect();
        let parents: Vec<usize> = result.assignments.iter().map(|&c| slot[c]).collect();
        h.variances.push(descriptor_variance(descriptors, &next));
        h.parents.push(parents);
        h.levels.push(next);
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyDump {
    pub schema_version: u32,
    pub levels: Vec<Vec<String>>,
    pub parents: Vec<Vec<usize>>,
    pub variances: Vec<f64>,
    pub descriptor_hashes: Vec<String>,
}

impl Hierarchy {
    /// Inspection dump with frame names and SHA-256 hashes of the descriptors.
    pub fn dump(&self, names: &[String], descriptors: &[GistDescriptor]) -> HierarchyDump {
        HierarchyDump {
            schema_version: 1,
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|&i| names[i].clone()).collect())
                .collect(),
            parents: self.parents.clone(),
            variances: self.variances.clone(),
            descriptor_hashes: descriptors
                .iter()
                .map(|d| {
                    let mut hasher = Sha256::new();
                    for v in &d.0 {
                        hasher.update(v.to_le_bytes());
                    }
                    hex::encode(hasher.finalize())
                })
                .collect(),
        }
    }
}
