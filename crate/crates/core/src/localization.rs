//! Per-video proposal graph and shortest-path box selection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_distance, BoundingBox};

pub const DEFAULT_LAMBDA: f64 = 5.0;

/// Units for the link length between two boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMetric {
    /// Side differences in pixels.
    Pixels,
    /// Row differences divided by the frame height, column differences by the width.
    FrameRelative { width: usize, height: usize },
}

impl LinkMetric {
    pub fn length(&self, a: &BoundingBox, b: &BoundingBox) -> f64 {
        match *self {
            LinkMetric::Pixels => box_distance(a, b),
            LinkMetric::FrameRelative { width, height } => {
                let (sa, sb) = (a.sides(), b.sides());
                let scale = [height as f64, height as f64, width as f64, width as f64];
                (0..4)
                    .map(|i| ((sa[i] - sb[i]) / scale[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalNode {
    pub bbox: BoundingBox,
    /// Perimeter relative to the frame's reference box, in `(0, 1]`.
    pub weight: f64,
}

/// Layered graph with one layer per frame and complete links between
/// adjacent layers. The virtual source and target have weight 1 and link
/// length 0 and are not stored.
#[derive(Debug, Clone)]
pub struct ProposalGraph {
    layers: Vec<Vec<ProposalNode>>,
    metric: LinkMetric,
}

impl ProposalGraph {
    pub fn layers(&self) -> &[Vec<ProposalNode>] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn node(&self, layer: usize, index: usize) -> &ProposalNode {
        &self.layers[layer][index]
    }

    pub fn metric(&self) -> LinkMetric {
        self.metric
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum::<usize>() + 2
    }

    /// Links including those from the source and into the target.
    pub fn link_count(&self) -> usize {
        if self.layers.is_empty() {
            return 1;
        }
        let inner: usize = self.layers.windows(2).map(|w| w[0].len() * w[1].len()).sum();
        self.layers[0].len() + inner + self.layers.last().unwrap().len()
    }

    /// Length of the link from node `i` of `layer` to node `j` of `layer + 1`.
    pub fn link_length(&self, layer: usize, i: usize, j: usize) -> f64 {
        self.metric
            .length(&self.layers[layer][i].bbox, &self.layers[layer + 1][j].bbox)
    }
}

pub fn build_graph(
    proposals: &[Vec<BoundingBox>],
    reference_perimeters: &[f64],
    metric: LinkMetric,
) -> Result<ProposalGraph> {
    if proposals.is_empty() {
        return Err(Error::Empty("proposal layers"));
    }
    if proposals.len() != reference_perimeters.len() {
        return Err(Error::InvalidValue(format!(
            "{} layers but {} reference perimeters",
            proposals.len(),
            reference_perimeters.len()
        )));
    }
    let mut layers = Vec::with_capacity(proposals.len());
    for (f, (boxes, &reference)) in proposals.iter().zip(reference_perimeters).enumerate() {
        if boxes.is_empty() {
            return Err(Error::Empty("proposal layer"));
        }
        if !(reference > 0.0) {
            return Err(Error::InvalidValue(format!(
                "reference perimeter {reference} in frame {f}"
            )));
        }
        let mut layer = Vec::with_capacity(boxes.len());
        for b in boxes {
            let weight = b.perimeter() as f64 / reference;
            if !(weight > 0.0 && weight <= 1.0) {
                return Err(Error::InvalidValue(format!(
                    "node weight {weight} outside (0, 1] in frame {f}"
                )));
            }
            layer.push(ProposalNode { bbox: *b, weight });
        }
        layers.push(layer);
    }
    Ok(ProposalGraph { layers, metric })
}

/// `-ln(h_m * h_n) + lambda * length`.
pub fn link_cost(h_m: f64, h_n: f64, length: f64, lambda: f64) -> Result<f64> {
    if !(h_m > 0.0) || !(h_n > 0.0) {
        return Err(Error::InvalidValue(format!("nonpositive node weight ({h_m}, {h_n})")));
    }
    if !(lambda >= 0.0) || !(length >= 0.0) {
        return Err(Error::InvalidValue(format!("lambda {lambda}, length {length}")));
    }
    Ok(-(h_m * h_n).ln() + lambda * length)
}

/// One selected proposal per frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Index of the selected proposal in each frame.
    pub z: Vec<usize>,
    /// Selected links between consecutive frames as `(z[f], z[f + 1])`.
    pub y: Vec<(usize, usize)>,
    pub total_cost: f64,
    /// Cost of the link entering each frame's node, then the link into the target.
    pub link_costs: Vec<f64>,
    /// Sum of link lengths along the path.
    pub length_sum: f64,
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    cost: f64,
    layer: usize,
    index: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.layer.cmp(&self.layer))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from the virtual source to the virtual target. Layers are
/// numbered from 1; the source is layer 0 and the target layer `n + 1`.
pub fn shortest_path(graph: &ProposalGraph, lambda: f64) -> Result<SelectionResult> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidValue(format!("lambda {lambda}")));
    }
    let n = graph.layer_count();
    let sizes: Vec<usize> = std::iter::once(1)
        .chain(graph.layers.iter().map(Vec::len))
        .chain(std::iter::once(1))
        .collect();
    let mut dist: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![f64::INFINITY; s]).collect();
    let mut prev: Vec<Vec<Option<usize>>> = sizes.iter().map(|&s| vec![None; s]).collect();
    let mut done: Vec<Vec<bool>> = sizes.iter().map(|&s| vec![false; s]).collect();
    let weight = |layer: usize, index: usize| -> f64 {
        if layer == 0 || layer == n + 1 {
            1.0
        } else {
            graph.layers[layer - 1][index].weight
        }
    };
    let length = |layer: usize, i: usize, j: usize| -> f64 {
        if layer == 0 || layer == n {
            0.0
        } else {
            graph.link_length(layer - 1, i, j)
        }
    };

    dist[0][0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        cost: 0.0,
        layer: 0,
        index: 0,
    });
    while let Some(HeapEntry { cost, layer, index }) = heap.pop() {
        if done[layer][index] {
            continue;
        }
        done[layer][index] = true;
        if layer == n + 1 {
            break;
        }
        for j in 0..sizes[layer + 1] {
            if done[layer + 1][j] {
                continue;
            }
            let c = cost + link_cost(weight(layer, index), weight(layer + 1, j), length(layer, index, j), lambda)?;
            if c < dist[layer + 1][j] {
                dist[layer + 1][j] = c;
                prev[layer + 1][j] = Some(index);
                heap.push(HeapEntry {
                    cost: c,
                    layer: layer + 1,
                    index: j,
                });
            }
        }
    }

    // Walk back from the target.
    let mut z = vec![0usize; n];
    let mut at = prev[n + 1][0].expect("target is reachable");
    for layer in (1..=n).rev() {
        z[layer - 1] = at;
        at = prev[layer][at].expect("every layer is reachable");
    }
    let y: Vec<(usize, usize)> = z.windows(2).map(|w| (w[0], w[1])).collect();

    let mut link_costs = Vec::with_capacity(n + 1);
    let mut length_sum = 0.0;
    let mut from = 0usize;
    for layer in 0..=n {
        let to = if layer == n { 0 } else { z[layer] };
        let len = length(layer, from, to);
        length_sum += len;
        link_costs.push(link_cost(weight(layer, from), weight(layer + 1, to), len, lambda)?);
        from = to;
    }
    let result = SelectionResult {
        z,
        y,
        total_cost: dist[n + 1][0],
        link_costs,
        length_sum,
    };
    debug_assert_eq!(result.y.len() + 1, result.z.len());
    Ok(result)
}

/// Cost of the source-to-target path through the given proposal indices.
pub fn path_cost(graph: &ProposalGraph, z: &[usize], lambda: f64) -> Result<f64> {
    if z.len() != graph.layer_count() {
        return Err(Error::InvalidValue(format!(
            "path through {} layers in a graph of {}",
            z.len(),
            graph.layer_count()
        )));
    }
    let mut total = link_cost(1.0, graph.node(0, z[0]).weight, 0.0, lambda)?;
    for f in 0..z.len() - 1 {
        total += link_cost(
            graph.node(f, z[f]).weight,
            graph.node(f + 1, z[f + 1]).weight,
            graph.link_length(f, z[f], z[f + 1]),
            lambda,
        )?;
    }
    total += link_cost(graph.node(z.len() - 1, *z.last().unwrap()).weight, 1.0, 0.0, lambda)?;
    Ok(total)
}
