//! Dinic max-flow on real-valued capacities, used for the graph-cut step.

use std::collections::VecDeque;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
}

/// Directed flow network. Every added edge carries a paired reverse edge.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds `u -> v` with capacity `forward` and `v -> u` with capacity `backward`.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        debug_assert!(forward >= 0.0 && backward >= 0.0);
        self.adj[u].push(self.edges.len());
        self.edges.push(Edge { to: v, cap: forward });
        self.adj[v].push(self.edges.len());
        self.edges.push(Edge { to: u, cap: backward });
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<i64>> {
        let mut level = vec![-1i64; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let Edge { to, cap } = self.edges[e];
                if cap > EPS && level[to] < 0 {
                    level[to] = level[u] + 1;
                    queue.push_back(to);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    /// Sends one blocking flow along the level graph with an explicit stack.
    fn blocking_flow(&mut self, s: usize, t: usize, level: &mut [i64]) -> f64 {
        let mut next = vec![0usize; self.adj.len()];
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let bottleneck = path
                    .iter()
                    .map(|&e| self.edges[e].cap)
                    .fold(f64::INFINITY, f64::min);
                let mut retreat_to = None;
                for (i, &e) in path.iter().enumerate() {
                    self.edges[e].cap -= bottleneck;
                    self.edges[e ^ 1].cap += bottleneck;
                    if retreat_to.is_none() && self.edges[e].cap <= EPS {
                        retreat_to = Some(i);
                    }
                }
                total += bottleneck;
                let i = retreat_to.unwrap_or(0);
                path.truncate(i);
                u = if i == 0 { s } else { self.edges[path[i - 1]].to };
                continue;
            }
            let mut advanced = false;
            while next[u] < self.adj[u].len() {
                let e = self.adj[u][next[u]];
                let Edge { to, cap } = self.edges[e];
                if cap > EPS && level[to] == level[u] + 1 {
                    path.push(e);
                    u = to;
                    advanced = true;
                    break;
                }
                next[u] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end: prune the node and step back.
            level[u] = -1;
            match path.pop() {
                Some(e) => {
                    u = self.edges[e ^ 1].to;
                    next[u] += 1;
                }
                None => break,
            }
        }
        total
    }

    /// Computes a maximum `s`-`t` flow and returns its value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while let Some(mut level) = self.levels(s, t) {
            let pushed = self.blocking_flow(s, t, &mut level);
            if pushed <= 0.0 {
                break;
            }
            flow += pushed;
        }
        flow
    }

    /// Nodes reachable from `s` in the residual network; call after [`max_flow`](Self::max_flow).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let Edge { to, cap } = self.edges[e];
                if cap > EPS && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }
}
