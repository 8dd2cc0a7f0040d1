//! Successive-shortest-path min-cost flow with real capacities.
//!
//! Shared by the size-constrained clustering step and the exact optimal
//! transport used for the Wasserstein distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct MinCostFlow {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const FLOW_EPS: f64 = 1e-13;

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        MinCostFlow {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds `from -> to`; returns the edge id for [`flow_on`](Self::flow_on).
    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow_on(&self, edge: usize) -> f64 {
        self.edges[edge ^ 1].cap
    }

    /// Bellman-Ford style initial potentials; the graphs built here are
    /// small DAGs so a few relaxation rounds are enough.
    fn initial_potentials(&self, source: usize) -> Vec<f64> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap > FLOW_EPS && dist[u] + edge.cost < dist[edge.to] {
                        dist[edge.to] = dist[u] + edge.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist.iter().map(|d| if d.is_finite() { *d } else { 0.0 }).collect()
    }

    /// Pushes up to `limit` units from `source` to `sink` at minimum cost.
    /// Returns `(flow, cost)`.
    pub fn run(&mut self, source: usize, sink: usize, limit: f64) -> (f64, f64) {
        let n = self.adj.len();
        let mut potential = self.initial_potentials(source);
        let mut flow = 0.0;
        let mut cost = 0.0;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_edge = vec![usize::MAX; n];
        while limit - flow > FLOW_EPS {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            prev_edge.iter_mut().for_each(|p| *p = usize::MAX);
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(State { dist: 0.0, node: source });
            while let Some(State { dist: d, node: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap <= FLOW_EPS {
                        continue;
                    }
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        prev_edge[edge.to] = e;
                        heap.push(State {
                            dist: nd,
                            node: edge.to,
                        });
                    }
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = limit - flow;
            let mut v = sink;
            while v != source {
                let e = prev_edge[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let e = prev_edge[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                cost += push * self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
        }
        (flow, cost)
    }
}
