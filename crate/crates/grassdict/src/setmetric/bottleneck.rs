//! Exact bottleneck (infinity-Wasserstein) transport: bisection over the
//! sorted distinct ground distances with a max-flow feasibility check on the
//! thresholded bipartite graph. Avoids the overflow of large finite `p`.

use crate::linops::Mat;
use crate::{Error, Result};

const FLOW_EPS: f64 = 1e-14;

pub(crate) struct BottleneckSolution {
    pub value: f64,
    pub plan: Mat,
}

pub(crate) fn solve(cost: &Mat, supply: &[f64], demand: &[f64]) -> Result<BottleneckSolution> {
    let (m, n) = (cost.nrows(), cost.ncols());
    if supply.len() != m || demand.len() != n {
        return Err(Error::shape("transport weights do not match the cost matrix"));
    }
    let total: f64 = supply.iter().sum();
    let mut thresholds: Vec<f64> = cost.iter().copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    thresholds.dedup();

    // Smallest threshold whose admissible-edge graph routes all the mass;
    // the largest always does (every edge admissible).
    let mut lo = 0usize;
    let mut hi = thresholds.len() - 1;
    let mut best_plan = None;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match max_flow(cost, supply, demand, thresholds[mid]) {
            Some(plan) => {
                best_plan = Some(plan);
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let value = thresholds[lo];
    let plan = match best_plan {
        Some(p) if hi == lo => p,
        _ => max_flow(cost, supply, demand, value)
            .ok_or_else(|| Error::DecompositionFailure("bottleneck feasibility lost at optimum".into()))?,
    };
    let _ = total;
    Ok(BottleneckSolution { value, plan })
}

/// Dinic max-flow on the thresholded graph; returns the row-to-column flow
/// matrix when all mass routes, `None` otherwise.
fn max_flow(cost: &Mat, supply: &[f64], demand: &[f64], threshold: f64) -> Option<Mat> {
    let (m, n) = (cost.nrows(), cost.ncols());
    let total: f64 = supply.iter().sum();
    let nodes = m + n + 2;
    let source = m + n;
    let sink = m + n + 1;
    let mut graph = Dinic::new(nodes);
    for (i, &s) in supply.iter().enumerate() {
        graph.add_edge(source, i, s);
    }
    for (j, &d) in demand.iter().enumerate() {
        graph.add_edge(m + j, sink, d);
    }
    let mut pair_edges = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if cost[(i, j)] <= threshold {
                pair_edges.push(((i, j), graph.add_edge(i, m + j, f64::INFINITY)));
            }
        }
    }
    let flow = graph.run(source, sink);
    if flow < total - 1e-9 {
        return None;
    }
    let mut plan = Mat::zeros(m, n);
    for ((i, j), edge) in pair_edges {
        plan[(i, j)] = graph.flow_on(edge);
    }
    Some(plan)
}

struct Edge {
    to: usize,
    cap: f64,
    flow: f64,
}

struct Dinic {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(nodes: usize) -> Self {
        Dinic { edges: Vec::new(), adj: vec![Vec::new(); nodes], level: vec![0; nodes], iter: vec![0; nodes] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, flow: 0.0 });
        self.edges.push(Edge { to: from, cap: 0.0, flow: 0.0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn residual(&self, e: usize) -> f64 {
        self.edges[e].cap - self.edges[e].flow
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.fill(-1);
        let mut queue = std::collections::VecDeque::new();
        self.level[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if self.level[v] < 0 && self.residual(e) > FLOW_EPS {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, u: usize, sink: usize, limit: f64) -> f64 {
        if u == sink {
            return limit;
        }
        while self.iter[u] < self.adj[u].len() {
            let e = self.adj[u][self.iter[u]];
            let v = self.edges[e].to;
            if self.level[v] == self.level[u] + 1 && self.residual(e) > FLOW_EPS {
                let pushed = self.dfs(v, sink, limit.min(self.residual(e)));
                if pushed > FLOW_EPS {
                    self.edges[e].flow += pushed;
                    self.edges[e ^ 1].flow -= pushed;
                    return pushed;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    fn run(&mut self, source: usize, sink: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(source, sink) {
            self.iter.fill(0);
            loop {
                let pushed = self.dfs(source, sink, f64::INFINITY);
                if pushed <= FLOW_EPS {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    fn flow_on(&self, edge: usize) -> f64 {
        self.edges[edge].flow.max(0.0)
    }
}
