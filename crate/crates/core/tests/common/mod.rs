//! Independent oracles shared by the integration suites. Everything here is
//! deliberately naive: exhaustive enumeration, union-find, brute-force
//! closures. None of it shares code with the implementation paths it checks.

use deepnt_core::graph::DenseAdjacency;
use deepnt_core::sim::{EdgeMetricMap, MetricKind};

/// Exhaustive optimal PPM over all simple paths via DFS. Returns None when
/// no path exists.
pub fn exhaustive_optimal_ppm(
    g: &DenseAdjacency,
    metrics: &EdgeMetricMap,
    kind: MetricKind,
    u: usize,
    v: usize,
) -> Option<f64> {
    fn dfs(
        g: &DenseAdjacency,
        metrics: &EdgeMetricMap,
        kind: MetricKind,
        target: usize,
        node: usize,
        acc: f64,
        used: &mut Vec<bool>,
        best: &mut Option<f64>,
    ) {
        if node == target {
            *best = Some(match *best {
                None => acc,
                Some(b) => {
                    if kind.better_or_equal(acc, b) {
                        acc
                    } else {
                        b
                    }
                }
            });
            return;
        }
        for w in g.neighbors_out(node, 0.0) {
            if !used[w] {
                used[w] = true;
                let val = metrics.value(node, w);
                dfs(g, metrics, kind, target, w, kind.combine(acc, val), used, best);
                used[w] = false;
            }
        }
    }
    let mut best = None;
    let mut used = vec![false; g.n()];
    used[u] = true;
    dfs(g, metrics, kind, v, u, kind.identity(), &mut used, &mut best);
    best
}

/// Plain union-find over the undirected support.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Connectivity verdict from union-find over edges with weight > tau in
/// either direction.
pub fn union_find_connected(g: &DenseAdjacency, tau: f64) -> bool {
    let n = g.n();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in 0..n {
            if g.weight(i, j) > tau {
                uf.union(i, j);
            }
        }
    }
    let root = uf.find(0);
    (1..n).all(|i| uf.find(i) == root)
}

/// Mutual-reachability equivalence classes by brute-force BFS in both
/// directions.
pub fn bruteforce_scc_labels(g: &DenseAdjacency, tau: f64) -> Vec<usize> {
    let n = g.n();
    let mut reach = vec![vec![false; n]; n];
    for s in 0..n {
        let mut stack = vec![s];
        reach[s][s] = true;
        while let Some(x) = stack.pop() {
            for y in g.neighbors_out(x, tau) {
                if !reach[s][y] {
                    reach[s][y] = true;
                    stack.push(y);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if label[i] != usize::MAX {
            continue;
        }
        label[i] = next;
        for j in (i + 1)..n {
            if reach[i][j] && reach[j][i] {
                label[j] = next;
            }
        }
        next += 1;
    }
    label
}

/// Relative disagreement between a finite-difference estimate and an
/// analytic gradient entry, with an absolute floor for near-zero pairs.
pub fn rel_error(fd: f64, analytic: f64) -> f64 {
    let scale = fd.abs().max(analytic.abs());
    if scale < 1e-6 {
        // both effectively zero: require absolute agreement instead
        if (fd - analytic).abs() < 1e-10 {
            0.0
        } else {
            (fd - analytic).abs() / 1e-6
        }
    } else {
        (fd - analytic).abs() / scale
    }
}
