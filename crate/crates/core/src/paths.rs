//! Loopless candidate-path sampling over a learned adjacency matrix.
//!
//! Yen's k-shortest-paths algorithm over the binarized edge set, with
//! hop-count cost by default (ties broken by lexicographic node sequence)
//! or an inverse-weight cost as an alternative strategy.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::graph::DenseAdjacency;

/// Cost assigned to an edge during path ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathCost {
    /// Every edge costs 1; candidate paths are ranked by hop count.
    #[default]
    Hops,
    /// Edge cost 1 / (w + 1e-6); heavier learned edges are preferred.
    InverseWeight,
}

impl PathCost {
    fn edge_cost(self, w: f64) -> f64 {
        match self {
            PathCost::Hops => 1.0,
            PathCost::InverseWeight => 1.0 / (w + 1e-6),
        }
    }
}

/// One loopless path; nodes are distinct and consecutive nodes are adjacent
/// in the binarized graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSample {
    pub nodes: Vec<usize>,
}

impl PathSample {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Nodes strictly between the endpoints.
    pub fn interior(&self) -> &[usize] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// Up to N candidate paths for one query pair, sorted by (hops, node
/// sequence).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    pub pair: (usize, usize),
    pub paths: Vec<PathSample>,
}

impl PathSet {
    pub fn empty(pair: (usize, usize)) -> Self {
        Self { pair, paths: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// The best path: fewest hops, lexicographically first among ties.
    pub fn best(&self) -> Option<&PathSample> {
        self.paths.first()
    }
}

fn path_order(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.1.cmp(&b.1))
}

/// Deterministic Dijkstra returning the minimum-(cost, lexicographic) path
/// from `src` to `dst`, skipping `banned` nodes and `banned_edges`.
fn best_path(
    adj: &[Vec<usize>],
    weights: &DenseAdjacency,
    cost: PathCost,
    src: usize,
    dst: usize,
    banned: &[bool],
    banned_edges: &std::collections::HashSet<(usize, usize)>,
) -> Option<(f64, Vec<usize>)> {
    #[derive(PartialEq)]
    struct Entry {
        cost: f64,
        path: Vec<usize>,
    }
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // reversed: BinaryHeap is a max-heap, we want the smallest first
            other
                .cost
                .partial_cmp(&self.cost)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| other.path.cmp(&self.path))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    if banned[src] || banned[dst] {
        return None;
    }
    let n = adj.len();
    let mut settled = vec![false; n];
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Entry { cost: 0.0, path: vec![src] });
    while let Some(Entry { cost: c, path }) = heap.pop() {
        let u = *path.last().expect("nonempty path");
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == dst {
            return Some((c, path));
        }
        for &v in &adj[u] {
            if settled[v] || banned[v] || banned_edges.contains(&(u, v)) {
                continue;
            }
            let mut next = path.clone();
            next.push(v);
            heap.push(Entry { cost: c + cost.edge_cost(weights.weight(u, v)), path: next });
        }
    }
    None
}

/// Yen's k-shortest loopless paths between `u` and `v` over edges with
/// weight above `tau`, truncated to `max_hops`. Returns at most `n_paths`
/// paths (possibly zero), sorted by (hops, node sequence).
pub fn k_best_loopless_paths(
    adjacency: &DenseAdjacency,
    u: usize,
    v: usize,
    n_paths: usize,
    max_hops: usize,
    tau: f64,
) -> PathSet {
    k_best_loopless_paths_with(adjacency, u, v, n_paths, max_hops, tau, PathCost::Hops)
}

pub fn k_best_loopless_paths_with(
    adjacency: &DenseAdjacency,
    u: usize,
    v: usize,
    n_paths: usize,
    max_hops: usize,
    tau: f64,
    cost: PathCost,
) -> PathSet {
    assert!(u != v, "path query needs distinct endpoints");
    assert!(n_paths >= 1 && max_hops >= 1);
    let n = adjacency.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| adjacency.neighbors_out(i, tau)).collect();
    let no_ban = vec![false; n];
    let mut accepted: Vec<(f64, Vec<usize>)> = Vec::new();
    // candidates kept sorted; BTreeMap-free dedup via exact node sequences
    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();

    let first = best_path(&adj, adjacency, cost, u, v, &no_ban, &Default::default());
    let Some(first) = first else {
        return PathSet::empty((u, v));
    };
    candidates.push(first);

    // In hop mode paths come out in nondecreasing hop count, so the first
    // over-long candidate ends the search. Inverse-weight mode cannot stop
    // early; a candidate budget bounds the scan instead.
    let budget = 60 * n_paths.max(1);
    let mut scanned = 0usize;
    while accepted.len() < n_paths && !candidates.is_empty() && scanned < budget {
        scanned += 1;
        candidates.sort_by(path_order);
        let (c, path) = candidates.remove(0);
        if path.len() - 1 > max_hops {
            if cost == PathCost::Hops {
                break;
            }
            continue;
        }
        accepted.push((c, path.clone()));
        if accepted.len() == n_paths {
            break;
        }

        // spur phase: deviate from each prefix of the accepted path
        for spur_idx in 0..path.len() - 1 {
            let spur = path[spur_idx];
            let root = &path[..=spur_idx];
            let mut banned = vec![false; n];
            for &node in &path[..spur_idx] {
                banned[node] = true;
            }
            let mut banned_edges = std::collections::HashSet::new();
            for (_, p) in accepted.iter().chain(candidates.iter()) {
                if p.len() > spur_idx + 1 && p[..=spur_idx] == *root {
                    banned_edges.insert((p[spur_idx], p[spur_idx + 1]));
                }
            }
            if let Some((spur_cost, spur_path)) =
                best_path(&adj, adjacency, cost, spur, v, &banned, &banned_edges)
            {
                let mut full = root[..spur_idx].to_vec();
                full.extend_from_slice(&spur_path);
                let mut root_cost = 0.0;
                for w in 0..spur_idx {
                    root_cost += cost.edge_cost(adjacency.weight(path[w], path[w + 1]));
                }
                let total = root_cost + spur_cost;
                if !accepted.iter().any(|(_, p)| *p == full)
                    && !candidates.iter().any(|(_, p)| *p == full)
                {
                    candidates.push((total, full));
                }
            }
        }
    }

    let mut paths: Vec<PathSample> = accepted
        .into_iter()
        .filter(|(_, p)| p.len() - 1 <= max_hops)
        .map(|(_, nodes)| PathSample { nodes })
        .collect();
    paths.sort_by(|a, b| a.hops().cmp(&b.hops()).then_with(|| a.nodes.cmp(&b.nodes)));
    paths.dedup();
    paths.truncate(n_paths);
    PathSet { pair: (u, v), paths }
}

/// Per-pair path sets for a batch of queries; equals one
/// `k_best_loopless_paths` call per pair. Pairs are independent, so the
/// parallel map is deterministic.
pub fn batch_sample(
    adjacency: &DenseAdjacency,
    pairs: &[(usize, usize)],
    n_paths: usize,
    max_hops: usize,
    tau: f64,
    cost: PathCost,
) -> BTreeMap<(usize, usize), PathSet> {
    let sets: Vec<((usize, usize), PathSet)> = pairs
        .par_iter()
        .map(|&(u, v)| {
            ((u, v), k_best_loopless_paths_with(adjacency, u, v, n_paths, max_hops, tau, cost))
        })
        .collect();
    sets.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DenseAdjacency;

    fn chain3() -> DenseAdjacency {
        DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn unique_path_on_chain() {
        let g = chain3();
        let ps = k_best_loopless_paths(&g, 0, 2, 3, 5, 0.0);
        assert_eq!(ps.paths.len(), 1);
        assert_eq!(ps.paths[0].nodes, vec![0, 1, 2]);
    }

    #[test]
    fn four_cycle_gives_both_routes_in_lexicographic_order() {
        let g = DenseAdjacency::from_unit_edges(4, false, &[(0, 1), (1, 2), (2, 3), (3, 0)])
            .unwrap();
        let ps = k_best_loopless_paths(&g, 0, 2, 2, 3, 0.0);
        assert_eq!(ps.paths.len(), 2);
        assert_eq!(ps.paths[0].nodes, vec![0, 1, 2]);
        assert_eq!(ps.paths[1].nodes, vec![0, 3, 2]);
    }

    #[test]
    fn hop_cap_blocks_long_routes() {
        let g = chain3();
        let ps = k_best_loopless_paths(&g, 0, 2, 3, 1, 0.0);
        assert!(ps.is_empty());
    }

    #[test]
    fn paths_respect_binarization_threshold() {
        let mut g = DenseAdjacency::zeros(3, false);
        g.set_edge(0, 1, 0.05);
        g.set_edge(1, 2, 0.5);
        g.set_edge(0, 2, 0.5);
        let ps = k_best_loopless_paths(&g, 0, 2, 3, 4, 0.1);
        assert_eq!(ps.paths.len(), 1);
        assert_eq!(ps.paths[0].nodes, vec![0, 2]);
    }

    /// Exhaustive simple-path enumeration oracle.
    fn all_simple_paths(
        g: &DenseAdjacency,
        u: usize,
        v: usize,
        max_hops: usize,
        tau: f64,
    ) -> Vec<Vec<usize>> {
        fn dfs(
            g: &DenseAdjacency,
            v: usize,
            max_hops: usize,
            tau: f64,
            path: &mut Vec<usize>,
            used: &mut Vec<bool>,
            out: &mut Vec<Vec<usize>>,
        ) {
            let last = *path.last().unwrap();
            if last == v {
                out.push(path.clone());
                return;
            }
            if path.len() > max_hops {
                return;
            }
            for w in g.neighbors_out(last, tau) {
                if !used[w] {
                    used[w] = true;
                    path.push(w);
                    dfs(g, v, max_hops, tau, path, used, out);
                    path.pop();
                    used[w] = false;
                }
            }
        }
        let mut out = Vec::new();
        let mut used = vec![false; g.n()];
        used[u] = true;
        dfs(g, v, max_hops, tau, &mut vec![u], &mut used, &mut out);
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    #[test]
    fn full_enumeration_matches_oracle_on_small_graphs() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(91, crate::rng::Stream::Graph);
        for trial in 0..40 {
            let n = 5 + trial % 4;
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if rng.random::<f64>() < 0.45 {
                        edges.push((a, b));
                    }
                }
            }
            let g = DenseAdjacency::from_unit_edges(n, false, &edges).unwrap();
            let expected = all_simple_paths(&g, 0, n - 1, n - 1, 0.0);
            let got = k_best_loopless_paths(&g, 0, n - 1, 10_000, n - 1, 0.0);
            let got_nodes: Vec<Vec<usize>> =
                got.paths.iter().map(|p| p.nodes.clone()).collect();
            assert_eq!(got_nodes, expected, "n={n} edges={edges:?}");
        }
    }

    #[test]
    fn batch_equals_per_pair_calls() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(17, crate::rng::Stream::Graph);
        let n = 30;
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random::<f64>() < 0.12 {
                    edges.push((a, b));
                }
            }
        }
        let g = DenseAdjacency::from_unit_edges(n, false, &edges).unwrap();
        let mut pairs = Vec::new();
        while pairs.len() < 50 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        let batch = batch_sample(&g, &pairs, 3, 6, 0.0, PathCost::Hops);
        for &(a, b) in &pairs {
            let single = k_best_loopless_paths(&g, a, b, 3, 6, 0.0);
            assert_eq!(batch[&(a, b)], single);
        }
    }

    #[test]
    fn returned_paths_satisfy_invariants() {
        let g = DenseAdjacency::from_unit_edges(
            6,
            false,
            &[(0, 1), (1, 2), (2, 5), (0, 3), (3, 4), (4, 5), (1, 4)],
        )
        .unwrap();
        let ps = k_best_loopless_paths(&g, 0, 5, 4, 3, 0.0);
        assert!(!ps.is_empty());
        for p in &ps.paths {
            assert_eq!(*p.nodes.first().unwrap(), 0);
            assert_eq!(*p.nodes.last().unwrap(), 5);
            assert!(p.hops() <= 3);
            let mut sorted = p.nodes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), p.nodes.len(), "loopless");
            for w in p.nodes.windows(2) {
                assert!(g.has_edge(w[0], w[1]));
            }
        }
        // pairwise distinct and sorted
        for w in ps.paths.windows(2) {
            assert!(w[0].hops() < w[1].hops() || (w[0].hops() == w[1].hops() && w[0].nodes < w[1].nodes));
        }
    }
}
