//! Synthetic network simulation: random graph generation, per-edge metric
//! assignment, exact optimal path-performance computation, topology
//! corruption, and monitor-based observation sampling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{components_undirected, BinaryMatrix, DenseAdjacency};
use crate::rng::{stream_rng, stream_rng_indexed, Stream};

/// The four path-performance metric families. Each fixes a combine operator
/// over edges, an order for "better", and a signed difference used by the
/// triangle penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// e.g. delay: path value is the edge sum, lower is better.
    Additive,
    /// e.g. reliability: product of edge values in (0, 1), higher is better.
    Multiplicative,
    /// e.g. bandwidth: bottleneck minimum over the path, higher is better.
    MinMax,
    /// e.g. secure-path indicator: AND over 0/1 edges, 1 is better.
    Boolean,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::Additive, MetricKind::Multiplicative, MetricKind::MinMax, MetricKind::Boolean];

    /// The combine operator applied along a path.
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            MetricKind::Additive => a + b,
            MetricKind::Multiplicative => a * b,
            MetricKind::MinMax => a.min(b),
            // AND on indicators; min generalizes it to probabilities
            MetricKind::Boolean => a.min(b),
        }
    }

    /// Identity element of `combine`.
    pub fn identity(self) -> f64 {
        match self {
            MetricKind::Additive => 0.0,
            MetricKind::Multiplicative => 1.0,
            MetricKind::MinMax => f64::INFINITY,
            MetricKind::Boolean => 1.0,
        }
    }

    /// a is at least as good as b.
    pub fn better_or_equal(self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Additive => a <= b,
            _ => a >= b,
        }
    }

    /// Signed violation a "minus" b oriented so positive means a is worse
    /// than the bound b allows.
    pub fn penalty_diff(self, a: f64, b: f64) -> f64 {
        match self {
            MetricKind::Additive => a - b,
            _ => b - a,
        }
    }

    pub fn is_regression(self) -> bool {
        !matches!(self, MetricKind::Boolean)
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Additive => "additive",
            MetricKind::Multiplicative => "multiplicative",
            MetricKind::MinMax => "minmax",
            MetricKind::Boolean => "boolean",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(MetricKind::Additive),
            "multiplicative" => Ok(MetricKind::Multiplicative),
            "minmax" => Ok(MetricKind::MinMax),
            "boolean" => Ok(MetricKind::Boolean),
            other => Err(Error::Config(format!("unknown metric kind {other:?}"))),
        }
    }
}

/// Random-graph families used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphModel {
    /// Erdős–Rényi with edge probability p.
    Er { p: f64 },
    /// Watts–Strogatz ring with k neighbors and rewiring probability beta.
    Ws { k: usize, beta: f64 },
    /// Barabási–Albert preferential attachment with m edges per new node.
    Ba { m: usize },
}

fn er_graph(n: usize, p: f64, rng: &mut impl Rng) -> DenseAdjacency {
    let mut a = DenseAdjacency::zeros(n, false);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                a.set_edge(u, v, 1.0);
            }
        }
    }
    a
}

fn ws_graph(n: usize, k: usize, beta: f64, rng: &mut impl Rng) -> DenseAdjacency {
    let mut a = DenseAdjacency::zeros(n, false);
    for u in 0..n {
        for off in 1..=(k / 2) {
            a.set_edge(u, (u + off) % n, 1.0);
        }
    }
    for u in 0..n {
        for off in 1..=(k / 2) {
            let v = (u + off) % n;
            if rng.random::<f64>() < beta {
                // rewire the far endpoint to a uniformly chosen fresh target
                let mut accepted = None;
                for _ in 0..4 * n {
                    let w = rng.random_range(0..n);
                    if w != u && !a.has_edge(u, w) {
                        accepted = Some(w);
                        break;
                    }
                }
                if let Some(w) = accepted {
                    a.set_edge(u, v, 0.0);
                    a.set_edge(u, w, 1.0);
                }
            }
        }
    }
    a
}

fn ba_graph(n: usize, m: usize, rng: &mut impl Rng) -> DenseAdjacency {
    let mut a = DenseAdjacency::zeros(n, false);
    // seed clique on the first m nodes
    for u in 0..m {
        for v in (u + 1)..m {
            a.set_edge(u, v, 1.0);
        }
    }
    // each endpoint repeated once per incident edge
    let mut endpoint_pool: Vec<usize> = Vec::new();
    for u in 0..m {
        for v in (u + 1)..m {
            endpoint_pool.push(u);
            endpoint_pool.push(v);
        }
    }
    for t in m..n {
        let mut targets: Vec<usize> = Vec::new();
        let mut guard = 0usize;
        while targets.len() < m {
            guard += 1;
            let candidate = if endpoint_pool.is_empty() || guard > 50 * m * (t + 1) {
                // uniform fallback: first unused node index
                (0..t).find(|c| !targets.contains(c)).expect("t >= m existing nodes")
            } else {
                endpoint_pool[rng.random_range(0..endpoint_pool.len())]
            };
            if candidate != t && !targets.contains(&candidate) {
                targets.push(candidate);
            }
        }
        for &v in &targets {
            a.set_edge(t, v, 1.0);
            endpoint_pool.push(t);
            endpoint_pool.push(v);
        }
    }
    a
}

/// Generates a connected undirected 0/1 graph, retrying with derived seeds
/// until the result is connected (at most 100 attempts).
pub fn generate_graph(model: GraphModel, n: usize, seed: u64) -> Result<DenseAdjacency> {
    if n < 3 {
        return Err(Error::Input(format!("need n >= 3, got {n}")));
    }
    match model {
        GraphModel::Er { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Input(format!("ER needs p in (0,1], got {p}")));
            }
        }
        GraphModel::Ws { k, beta } => {
            if k % 2 != 0 || k < 2 || k >= n {
                return Err(Error::Input(format!("WS needs even k with 2 <= k < n, got k={k}")));
            }
            if !(0.0..=1.0).contains(&beta) {
                return Err(Error::Input(format!("WS needs beta in [0,1], got {beta}")));
            }
        }
        GraphModel::Ba { m } => {
            if m < 1 || m >= n {
                return Err(Error::Input(format!("BA needs 1 <= m < n, got m={m}")));
            }
        }
    }
    for attempt in 0..100u64 {
        let mut rng = stream_rng_indexed(seed, Stream::Graph, attempt);
        let a = match model {
            GraphModel::Er { p } => er_graph(n, p, &mut rng),
            GraphModel::Ws { k, beta } => ws_graph(n, k, beta, &mut rng),
            GraphModel::Ba { m } => ba_graph(n, m, &mut rng),
        };
        if components_undirected(&a, 0.0).len() == 1 {
            return Ok(a);
        }
    }
    Err(Error::Generation(format!(
        "no connected graph after 100 attempts (model {model:?}, n={n}); parameters too sparse"
    )))
}

/// Per-edge metric values, defined exactly on the edge set of a companion
/// graph. Boolean metrics store 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMetricMap {
    n: usize,
    directed: bool,
    kind: MetricKind,
    values: Array2<f64>,
}

impl EdgeMetricMap {
    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, u: usize, v: usize) -> f64 {
        self.values[[u, v]]
    }

    fn set(&mut self, u: usize, v: usize, x: f64) {
        self.values[[u, v]] = x;
        if !self.directed {
            self.values[[v, u]] = x;
        }
    }

    /// `# metric <kind>` header then `u v value` lines, canonical edge order.
    pub fn to_metric_string(&self, graph: &DenseAdjacency) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "metric {}", self.kind.name());
        for (u, v, _) in graph.edges() {
            let _ = writeln!(s, "{u} {v} {}", self.value(u, v));
        }
        s
    }

    pub fn parse_metric_string(text: &str, graph: &DenseAdjacency) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty metric file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "metric" {
            return Err(Error::Parse(format!("bad metric header: {header:?}")));
        }
        let kind = MetricKind::from_name(toks[1])?;
        let mut m = EdgeMetricMap {
            n: graph.n(),
            directed: graph.directed(),
            kind,
            values: Array2::zeros((graph.n(), graph.n())),
        };
        let mut count = 0usize;
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse(format!("bad metric line: {line:?}")));
            }
            let u: usize = t[0].parse().map_err(|_| Error::Parse(format!("bad node: {line:?}")))?;
            let v: usize = t[1].parse().map_err(|_| Error::Parse(format!("bad node: {line:?}")))?;
            let x: f64 = t[2].parse().map_err(|_| Error::Parse(format!("bad value: {line:?}")))?;
            if !graph.has_edge(u, v) {
                return Err(Error::Parse(format!("metric on non-edge ({u},{v})")));
            }
            m.set(u, v, x);
            count += 1;
        }
        if count != graph.edge_count() {
            return Err(Error::Parse(format!(
                "metric file covers {count} edges, graph has {}",
                graph.edge_count()
            )));
        }
        Ok(m)
    }

    pub fn write_metric_file(&self, graph: &DenseAdjacency, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_metric_string(graph))?;
        Ok(())
    }

    pub fn read_metric_file(path: &Path, graph: &DenseAdjacency) -> Result<Self> {
        Self::parse_metric_string(&std::fs::read_to_string(path)?, graph)
    }
}

/// Reachability restricted to edges carrying metric value 1.
fn boolean_reach_from(graph: &DenseAdjacency, metrics: &EdgeMetricMap, source: usize) -> Vec<bool> {
    let n = graph.n();
    let mut seen = vec![false; n];
    seen[source] = true;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for v in graph.neighbors_out(u, 0.0) {
            if !seen[v] && metrics.value(u, v) == 1.0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Draws per-edge metric values. Additive/MinMax values are uniform in
/// [1, 100], multiplicative in [0.9, 0.999]. Boolean edge states are
/// resampled (different densities per retry) until a 200-pair probe sees
/// more than 30% positive and 30% negative optimal values.
pub fn assign_edge_metrics(
    graph: &DenseAdjacency,
    kind: MetricKind,
    seed: u64,
) -> Result<EdgeMetricMap> {
    let n = graph.n();
    let mut m = EdgeMetricMap {
        n,
        directed: graph.directed(),
        kind,
        values: Array2::zeros((n, n)),
    };
    let edges = graph.edges();
    match kind {
        MetricKind::Additive | MetricKind::MinMax => {
            let mut rng = stream_rng(seed, Stream::Metrics);
            for &(u, v, _) in &edges {
                m.set(u, v, rng.random_range(1.0..=100.0));
            }
            Ok(m)
        }
        MetricKind::Multiplicative => {
            let mut rng = stream_rng(seed, Stream::Metrics);
            for &(u, v, _) in &edges {
                m.set(u, v, rng.random_range(0.9..=0.999));
            }
            Ok(m)
        }
        MetricKind::Boolean => {
            // fixed probe of up to 200 node pairs
            let mut probe_rng = stream_rng_indexed(seed, Stream::Metrics, u64::MAX);
            let mut all_pairs: Vec<(usize, usize)> = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    all_pairs.push((u, v));
                }
            }
            all_pairs.shuffle(&mut probe_rng);
            let probe: Vec<(usize, usize)> = all_pairs.into_iter().take(200).collect();

            const DENSITY_LADDER: [f64; 17] = [
                0.5, 0.4, 0.6, 0.35, 0.65, 0.3, 0.7, 0.45, 0.55, 0.25, 0.75, 0.2, 0.8, 0.15, 0.85,
                0.9, 0.1,
            ];
            for retry in 0..50u64 {
                let q = DENSITY_LADDER[(retry as usize) % DENSITY_LADDER.len()];
                let mut rng = stream_rng_indexed(seed, Stream::Metrics, retry);
                for &(u, v, _) in &edges {
                    let state = if rng.random::<f64>() < q { 1.0 } else { 0.0 };
                    m.set(u, v, state);
                }
                let mut pos = 0usize;
                let mut total = 0usize;
                let reach = crate::graph::reachability(graph, 0.0);
                for &(u, v) in &probe {
                    if !reach.get(u, v) {
                        continue;
                    }
                    total += 1;
                    if boolean_reach_from(graph, &m, u)[v] {
                        pos += 1;
                    }
                }
                if total == 0 {
                    continue;
                }
                let frac = pos as f64 / total as f64;
                if frac > 0.3 && (1.0 - frac) > 0.3 {
                    return Ok(m);
                }
            }
            Err(Error::Simulation(
                "could not balance boolean labels above 30% per class in 50 retries".into(),
            ))
        }
    }
}

/// Heap entry ordered so the BinaryHeap pops the smallest cost first.
#[derive(PartialEq)]
struct MinCost {
    cost: f64,
    node: usize,
}

impl Eq for MinCost {}

impl Ord for MinCost {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for MinCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source exact optimal PPM values. Entries are `None` when the
/// target is unreachable.
pub fn single_source_ppm(
    graph: &DenseAdjacency,
    metrics: &EdgeMetricMap,
    kind: MetricKind,
    source: usize,
) -> Vec<Option<f64>> {
    let n = graph.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|u| graph.neighbors_out(u, 0.0)).collect();
    match kind {
        MetricKind::Additive | MetricKind::Multiplicative => {
            // multiplicative runs in -ln space, where shorter is better
            let edge_cost = |u: usize, v: usize| -> f64 {
                let y = metrics.value(u, v);
                match kind {
                    MetricKind::Additive => y,
                    _ => -y.ln(),
                }
            };
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(MinCost { cost: 0.0, node: source });
            while let Some(MinCost { cost, node }) = heap.pop() {
                if done[node] {
                    continue;
                }
                done[node] = true;
                for &v in &adj[node] {
                    let c = cost + edge_cost(node, v);
                    if c < dist[v] {
                        dist[v] = c;
                        heap.push(MinCost { cost: c, node: v });
                    }
                }
            }
            (0..n)
                .map(|v| {
                    if dist[v].is_infinite() {
                        None
                    } else if kind == MetricKind::Additive {
                        Some(dist[v])
                    } else {
                        Some((-dist[v]).exp())
                    }
                })
                .collect()
        }
        MetricKind::MinMax => {
            // widest path: maximize the minimum edge value along the path
            let mut width = vec![f64::NEG_INFINITY; n];
            let mut done = vec![false; n];
            width[source] = f64::INFINITY;
            let mut heap = BinaryHeap::new();
            // reuse MinCost with negated width so the widest pops first
            heap.push(MinCost { cost: f64::NEG_INFINITY, node: source });
            while let Some(MinCost { cost, node }) = heap.pop() {
                if done[node] {
                    continue;
                }
                done[node] = true;
                let w_here = -cost;
                let w_here = if node == source { f64::INFINITY } else { w_here };
                for &v in &adj[node] {
                    let w = w_here.min(metrics.value(node, v));
                    if w > width[v] {
                        width[v] = w;
                        heap.push(MinCost { cost: -w, node: v });
                    }
                }
            }
            (0..n)
                .map(|v| {
                    if v == source {
                        Some(f64::INFINITY)
                    } else if width[v].is_finite() {
                        Some(width[v])
                    } else {
                        None
                    }
                })
                .collect()
        }
        MetricKind::Boolean => {
            let plain = {
                let mut seen = vec![false; n];
                seen[source] = true;
                let mut q = std::collections::VecDeque::from([source]);
                while let Some(u) = q.pop_front() {
                    for &v in &adj[u] {
                        if !seen[v] {
                            seen[v] = true;
                            q.push_back(v);
                        }
                    }
                }
                seen
            };
            let secure = boolean_reach_from(graph, metrics, source);
            (0..n)
                .map(|v| {
                    if v == source {
                        Some(1.0)
                    } else if !plain[v] {
                        None
                    } else {
                        Some(if secure[v] { 1.0 } else { 0.0 })
                    }
                })
                .collect()
        }
    }
}

/// Exact optimum over all simple paths between one pair.
pub fn optimal_ppm(
    graph: &DenseAdjacency,
    metrics: &EdgeMetricMap,
    kind: MetricKind,
    u: usize,
    v: usize,
) -> Result<Option<f64>> {
    let n = graph.n();
    if u >= n || v >= n {
        return Err(Error::Input(format!("pair ({u},{v}) out of range for n={n}")));
    }
    if u == v {
        return Err(Error::Input("optimal_ppm needs u != v".into()));
    }
    Ok(single_source_ppm(graph, metrics, kind, u)[v])
}

/// All-pairs exact optimal PPM values plus the reachability matrix.
/// `y[u][v]` is NaN when v is unreachable from u; the diagonal carries the
/// combine identity.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub kind: MetricKind,
    pub y: Array2<f64>,
    pub reachable: BinaryMatrix,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.reachable.n()
    }
}

/// Batched `optimal_ppm` over every ordered pair. Sources are evaluated in
/// parallel; each source writes a disjoint row, so the result is identical
/// for any thread count.
pub fn all_pairs_ground_truth(
    graph: &DenseAdjacency,
    metrics: &EdgeMetricMap,
    kind: MetricKind,
) -> GroundTruth {
    let n = graph.n();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|u| single_source_ppm(graph, metrics, kind, u))
        .collect();
    let mut y = Array2::from_elem((n, n), f64::NAN);
    let mut reachable = BinaryMatrix::identity(n);
    for u in 0..n {
        for v in 0..n {
            if u == v {
                y[[u, v]] = kind.identity();
                continue;
            }
            if let Some(val) = rows[u][v] {
                y[[u, v]] = val;
                reachable.set(u, v, true);
            }
        }
    }
    if !graph.directed() {
        // the optimum is direction-free; mirroring removes last-ulp noise
        // from opposite-direction cost accumulation
        for u in 0..n {
            for v in (u + 1)..n {
                y[[v, u]] = y[[u, v]];
                reachable.set(v, u, reachable.get(u, v));
            }
        }
    }
    GroundTruth { kind, y, reachable }
}

/// Observed topology after replacing a fraction of true edges with
/// non-edges, plus the support mask used by the structure loss.
#[derive(Debug, Clone)]
pub struct CorruptedTopology {
    pub a_obs: DenseAdjacency,
    pub mask: BinaryMatrix,
    pub delta_rate: f64,
    pub removed: Vec<(usize, usize)>,
    pub added: Vec<(usize, usize)>,
}

/// Uniformly removes ceil(rate * |E|) true edges and inserts as many fresh
/// non-edges (symmetric insertions at unit weight).
pub fn corrupt_topology(
    a_true: &DenseAdjacency,
    rate: f64,
    seed: u64,
) -> Result<CorruptedTopology> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Input(format!("corruption rate must be in [0,1), got {rate}")));
    }
    let n = a_true.n();
    let edges = a_true.edges();
    let k = (rate * edges.len() as f64).ceil() as usize;

    let mut non_edges: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if !a_true.has_edge(u, v) {
                non_edges.push((u, v));
            }
        }
    }
    if k > non_edges.len() {
        return Err(Error::Input(format!(
            "cannot add {k} edges, only {} non-edges available",
            non_edges.len()
        )));
    }

    let mut rng = stream_rng(seed, Stream::Corruption);
    let mut edge_idx: Vec<usize> = (0..edges.len()).collect();
    edge_idx.shuffle(&mut rng);
    let removed: Vec<(usize, usize)> =
        edge_idx.iter().take(k).map(|&i| (edges[i].0, edges[i].1)).collect();
    non_edges.shuffle(&mut rng);
    let added: Vec<(usize, usize)> = non_edges.into_iter().take(k).collect();

    let mut a_obs = a_true.clone();
    for &(u, v) in &removed {
        a_obs.set_edge(u, v, 0.0);
    }
    for &(u, v) in &added {
        a_obs.set_edge(u, v, 1.0);
    }
    let mask = BinaryMatrix::from_support(&a_obs, 0.0);
    Ok(CorruptedTopology { a_obs, mask, delta_rate: rate, removed, added })
}

/// One measured node pair.
pub type Observation = (usize, usize, f64);

/// Measured node pairs split into train/validation, the unmeasured reachable
/// pairs as test, and the monitors that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub train: Vec<Observation>,
    pub validation: Vec<Observation>,
    pub test: Vec<Observation>,
    pub monitors: Vec<usize>,
    pub sampling_rate: f64,
}

impl ObservationSet {
    /// CSV with a `split,u,v,y` header.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("split,u,v,y\n");
        for &(u, v, y) in &self.train {
            let _ = writeln!(s, "train,{u},{v},{y}");
        }
        for &(u, v, y) in &self.validation {
            let _ = writeln!(s, "validation,{u},{v},{y}");
        }
        for &(u, v, y) in &self.test {
            let _ = writeln!(s, "test,{u},{v},{y}");
        }
        s
    }

    pub fn parse_csv_string(text: &str) -> Result<Self> {
        let mut set = ObservationSet {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            monitors: Vec::new(),
            sampling_rate: f64::NAN,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some("split,u,v,y") => {}
            other => return Err(Error::Parse(format!("bad observations header: {other:?}"))),
        }
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split(',').collect();
            if t.len() != 4 {
                return Err(Error::Parse(format!("bad observation line: {line:?}")));
            }
            let u: usize = t[1].parse().map_err(|_| Error::Parse(format!("bad u: {line:?}")))?;
            let v: usize = t[2].parse().map_err(|_| Error::Parse(format!("bad v: {line:?}")))?;
            let y: f64 = t[3].parse().map_err(|_| Error::Parse(format!("bad y: {line:?}")))?;
            match t[0] {
                "train" => set.train.push((u, v, y)),
                "validation" => set.validation.push((u, v, y)),
                "test" => set.test.push((u, v, y)),
                other => return Err(Error::Parse(format!("bad split {other:?}"))),
            }
        }
        Ok(set)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv_string(&std::fs::read_to_string(path)?)
    }
}

/// Samples floor(rate * C(n,2)) monitor-incident reachable pairs, splits them
/// alternately into train/validation after a seeded shuffle, and leaves every
/// other reachable pair as test.
pub fn sample_observations(
    gt: &GroundTruth,
    rate: f64,
    monitor_fraction: f64,
    seed: u64,
) -> Result<ObservationSet> {
    if !(0.0..1.0).contains(&rate) || rate == 0.0 {
        return Err(Error::Input(format!("sampling rate must be in (0,1), got {rate}")));
    }
    if !(monitor_fraction > 0.0 && monitor_fraction <= 1.0) {
        return Err(Error::Input(format!(
            "monitor fraction must be in (0,1], got {monitor_fraction}"
        )));
    }
    let n = gt.n();
    let total_pairs = n * (n - 1) / 2;
    let target = (rate * total_pairs as f64).floor() as usize;
    if target == 0 {
        return Err(Error::Sampling(format!(
            "sampling rate {rate} selects zero of {total_pairs} pairs"
        )));
    }

    let mut rng = stream_rng(seed, Stream::Sampling);
    let monitor_count = (monitor_fraction * n as f64).ceil() as usize;
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let mut monitors: Vec<usize> = nodes.into_iter().take(monitor_count).collect();
    monitors.sort_unstable();
    let is_monitor: Vec<bool> = {
        let mut b = vec![false; n];
        for &m in &monitors {
            b[m] = true;
        }
        b
    };

    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if (is_monitor[u] || is_monitor[v]) && gt.reachable.get(u, v) {
                candidates.push((u, v));
            }
        }
    }
    if candidates.len() < target {
        return Err(Error::Sampling(format!(
            "monitors supply {} candidate pairs but {target} are requested; raise the monitor fraction",
            candidates.len()
        )));
    }
    candidates.shuffle(&mut rng);
    let selected: Vec<(usize, usize)> = candidates.into_iter().take(target).collect();

    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, &(u, v)) in selected.iter().enumerate() {
        let obs = (u, v, gt.y[[u, v]]);
        if i % 2 == 0 {
            train.push(obs);
        } else {
            validation.push(obs);
        }
    }

    let chosen: std::collections::HashSet<(usize, usize)> = selected.iter().copied().collect();
    let mut test = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if gt.reachable.get(u, v) && !chosen.contains(&(u, v)) {
                test.push((u, v, gt.y[[u, v]]));
            }
        }
    }
    Ok(ObservationSet { train, validation, test, monitors, sampling_rate: rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn er_p1_is_complete() {
        let g = generate_graph(GraphModel::Er { p: 1.0 }, 4, 1).unwrap();
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn ba_edge_count_formula() {
        let m = 2;
        let n = 10;
        let g = generate_graph(GraphModel::Ba { m }, n, 3).unwrap();
        let clique_edges = m * (m - 1) / 2;
        assert_eq!(g.edge_count(), clique_edges + m * (n - m));
    }

    #[test]
    fn ws_generates_connected_ring() {
        let g = generate_graph(GraphModel::Ws { k: 4, beta: 0.3 }, 20, 9).unwrap();
        assert_eq!(components_undirected(&g, 0.0).len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        for model in [
            GraphModel::Er { p: 0.3 },
            GraphModel::Ws { k: 4, beta: 0.2 },
            GraphModel::Ba { m: 2 },
        ] {
            let a = generate_graph(model, 15, 77).unwrap();
            let b = generate_graph(model, 15, 77).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sparse_parameters_error_out() {
        // p tiny on a graph that cannot connect in 100 attempts
        let e = generate_graph(GraphModel::Er { p: 1e-9 }, 30, 5);
        assert!(matches!(e, Err(Error::Generation(_))));
    }

    #[test]
    fn metric_ranges_match_contract() {
        let g = generate_graph(GraphModel::Er { p: 0.4 }, 12, 2).unwrap();
        let add = assign_edge_metrics(&g, MetricKind::Additive, 5).unwrap();
        let mul = assign_edge_metrics(&g, MetricKind::Multiplicative, 5).unwrap();
        for (u, v, _) in g.edges() {
            let a = add.value(u, v);
            assert!((1.0..=100.0).contains(&a));
            let m = mul.value(u, v);
            assert!((0.9..=0.999).contains(&m));
        }
    }

    #[test]
    fn boolean_probe_is_balanced() {
        let g = generate_graph(GraphModel::Er { p: 0.08 }, 60, 8).unwrap();
        let m = assign_edge_metrics(&g, MetricKind::Boolean, 4).unwrap();
        let gt = all_pairs_ground_truth(&g, &m, MetricKind::Boolean);
        let mut pos = 0usize;
        let mut total = 0usize;
        for u in 0..g.n() {
            for v in (u + 1)..g.n() {
                if gt.reachable.get(u, v) {
                    total += 1;
                    if gt.y[[u, v]] == 1.0 {
                        pos += 1;
                    }
                }
            }
        }
        let frac = pos as f64 / total as f64;
        // probe balance is enforced on a 200-pair sample; the full matrix
        // should still be far from degenerate
        assert!(frac > 0.15 && frac < 0.85, "positive fraction {frac}");
    }

    #[test]
    fn boolean_all_ones_cycle() {
        let g = DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut m = EdgeMetricMap {
            n: 3,
            directed: false,
            kind: MetricKind::Boolean,
            values: Array2::zeros((3, 3)),
        };
        for (u, v, _) in g.edges() {
            m.set(u, v, 1.0);
        }
        let gt = all_pairs_ground_truth(&g, &m, MetricKind::Boolean);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(gt.y[[u, v]], 1.0);
            }
        }
    }

    #[test]
    fn additive_chain_sums() {
        let g = DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2)]).unwrap();
        let mut m = EdgeMetricMap {
            n: 3,
            directed: false,
            kind: MetricKind::Additive,
            values: Array2::zeros((3, 3)),
        };
        m.set(0, 1, 2.0);
        m.set(1, 2, 3.0);
        let y = optimal_ppm(&g, &m, MetricKind::Additive, 0, 2).unwrap();
        assert_eq!(y, Some(5.0));
    }

    #[test]
    fn minmax_prefers_wider_two_hop_route() {
        let g = DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut m = EdgeMetricMap {
            n: 3,
            directed: false,
            kind: MetricKind::MinMax,
            values: Array2::zeros((3, 3)),
        };
        m.set(0, 1, 5.0);
        m.set(1, 2, 7.0);
        m.set(0, 2, 4.0);
        // both simple paths: direct gives 4, via node 1 gives min(5,7) = 5
        let y = optimal_ppm(&g, &m, MetricKind::MinMax, 0, 2).unwrap();
        assert_eq!(y, Some(5.0));
    }

    #[test]
    fn multiplicative_prefers_direct_edge() {
        let g = DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut m = EdgeMetricMap {
            n: 3,
            directed: false,
            kind: MetricKind::Multiplicative,
            values: Array2::zeros((3, 3)),
        };
        m.set(0, 1, 0.9);
        m.set(1, 2, 0.9);
        m.set(0, 2, 0.95);
        // 0.95 direct beats 0.81 via node 1
        let y = optimal_ppm(&g, &m, MetricKind::Multiplicative, 0, 2).unwrap().unwrap();
        assert_abs_diff_eq!(y, 0.95, epsilon = 1e-12);
    }

    #[test]
    fn ground_truth_diagonal_and_symmetry() {
        let g = generate_graph(GraphModel::Er { p: 0.5 }, 8, 21).unwrap();
        for kind in MetricKind::ALL {
            let m = assign_edge_metrics(&g, kind, 13).unwrap();
            let gt = all_pairs_ground_truth(&g, &m, kind);
            for u in 0..8 {
                assert_eq!(gt.y[[u, u]], kind.identity());
                for v in 0..8 {
                    if u != v {
                        assert_eq!(gt.y[[u, v]].to_bits(), gt.y[[v, u]].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn corruption_counts_and_mask() {
        let g = generate_graph(GraphModel::Er { p: 0.25 }, 12, 31).unwrap();
        let e = g.edge_count();
        let c = corrupt_topology(&g, 0.2, 9).unwrap();
        let k = (0.2 * e as f64).ceil() as usize;
        assert_eq!(c.removed.len(), k);
        assert_eq!(c.added.len(), k);
        for &(u, v) in &c.added {
            assert!(!g.has_edge(u, v));
            assert!(c.a_obs.has_edge(u, v));
        }
        for &(u, v) in &c.removed {
            assert!(g.has_edge(u, v));
            assert!(!c.a_obs.has_edge(u, v));
        }
        // symmetric difference of edge sets has size 2k
        let true_edges: std::collections::HashSet<(usize, usize)> =
            g.edges().into_iter().map(|(u, v, _)| (u, v)).collect();
        let obs_edges: std::collections::HashSet<(usize, usize)> =
            c.a_obs.edges().into_iter().map(|(u, v, _)| (u, v)).collect();
        let sym_diff = true_edges.symmetric_difference(&obs_edges).count();
        assert_eq!(sym_diff, 2 * k);
        // mask equals observed support
        for u in 0..12 {
            for v in 0..12 {
                assert_eq!(c.mask.get(u, v), c.a_obs.weight(u, v) > 0.0);
            }
        }
    }

    #[test]
    fn zero_corruption_is_identity() {
        let g = generate_graph(GraphModel::Er { p: 0.3 }, 10, 17).unwrap();
        let c = corrupt_topology(&g, 0.0, 3).unwrap();
        assert_eq!(&c.a_obs, &g);
        assert!(c.removed.is_empty() && c.added.is_empty());
    }

    #[test]
    fn sampling_counts_and_partition() {
        let g = generate_graph(GraphModel::Er { p: 0.08 }, 100, 41).unwrap();
        let m = assign_edge_metrics(&g, MetricKind::Additive, 7).unwrap();
        let gt = all_pairs_ground_truth(&g, &m, MetricKind::Additive);
        let obs = sample_observations(&gt, 0.3, 0.2, 19).unwrap();
        // floor(0.3 * 4950) = 1485
        assert_eq!(obs.train.len() + obs.validation.len(), 1485);
        assert!(obs.train.len() == 743 && obs.validation.len() == 742);
        let train: std::collections::HashSet<(usize, usize)> =
            obs.train.iter().map(|&(u, v, _)| (u, v)).collect();
        for &(u, v, _) in &obs.test {
            assert!(!train.contains(&(u, v)));
        }
        // every selected pair touches a monitor
        let mon: std::collections::HashSet<usize> = obs.monitors.iter().copied().collect();
        for &(u, v, _) in obs.train.iter().chain(&obs.validation) {
            assert!(mon.contains(&u) || mon.contains(&v));
        }
    }

    #[test]
    fn degenerate_sampling_rate_errors() {
        let g = generate_graph(GraphModel::Er { p: 0.9 }, 4, 2).unwrap();
        let m = assign_edge_metrics(&g, MetricKind::Additive, 1).unwrap();
        let gt = all_pairs_ground_truth(&g, &m, MetricKind::Additive);
        assert!(matches!(sample_observations(&gt, 0.01, 0.5, 1), Err(Error::Sampling(_))));
    }

    #[test]
    fn observations_csv_round_trip() {
        let g = generate_graph(GraphModel::Er { p: 0.4 }, 10, 51).unwrap();
        let m = assign_edge_metrics(&g, MetricKind::MinMax, 3).unwrap();
        let gt = all_pairs_ground_truth(&g, &m, MetricKind::MinMax);
        let obs = sample_observations(&gt, 0.3, 0.5, 2).unwrap();
        let text = obs.to_csv_string();
        let back = ObservationSet::parse_csv_string(&text).unwrap();
        assert_eq!(obs.train, back.train);
        assert_eq!(obs.validation, back.validation);
        assert_eq!(obs.test, back.test);
    }

    #[test]
    fn metric_file_round_trip() {
        let g = generate_graph(GraphModel::Er { p: 0.35 }, 9, 61).unwrap();
        let m = assign_edge_metrics(&g, MetricKind::Multiplicative, 8).unwrap();
        let text = m.to_metric_string(&g);
        let back = EdgeMetricMap::parse_metric_string(&text, &g).unwrap();
        assert_eq!(m, back);
    }
}
