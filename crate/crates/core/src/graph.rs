//! Dense weighted graphs and the connectivity machinery built on them:
//! symmetrization, the Z-matrix whose positive definiteness certifies weak
//! connectivity, Tarjan's strongly connected components, and transitive
//! closure over a binarized edge set.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::eig::min_eigenvalue_sym;
use crate::error::{Error, Result};

/// Square non-negative weight matrix with zero diagonal. `w[[i, j]] > 0`
/// means an edge i -> j; undirected graphs keep `w` exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAdjacency {
    n: usize,
    directed: bool,
    w: Array2<f64>,
}

impl DenseAdjacency {
    /// Validating constructor. Rejects non-square/negative/non-finite input,
    /// a nonzero diagonal, and asymmetry when `directed` is false.
    pub fn new(w: Array2<f64>, directed: bool) -> Result<Self> {
        let (r, c) = w.dim();
        if r != c {
            return Err(Error::Input(format!("adjacency must be square, got {r}x{c}")));
        }
        for ((i, j), &v) in w.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite weight at ({i},{j})")));
            }
            if v < 0.0 {
                return Err(Error::Input(format!("negative weight {v} at ({i},{j})")));
            }
            if i == j && v != 0.0 {
                return Err(Error::Input(format!("nonzero diagonal at ({i},{i})")));
            }
            if !directed && w[[j, i]] != v {
                return Err(Error::Input(format!(
                    "undirected adjacency must be symmetric, mismatch at ({i},{j})"
                )));
            }
        }
        Ok(Self { n: r, directed, w })
    }

    pub fn zeros(n: usize, directed: bool) -> Self {
        Self { n, directed, w: Array2::zeros((n, n)) }
    }

    pub fn from_edges(n: usize, directed: bool, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Array2::zeros((n, n));
        for &(u, v, x) in edges {
            if u >= n || v >= n {
                return Err(Error::Input(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::Input(format!("self-loop at node {u}")));
            }
            w[[u, v]] = x;
            if !directed {
                w[[v, u]] = x;
            }
        }
        Self::new(w, directed)
    }

    /// Unit-weight convenience for tests and generators.
    pub fn from_unit_edges(n: usize, directed: bool, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        Self::from_edges(n, directed, &weighted)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.w[[u, v]]
    }

    /// Sets w[u][v] (and the mirror entry when undirected).
    pub fn set_edge(&mut self, u: usize, v: usize, x: f64) {
        self.w[[u, v]] = x;
        if !self.directed {
            self.w[[v, u]] = x;
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.w[[u, v]] > 0.0
    }

    /// Edges in canonical order: (u, v) with u < v for undirected graphs,
    /// every nonzero entry for directed ones. Sorted by (u, v).
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in 0..self.n {
                if self.w[[u, v]] > 0.0 && (self.directed || u < v) {
                    out.push((u, v, self.w[[u, v]]));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Out-neighbors of `u` over edges with weight strictly above `tau`,
    /// ascending by node index.
    pub fn neighbors_out(&self, u: usize, tau: f64) -> Vec<usize> {
        (0..self.n).filter(|&v| self.w[[u, v]] > tau).collect()
    }

    /// Serializes to the edge-list text format:
    /// a `nodes N directed {0|1}` header, then `u v weight` lines.
    pub fn to_edge_list_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} directed {}", self.n, if self.directed { 1 } else { 0 });
        for (u, v, x) in self.edges() {
            let _ = writeln!(s, "{u} {v} {x}");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge-list file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "nodes" || toks[2] != "directed" {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        }
        let n: usize = toks[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad node count: {:?}", toks[1])))?;
        let directed = match toks[3] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("bad directed flag: {other:?}"))),
        };
        let mut edges = Vec::new();
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse(format!("bad edge line: {line:?}")));
            }
            let u: usize = t[0].parse().map_err(|_| Error::Parse(format!("bad node id: {line:?}")))?;
            let v: usize = t[1].parse().map_err(|_| Error::Parse(format!("bad node id: {line:?}")))?;
            let x: f64 = t[2].parse().map_err(|_| Error::Parse(format!("bad weight: {line:?}")))?;
            edges.push((u, v, x));
        }
        Self::from_edges(n, directed, &edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list_string())?;
        Ok(())
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text)
    }
}

/// (A + A^T) / 2 on the raw matrix.
pub fn sym_matrix(a: &Array2<f64>) -> Array2<f64> {
    (a + &a.t()) * 0.5
}

/// Symmetrization of an adjacency; the result is undirected.
pub fn sym(a: &DenseAdjacency) -> DenseAdjacency {
    DenseAdjacency { n: a.n, directed: false, w: sym_matrix(&a.w) }
}

/// Z = diag(row sums) - A + (1/n) 11^T. Positive definiteness of sym(Z)
/// certifies weak connectivity of the (symmetrized) graph.
pub fn z_of(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let row_sums = a.sum_axis(Axis(1));
    let mut z = Array2::from_elem((n, n), 1.0 / n as f64);
    z -= a;
    for i in 0..n {
        z[[i, i]] += row_sums[i];
    }
    z
}

pub fn z_matrix(a: &DenseAdjacency) -> Array2<f64> {
    z_of(&a.w)
}

/// Binary path-existence matrix. Diagonal is 1: the empty path connects
/// every node to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n: usize,
    m: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, m: vec![0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n);
        for i in 0..n {
            b.set(i, i, true);
        }
        b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.m[i * self.n + j] != 0
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.m[i * self.n + j] = v as u8;
    }

    pub fn to_f64(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Support of a weight matrix: entries strictly above `tau`. The diagonal
    /// stays 0 (this is an edge mask, not a reachability matrix).
    pub fn from_support(a: &DenseAdjacency, tau: f64) -> Self {
        let n = a.n();
        let mut b = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && a.weight(i, j) > tau {
                    b.set(i, j, true);
                }
            }
        }
        b
    }
}

/// Strongly connected components; a partition of [0, n).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccPartition {
    pub components: Vec<Vec<usize>>,
}

impl SccPartition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// component id per node.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let mut lab = vec![usize::MAX; n];
        for (c, comp) in self.components.iter().enumerate() {
            for &v in comp {
                lab[v] = c;
            }
        }
        lab
    }
}

/// Tarjan's algorithm over edges with weight > tau. Components come out in
/// reverse topological order of the condensation; node order inside each
/// component is ascending. Iterative so deep graphs cannot overflow the stack.
pub fn tarjan_scc(a: &DenseAdjacency, tau: f64) -> SccPartition {
    let n = a.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|u| a.neighbors_out(u, tau)).collect();

    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components: Vec<Vec<usize>> = Vec::new();

    // Explicit DFS frames: (node, next neighbor position).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        frames.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    SccPartition { components }
}

/// Transitive closure over edges with weight > tau (BFS per source).
pub fn reachability(a: &DenseAdjacency, tau: f64) -> BinaryMatrix {
    let n = a.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|u| a.neighbors_out(u, tau)).collect();
    let mut r = BinaryMatrix::identity(n);
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        let mut seen = vec![false; n];
        seen[s] = true;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    r.set(s, v, true);
                    queue.push_back(v);
                }
            }
        }
    }
    r
}

/// Connected components of the undirected support (weight > tau on either
/// direction), ascending node order inside and between components.
pub fn components_undirected(a: &DenseAdjacency, tau: f64) -> Vec<Vec<usize>> {
    let n = a.n();
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        if comp_of[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        comp_of[s] = id;
        let mut members = vec![s];
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if comp_of[v] == usize::MAX && (a.weight(u, v) > tau || a.weight(v, u) > tau) {
                    comp_of[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Spectral weak-connectivity test: smallest eigenvalue of sym(Z(sym(A)))
/// strictly above `tol`.
pub fn is_weakly_connected(a: &DenseAdjacency, tol: f64) -> Result<bool> {
    let s = sym_matrix(a.weights());
    let z = sym_matrix(&z_of(&s));
    Ok(min_eigenvalue_sym(&z)? > tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(DenseAdjacency::new(array![[0.0, 1.0]], true).is_err());
        assert!(DenseAdjacency::new(array![[0.0, -1.0], [0.0, 0.0]], true).is_err());
        assert!(DenseAdjacency::new(array![[1.0, 0.0], [0.0, 0.0]], true).is_err());
        assert!(DenseAdjacency::new(array![[0.0, 1.0], [0.0, 0.0]], false).is_err());
        assert!(DenseAdjacency::new(array![[0.0, f64::NAN], [0.0, 0.0]], true).is_err());
        assert!(DenseAdjacency::new(array![[0.0, 1.0], [0.0, 0.0]], true).is_ok());
    }

    #[test]
    fn sym_halves_one_way_edges() {
        let a = DenseAdjacency::new(array![[0.0, 2.0], [0.0, 0.0]], true).unwrap();
        let s = sym(&a);
        assert_eq!(s.weights(), &array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn sym_fixes_symmetric_input_and_is_idempotent() {
        let a = DenseAdjacency::from_edges(5, true, &[
            (0, 1, 2.0), (1, 0, 0.5), (2, 3, 1.0), (4, 0, 3.0), (1, 4, 0.25),
        ])
        .unwrap();
        let s1 = sym(&a);
        let s2 = sym(&s1);
        assert_eq!(s1.weights(), s2.weights());

        let b = DenseAdjacency::from_unit_edges(3, false, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(sym(&b).weights(), b.weights());
    }

    #[test]
    fn z_matrix_of_unit_two_cycle() {
        let a = DenseAdjacency::from_unit_edges(2, false, &[(0, 1)]).unwrap();
        let z = z_matrix(&a);
        assert_eq!(z, array![[1.5, -0.5], [-0.5, 1.5]]);
    }

    #[test]
    fn z_matrix_of_empty_two_node_graph() {
        let a = DenseAdjacency::zeros(2, false);
        let z = z_matrix(&a);
        assert_eq!(z, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn z_minus_rank_one_has_zero_row_sums() {
        let a = DenseAdjacency::from_edges(4, true, &[
            (0, 1, 2.0), (1, 2, 0.3), (2, 0, 1.5), (3, 1, 0.7),
        ])
        .unwrap();
        let n = a.n() as f64;
        let z = z_matrix(&a);
        for i in 0..a.n() {
            let mut s = 0.0;
            for j in 0..a.n() {
                s += z[[i, j]] - 1.0 / n;
            }
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tarjan_cycle_is_one_component() {
        let a = DenseAdjacency::from_unit_edges(3, true, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let p = tarjan_scc(&a, 0.0);
        assert_eq!(p.components, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn tarjan_chain_is_singletons_in_reverse_topological_order() {
        let a = DenseAdjacency::from_unit_edges(3, true, &[(0, 1), (1, 2)]).unwrap();
        let p = tarjan_scc(&a, 0.0);
        assert_eq!(p.components, vec![vec![2], vec![1], vec![0]]);
    }

    #[test]
    fn tarjan_matches_bruteforce_mutual_reachability() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, crate::rng::Stream::Graph);
        for _ in 0..50 {
            let n = 8;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.random::<f64>() < 0.2 {
                        edges.push((u, v));
                    }
                }
            }
            let a = DenseAdjacency::from_unit_edges(n, true, &edges).unwrap();
            let p = tarjan_scc(&a, 0.0);
            let r = reachability(&a, 0.0);
            // mutual reachability classes straight from the closure
            let labels = p.labels(n);
            for i in 0..n {
                for j in 0..n {
                    let mutual = r.get(i, j) && r.get(j, i);
                    assert_eq!(labels[i] == labels[j], mutual, "nodes {i},{j}");
                }
            }
            // partition covers [0, n) exactly once
            let mut seen = vec![0; n];
            for comp in &p.components {
                for &v in comp {
                    seen[v] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn reachability_on_chain_and_empty_graph() {
        let a = DenseAdjacency::from_unit_edges(3, true, &[(0, 1), (1, 2)]).unwrap();
        let r = reachability(&a, 0.0);
        assert!(r.get(0, 2));
        assert!(!r.get(2, 0));

        let e = DenseAdjacency::zeros(4, true);
        let r = reachability(&e, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.get(i, j), i == j);
            }
        }
    }

    #[test]
    fn reachability_matches_floyd_warshall() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(5, crate::rng::Stream::Graph);
        for _ in 0..30 {
            let n = 7;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.random::<f64>() < 0.25 {
                        edges.push((u, v));
                    }
                }
            }
            let a = DenseAdjacency::from_unit_edges(n, true, &edges).unwrap();
            let r = reachability(&a, 0.0);

            // Floyd–Warshall transitive closure oracle
            let mut c = vec![vec![false; n]; n];
            for i in 0..n {
                c[i][i] = true;
            }
            for &(u, v) in &edges {
                c[u][v] = true;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        c[i][j] = c[i][j] || (c[i][k] && c[k][j]);
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(r.get(i, j), c[i][j]);
                }
            }
        }
    }

    #[test]
    fn reachability_is_transitively_closed() {
        let a = DenseAdjacency::from_unit_edges(6, true, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let r = reachability(&a, 0.0);
        let n = a.n();
        // composing the closure with itself adds nothing
        for i in 0..n {
            for j in 0..n {
                let via: bool = (0..n).any(|k| r.get(i, k) && r.get(k, j));
                assert_eq!(via, r.get(i, j));
            }
        }
    }

    #[test]
    fn weak_connectivity_spectral_examples() {
        let path = DenseAdjacency::from_unit_edges(4, false, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(is_weakly_connected(&path, 1e-8).unwrap());

        let split = DenseAdjacency::from_unit_edges(4, false, &[(0, 1), (2, 3)]).unwrap();
        assert!(!is_weakly_connected(&split, 1e-8).unwrap());
    }

    #[test]
    fn spectral_verdict_matches_union_find_on_random_graphs() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(23, crate::rng::Stream::Graph);
        for trial in 0..100 {
            let n = 3 + (trial % 10);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random::<f64>() < 0.25 {
                        edges.push((u, v));
                    }
                }
            }
            let a = DenseAdjacency::from_unit_edges(n, false, &edges).unwrap();
            let spectral = is_weakly_connected(&a, 1e-8).unwrap();
            let combinatorial = components_undirected(&a, 0.0).len() == 1;
            assert_eq!(spectral, combinatorial, "n={n} edges={edges:?}");
        }
    }

    #[test]
    fn disconnected_indicator_vector_annihilates_z() {
        // two 2-node components; x = +1 on one, -1 on the other sums to zero
        let a = DenseAdjacency::from_unit_edges(4, false, &[(0, 1), (2, 3)]).unwrap();
        let z = z_matrix(&a);
        let x = array![1.0, 1.0, -1.0, -1.0];
        let q = x.dot(&z.dot(&x));
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_list_round_trip() {
        let a = DenseAdjacency::from_edges(5, false, &[(0, 1, 1.5), (1, 4, 2.0), (2, 3, 0.125)])
            .unwrap();
        let text = a.to_edge_list_string();
        let b = DenseAdjacency::parse_edge_list(&text).unwrap();
        assert_eq!(a, b);

        let with_comments = format!("# a graph\n{text}# trailing noise\n");
        let c = DenseAdjacency::parse_edge_list(&with_comments).unwrap();
        assert_eq!(a, c);
    }
}
