//! Path-centric graph neural network with hand-written reverse-mode
//! gradients.
//!
//! Pipeline per node pair: symmetric degree-normalized adjacency, a two-layer
//! GCN over fixed binary node features, attention from each endpoint over the
//! nodes of every sampled candidate path, mean pooling over paths, then a
//! linear head on the concatenated pair embedding. Gradients flow to every
//! parameter tensor and to the learned adjacency through the normalization.

use ndarray::{s, Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{sym_matrix, DenseAdjacency};
use crate::paths::PathSet;
use crate::rng::{stream_rng, Stream};

/// Negative-side slope of the attention logit activation.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Most-significant-bit-first binary encoding of a node id.
pub fn binary_encode(node_id: usize, d: usize) -> Result<Array1<f64>> {
    if d < usize::BITS as usize && node_id >= (1usize << d) {
        return Err(Error::Input(format!("node id {node_id} does not fit in {d} bits")));
    }
    let mut v = Array1::zeros(d);
    for bit in 0..d {
        let shift = d - 1 - bit;
        if shift < usize::BITS as usize && (node_id >> shift) & 1 == 1 {
            v[bit] = 1.0;
        }
    }
    Ok(v)
}

/// Fixed input features; never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub h0: Array2<f64>,
}

impl NodeFeatures {
    /// Binary id encoding, requiring d >= ceil(log2 n).
    pub fn binary(n: usize, d: usize) -> Result<Self> {
        let need = if n <= 2 { 1 } else { (usize::BITS - (n - 1).leading_zeros()) as usize };
        if d < need {
            return Err(Error::Input(format!("d={d} too small for n={n}, need at least {need}")));
        }
        let mut h0 = Array2::zeros((n, d));
        for i in 0..n {
            h0.row_mut(i).assign(&binary_encode(i, d)?);
        }
        Ok(Self { h0 })
    }

    pub fn n(&self) -> usize {
        self.h0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.h0.ncols()
    }
}

/// All trainable quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,    // d x h
    pub w2: Array2<f64>,    // h x h
    pub r: Array1<f64>,     // 2h attention vector
    pub w_out: Array2<f64>, // 2h x o
    pub b_out: Array1<f64>, // o
}

impl ModelParams {
    /// Seeded uniform(-s, s) init with s = 1/sqrt(fan_in) per tensor.
    pub fn init(d: usize, h: usize, o: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::ModelInit);
        let mut draw = |rows: usize, cols: usize, fan_in: usize| -> Array2<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-s..s))
        };
        let w1 = draw(d, h, d);
        let w2 = draw(h, h, h);
        let r = draw(2 * h, 1, 2 * h).column(0).to_owned();
        let w_out = draw(2 * h, o, 2 * h);
        let b_out = draw(o, 1, 2 * h).column(0).to_owned();
        Self { w1, w2, r, w_out, b_out }
    }

    pub fn zeros(d: usize, h: usize, o: usize) -> Self {
        Self {
            w1: Array2::zeros((d, h)),
            w2: Array2::zeros((h, h)),
            r: Array1::zeros(2 * h),
            w_out: Array2::zeros((2 * h, o)),
            b_out: Array1::zeros(o),
        }
    }

    /// (d, h, o)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w_out.ncols())
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|x| x.is_finite())
            && self.w2.iter().all(|x| x.is_finite())
            && self.r.iter().all(|x| x.is_finite())
            && self.w_out.iter().all(|x| x.is_finite())
            && self.b_out.iter().all(|x| x.is_finite())
    }

    /// self += scale * other, tensor by tensor.
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        self.w1.scaled_add(scale, &other.w1);
        self.w2.scaled_add(scale, &other.w2);
        self.r.scaled_add(scale, &other.r);
        self.w_out.scaled_add(scale, &other.w_out);
        self.b_out.scaled_add(scale, &other.b_out);
    }

    /// Flat copy for coordinate-wise loops (gradient checks, adaptive
    /// updates).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.w1.iter());
        v.extend(self.w2.iter());
        v.extend(self.r.iter());
        v.extend(self.w_out.iter());
        v.extend(self.b_out.iter());
        v
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for x in self
            .w1
            .iter_mut()
            .chain(self.w2.iter_mut())
            .chain(self.r.iter_mut())
            .chain(self.w_out.iter_mut())
            .chain(self.b_out.iter_mut())
        {
            *x = it.next().expect("flat vector too short");
        }
        assert!(it.next().is_none(), "flat vector too long");
    }
}

/// Gradient of a loss with respect to every parameter tensor and the
/// learned adjacency.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub r: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub adj: Array2<f64>,
}

impl Gradients {
    pub fn zeros(params: &ModelParams, n: usize) -> Self {
        Self {
            w1: Array2::zeros(params.w1.dim()),
            w2: Array2::zeros(params.w2.dim()),
            r: Array1::zeros(params.r.len()),
            w_out: Array2::zeros(params.w_out.dim()),
            b_out: Array1::zeros(params.b_out.len()),
            adj: Array2::zeros((n, n)),
        }
    }

    /// Parameter part flattened in the same order as
    /// `ModelParams::flatten`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.w1.iter());
        v.extend(self.w2.iter());
        v.extend(self.r.iter());
        v.extend(self.w_out.iter());
        v.extend(self.b_out.iter());
        v
    }

    pub fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.w2 *= factor;
        self.r *= factor;
        self.w_out *= factor;
        self.b_out *= factor;
        self.adj *= factor;
    }
}

/// D^{-1/2} (sym(A) + I) D^{-1/2} with D the degree diagonal of sym(A) + I.
pub fn normalize_adjacency(adj: &DenseAdjacency) -> Array2<f64> {
    normalized_with_parts(adj.weights()).0
}

fn normalized_with_parts(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = a.nrows();
    let mut t = sym_matrix(a);
    for i in 0..n {
        t[[i, i]] += 1.0;
    }
    let deg: Array1<f64> = t.sum_axis(ndarray::Axis(1));
    let inv_sqrt: Array1<f64> = deg.mapv(|x| 1.0 / x.sqrt());
    let mut a_hat = t;
    for i in 0..n {
        for j in 0..n {
            a_hat[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    (a_hat, deg)
}

/// Everything the backward pass needs from one GCN forward.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    pub a_hat: Array2<f64>,
    pub degrees: Array1<f64>,
    pub z1: Array2<f64>, // A_hat H0 W1, pre-activation
    pub h1: Array2<f64>,
    pub z2: Array2<f64>, // A_hat H1 W2, pre-activation
    pub h: Array2<f64>,
    pub m1: Array2<f64>, // A_hat H0
    pub m2: Array2<f64>, // A_hat H1
}

/// H = ReLU(A_hat ReLU(A_hat H0 W1) W2), returning the full trace.
pub fn gcn_forward(
    h0: &NodeFeatures,
    adj: &DenseAdjacency,
    params: &ModelParams,
) -> Result<GcnTrace> {
    let (a_hat, degrees) = normalized_with_parts(adj.weights());
    let m1 = a_hat.dot(&h0.h0);
    let z1 = m1.dot(&params.w1);
    let h1 = z1.mapv(|x| x.max(0.0));
    let m2 = a_hat.dot(&h1);
    let z2 = m2.dot(&params.w2);
    let h = z2.mapv(|x| x.max(0.0));
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite GCN activations".into()));
    }
    Ok(GcnTrace { a_hat, degrees, z1, h1, z2, h, m1, m2 })
}

/// Attention of a query embedding over the embeddings of one path's nodes.
/// Returns the softmax weights and h_query + ReLU(sum_z alpha_z h_z).
pub fn path_attention(
    h_query: &Array1<f64>,
    path_embeddings: &[Array1<f64>],
    r: &Array1<f64>,
) -> (Vec<f64>, Array1<f64>) {
    assert!(!path_embeddings.is_empty(), "attention needs a nonempty path");
    let dim = h_query.len();
    let pre: Vec<f64> = path_embeddings
        .iter()
        .map(|hz| {
            let mut logit = 0.0;
            for k in 0..dim {
                logit += r[k] * h_query[k] + r[dim + k] * hz[k];
            }
            logit
        })
        .collect();
    let (alpha, s_vec) = attention_from_logits(&pre, path_embeddings.iter(), dim);
    let out = h_query + &s_vec.mapv(|x: f64| x.max(0.0));
    (alpha, out)
}

fn attention_from_logits<'a>(
    pre: &[f64],
    embeddings: impl Iterator<Item = &'a Array1<f64>>,
    dim: usize,
) -> (Vec<f64>, Array1<f64>) {
    let act: Vec<f64> = pre.iter().map(|&x| if x > 0.0 { x } else { LEAKY_SLOPE * x }).collect();
    let m = act.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = act.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    let mut s_vec = Array1::zeros(dim);
    for (a, hz) in alpha.iter().zip(embeddings) {
        s_vec.scaled_add(*a, hz);
    }
    (alpha, s_vec)
}

/// Attention bookkeeping for one (pair, path, endpoint) triple.
#[derive(Debug, Clone)]
pub struct SideTrace {
    pub pre: Vec<f64>,      // attention logits before LeakyReLU
    pub alpha: Vec<f64>,    // softmax weights
    pub s_vec: Array1<f64>, // weighted sum of path embeddings, pre-ReLU
}

/// Forward bookkeeping for one node pair.
#[derive(Debug, Clone)]
pub struct PairTrace {
    pub u: usize,
    pub v: usize,
    pub path_nodes: Vec<Vec<usize>>,
    pub u_sides: Vec<SideTrace>,
    pub v_sides: Vec<SideTrace>,
    pub head_in: Array1<f64>, // [h_u_hat || h_v_hat]
    pub out: Array1<f64>,     // o raw head outputs
}

fn attend(
    h: &Array2<f64>,
    query: usize,
    nodes: &[usize],
    r: &Array1<f64>,
) -> (SideTrace, Array1<f64>) {
    let dim = h.ncols();
    let hq = h.row(query);
    let pre: Vec<f64> = nodes
        .iter()
        .map(|&z| {
            let hz = h.row(z);
            let mut logit = 0.0;
            for k in 0..dim {
                logit += r[k] * hq[k] + r[dim + k] * hz[k];
            }
            logit
        })
        .collect();
    let act: Vec<f64> = pre.iter().map(|&x| if x > 0.0 { x } else { LEAKY_SLOPE * x }).collect();
    let m = act.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = act.iter().map(|&x| (x - m).exp()).collect();
    let zsum: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|&e| e / zsum).collect();
    let mut s_vec = Array1::zeros(dim);
    for (a, &z) in alpha.iter().zip(nodes) {
        s_vec.scaled_add(*a, &h.row(z));
    }
    let hat = &hq.to_owned() + &s_vec.mapv(|x: f64| x.max(0.0));
    (SideTrace { pre, alpha, s_vec }, hat)
}

/// Pair embedding via per-path attention and mean pooling. With no sampled
/// paths the raw GCN embeddings stand in.
pub fn pair_embed(
    u: usize,
    v: usize,
    h: &Array2<f64>,
    paths: &PathSet,
    r: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    if paths.is_empty() {
        return (h.row(u).to_owned(), h.row(v).to_owned());
    }
    let dim = h.ncols();
    let mut hu = Array1::zeros(dim);
    let mut hv = Array1::zeros(dim);
    for p in &paths.paths {
        let (_, hau) = attend(h, u, &p.nodes, r);
        let (_, hav) = attend(h, v, &p.nodes, r);
        hu += &hau;
        hv += &hav;
    }
    let scale = 1.0 / paths.paths.len() as f64;
    (hu * scale, hv * scale)
}

/// Full per-pair forward over an already computed GCN embedding table.
/// Endpoints are canonicalized to u < v so the prediction is orientation
/// free on a symmetric adjacency.
pub fn forward_pair(
    h: &Array2<f64>,
    params: &ModelParams,
    u: usize,
    v: usize,
    paths: &PathSet,
) -> PairTrace {
    let (u, v) = (u.min(v), u.max(v));
    let dim = h.ncols();
    let mut path_nodes = Vec::new();
    let mut u_sides = Vec::new();
    let mut v_sides = Vec::new();
    let (hu_hat, hv_hat) = if paths.is_empty() {
        (h.row(u).to_owned(), h.row(v).to_owned())
    } else {
        let mut hu = Array1::zeros(dim);
        let mut hv = Array1::zeros(dim);
        for p in &paths.paths {
            let (tu, hau) = attend(h, u, &p.nodes, &params.r);
            let (tv, hav) = attend(h, v, &p.nodes, &params.r);
            hu += &hau;
            hv += &hav;
            path_nodes.push(p.nodes.clone());
            u_sides.push(tu);
            v_sides.push(tv);
        }
        let scale = 1.0 / paths.paths.len() as f64;
        (hu * scale, hv * scale)
    };
    let mut head_in = Array1::zeros(2 * dim);
    head_in.slice_mut(s![..dim]).assign(&hu_hat);
    head_in.slice_mut(s![dim..]).assign(&hv_hat);
    let out = head_in.dot(&params.w_out) + &params.b_out;
    PairTrace { u, v, path_nodes, u_sides, v_sides, head_in, out }
}

/// Scalar prediction for one pair: raw head output for regression heads
/// (o = 1), class-1 probability for boolean heads (o = 2).
pub fn predict(
    h: &Array2<f64>,
    params: &ModelParams,
    u: usize,
    v: usize,
    paths: &PathSet,
) -> f64 {
    let trace = forward_pair(h, params, u, v, paths);
    prediction_value(&trace.out)
}

/// Collapses head outputs to a scalar: identity for o = 1, class-1 softmax
/// probability for o = 2.
pub fn prediction_value(out: &Array1<f64>) -> f64 {
    if out.len() == 1 {
        out[0]
    } else {
        let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e0 = (out[0] - m).exp();
        let e1 = (out[1] - m).exp();
        e1 / (e0 + e1)
    }
}

/// Mean data-fit loss: squared error for regression kinds, cross entropy on
/// class-1 probabilities for boolean.
pub fn loss_gnn(predictions: &[f64], targets: &[f64], kind: crate::sim::MetricKind) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    if predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = if kind.is_regression() {
        predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum()
    } else {
        predictions
            .iter()
            .zip(targets)
            .map(|(&p, &t)| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum()
    };
    total / predictions.len() as f64
}

/// Hinge penalty of one triangle bound: max(0, prediction "minus" bound),
/// with the difference oriented by the metric kind.
pub fn loss_triangle(
    prediction: f64,
    y_uz: f64,
    y_zv: f64,
    kind: crate::sim::MetricKind,
) -> f64 {
    let bound = kind.combine(y_uz, y_zv);
    kind.penalty_diff(prediction, bound).max(0.0)
}

/// Reverse pass through one pair given d(loss)/d(out). Accumulates parameter
/// gradients and the gradient w.r.t. the shared GCN embedding table.
pub fn backward_pair(
    trace: &PairTrace,
    h: &Array2<f64>,
    params: &ModelParams,
    dout: &Array1<f64>,
    grads: &mut Gradients,
    dh: &mut Array2<f64>,
) {
    let dim = h.ncols();
    // head: out = head_in . w_out + b
    for a in 0..2 * dim {
        for b in 0..dout.len() {
            grads.w_out[[a, b]] += trace.head_in[a] * dout[b];
        }
    }
    for b in 0..dout.len() {
        grads.b_out[b] += dout[b];
    }
    let dhead = params.w_out.dot(dout); // 2h
    let dhu = dhead.slice(s![..dim]).to_owned();
    let dhv = dhead.slice(s![dim..]).to_owned();

    if trace.path_nodes.is_empty() {
        for k in 0..dim {
            dh[[trace.u, k]] += dhu[k];
            dh[[trace.v, k]] += dhv[k];
        }
        return;
    }

    let pscale = 1.0 / trace.path_nodes.len() as f64;
    for (p_idx, nodes) in trace.path_nodes.iter().enumerate() {
        for (side, dside, query) in [
            (&trace.u_sides[p_idx], &dhu, trace.u),
            (&trace.v_sides[p_idx], &dhv, trace.v),
        ] {
            // gradient reaching this path's updated embedding
            let g: Array1<f64> = dside * pscale;
            // identity branch
            for k in 0..dim {
                dh[[query, k]] += g[k];
            }
            // ReLU over the aggregated vector
            let ds: Array1<f64> =
                Array1::from_shape_fn(dim, |k| if side.s_vec[k] > 0.0 { g[k] } else { 0.0 });
            // carried h_z branch and attention coefficients
            let mut dalpha = vec![0.0; nodes.len()];
            for (j, &z) in nodes.iter().enumerate() {
                let hz = h.row(z);
                let mut dot = 0.0;
                for k in 0..dim {
                    dot += ds[k] * hz[k];
                    dh[[z, k]] += side.alpha[j] * ds[k];
                }
                dalpha[j] = dot;
            }
            // softmax then LeakyReLU
            let weighted: f64 = side.alpha.iter().zip(&dalpha).map(|(a, da)| a * da).sum();
            for (j, &z) in nodes.iter().enumerate() {
                let de = side.alpha[j] * (dalpha[j] - weighted);
                let dpre = if side.pre[j] > 0.0 { de } else { LEAKY_SLOPE * de };
                let hq = h.row(query);
                let hz = h.row(z);
                for k in 0..dim {
                    grads.r[k] += dpre * hq[k];
                    grads.r[dim + k] += dpre * hz[k];
                    dh[[query, k]] += dpre * params.r[k];
                    dh[[z, k]] += dpre * params.r[dim + k];
                }
            }
        }
    }
}

/// Reverse pass through the GCN and adjacency normalization given the
/// accumulated d(loss)/dH. Adds to grads.w1, grads.w2 and grads.adj.
pub fn backward_gcn(
    trace: &GcnTrace,
    h0: &NodeFeatures,
    params: &ModelParams,
    dh: &Array2<f64>,
    grads: &mut Gradients,
) {
    let n = trace.a_hat.nrows();
    // H = relu(z2), z2 = m2 w2, m2 = a_hat h1
    let dz2 = Array2::from_shape_fn(trace.z2.dim(), |(i, j)| {
        if trace.z2[[i, j]] > 0.0 {
            dh[[i, j]]
        } else {
            0.0
        }
    });
    grads.w2 += &trace.m2.t().dot(&dz2);
    let dm2 = dz2.dot(&params.w2.t());
    let mut da_hat = dm2.dot(&trace.h1.t());
    let dh1 = trace.a_hat.t().dot(&dm2);

    // h1 = relu(z1), z1 = m1 w1, m1 = a_hat h0
    let dz1 = Array2::from_shape_fn(trace.z1.dim(), |(i, j)| {
        if trace.z1[[i, j]] > 0.0 {
            dh1[[i, j]]
        } else {
            0.0
        }
    });
    grads.w1 += &trace.m1.t().dot(&dz1);
    let dm1 = dz1.dot(&params.w1.t());
    da_hat += &dm1.dot(&h0.h0.t());

    // a_hat_ij = t_ij / sqrt(d_i d_j) with t = sym(adj) + I and d the row
    // sums of t; entry S_ij feeds t_ij directly and d_i through its row sum
    let inv_sqrt: Array1<f64> = trace.degrees.mapv(|x| 1.0 / x.sqrt());
    let mut dd = Array1::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += da_hat[[i, j]] * trace.a_hat[[i, j]] + da_hat[[j, i]] * trace.a_hat[[j, i]];
        }
        dd[i] = -acc / (2.0 * trace.degrees[i]);
    }
    let mut dadj = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ds_ij = da_hat[[i, j]] * inv_sqrt[i] * inv_sqrt[j] + dd[i];
            let ds_ji = da_hat[[j, i]] * inv_sqrt[j] * inv_sqrt[i] + dd[j];
            // through the symmetrization S = (adj + adj^T)/2
            dadj[[i, j]] = 0.5 * (ds_ij + ds_ji);
        }
    }
    grads.adj += &dadj;
}

/// One full forward snapshot: the GCN trace plus per-pair traces and the
/// loss-layer seeds d(loss)/d(out) for every pair.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub gcn: GcnTrace,
    pub pairs: Vec<PairTrace>,
    pub douts: Vec<Array1<f64>>,
}

/// Maps loss-layer seeds back to parameter space. `loss_seed` scales the
/// whole gradient (1.0 for a plain loss).
pub fn backward(
    trace: &ForwardTrace,
    h0: &NodeFeatures,
    params: &ModelParams,
    loss_seed: f64,
) -> Result<Gradients> {
    if trace.pairs.len() != trace.douts.len() {
        return Err(Error::Contract("forward trace has mismatched pair/seed counts".into()));
    }
    if trace.gcn.h.dim() != (h0.n(), params.w1.ncols()) {
        return Err(Error::Contract("stale trace: shape mismatch with features/params".into()));
    }
    let n = trace.gcn.a_hat.nrows();
    let mut grads = Gradients::zeros(params, n);
    let mut dh = Array2::zeros(trace.gcn.h.dim());
    for (pair, dout) in trace.pairs.iter().zip(&trace.douts) {
        backward_pair(pair, &trace.gcn.h, params, dout, &mut grads, &mut dh);
    }
    backward_gcn(&trace.gcn, h0, params, &dh, &mut grads);
    if loss_seed != 1.0 {
        grads.scale(loss_seed);
    }
    // symmetric adjacency has a symmetric gradient; the diagonal is fixed
    grads.adj = sym_matrix(&grads.adj);
    for i in 0..n {
        grads.adj[[i, i]] = 0.0;
    }
    Ok(grads)
}
