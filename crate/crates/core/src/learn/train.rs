//! Extrapolated proximal-gradient training of the model and the adjacency.
//!
//! Each epoch: extrapolate both iterates, accumulate exact gradients of the
//! smooth objective over shuffled batches at the extrapolated point, take a
//! plain (or adaptive) step on the parameters, soft-threshold the adjacency
//! step, then project the result back onto the connected set. Candidate
//! paths and triangle bounds are refreshed on a fixed schedule and whenever
//! the binarized support drifts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::project::connectivity_projection;
use super::soft_threshold;
use super::surrogate::{surrogate_backward, surrogate_forward};
use crate::eig::eigh;
use crate::error::{Error, Result};
use crate::graph::{
    reachability, sym_matrix, tarjan_scc, z_of, BinaryMatrix, DenseAdjacency, SccPartition,
};
use crate::nn::{
    backward, forward_pair, gcn_forward, ForwardTrace, GcnTrace, Gradients,
    ModelParams, NodeFeatures, PairTrace,
};
use crate::paths::{batch_sample, PathCost, PathSet};
use crate::rng::{stream_rng, Stream};
use crate::sim::{MetricKind, Observation, ObservationSet};

/// Optimizer and model hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimConfig {
    /// Momentum parameter in (0, 1]; the extrapolation weight is 1 - omega.
    pub omega: f64,
    /// Parameter learning rate.
    pub eta: f64,
    /// Adjacency step size (defaults to eta).
    pub eta_adj: f64,
    /// Sparsity weight on ||A||_1.
    pub alpha: f64,
    /// Triangle-penalty weight.
    pub gamma: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Eigenvalue floor enforced by the connectivity projection.
    pub eps_pd: f64,
    /// Binarization threshold for path sampling and support comparisons.
    pub tau: f64,
    /// Epochs between candidate-path refreshes.
    pub path_refresh: usize,
    /// Walk-length cap of the reachability surrogate.
    pub walk_cap: usize,
    pub batch_train: usize,
    pub batch_eval: usize,
    /// Candidate paths per pair (N).
    pub n_paths: usize,
    /// Hop cap per candidate path (L).
    pub max_hops: usize,
    /// GCN hidden width.
    pub hidden: usize,
    /// Input feature width; 0 selects ceil(log2 n).
    pub feature_dim: usize,
    /// Adaptive-moment parameter updates instead of plain gradient steps.
    /// Off-paper convenience; plain steps are the default.
    pub adaptive: bool,
    /// Start the learned adjacency from zero instead of the observed one.
    pub init_adj_zero: bool,
    pub path_cost: PathCost,
    /// Fit regression targets on a log scale (all three regression metric
    /// families are strictly positive); squared error on log targets weights
    /// relative error evenly across magnitudes.
    pub log_targets: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            omega: 0.9,
            eta: 1e-4,
            eta_adj: 1e-4,
            alpha: 1e-4,
            gamma: 1.0,
            max_epochs: 500,
            patience: 10,
            eps_pd: 1e-3,
            tau: 0.1,
            path_refresh: 5,
            walk_cap: 6,
            batch_train: 1024,
            batch_eval: 2048,
            n_paths: 2,
            max_hops: 8,
            hidden: 256,
            feature_dim: 0,
            adaptive: false,
            init_adj_zero: false,
            path_cost: PathCost::Hops,
            log_targets: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config(format!("omega must be in (0,1], got {}", self.omega)));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("eta_adj", self.eta_adj),
            ("eps_pd", self.eps_pd),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha < 0.0 || self.gamma < 0.0 || self.tau < 0.0 {
            return Err(Error::Config("alpha, gamma, tau must be non-negative".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience must not exceed max_epochs".into()));
        }
        if self.max_epochs == 0
            || self.walk_cap == 0
            || self.batch_train == 0
            || self.n_paths == 0
            || self.max_hops == 0
            || self.hidden == 0
            || self.path_refresh == 0
        {
            return Err(Error::Config("epoch/path/batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// The fixed data a training run works against.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub kind: MetricKind,
    pub a_obs: DenseAdjacency,
    pub mask: BinaryMatrix,
    pub r_target: Array2<f64>,
    pub features: NodeFeatures,
    pub train: Vec<Observation>,
    pub validation: Vec<Observation>,
    pub observed: BTreeMap<(usize, usize), f64>,
    pub components: SccPartition,
    /// Output map: raw = exp(shift + scale * head) when log_scale, else
    /// shift + scale * head.
    pub shift: f64,
    pub scale: f64,
    pub log_scale: bool,
}

fn canonical(obs: &[Observation]) -> Vec<Observation> {
    obs.iter().map(|&(u, v, y)| (u.min(v), u.max(v), y)).collect()
}

impl TrainingProblem {
    pub fn new(
        obs: &ObservationSet,
        a_obs: &DenseAdjacency,
        mask: &BinaryMatrix,
        kind: MetricKind,
        config: &OptimConfig,
    ) -> Result<Self> {
        if obs.train.is_empty() {
            return Err(Error::Input("training split is empty".into()));
        }
        let n = a_obs.n();
        let d = if config.feature_dim == 0 {
            if n <= 2 {
                1
            } else {
                (usize::BITS - (n - 1).leading_zeros()) as usize
            }
        } else {
            config.feature_dim
        };
        let features = NodeFeatures::binary(n, d)?;
        let train = canonical(&obs.train);
        let validation = canonical(&obs.validation);

        let log_scale = kind.is_regression()
            && config.log_targets
            && train.iter().all(|&(_, _, y)| y > 0.0);
        let (shift, scale) = if kind.is_regression() {
            let t = |y: f64| if log_scale { y.ln() } else { y };
            let m = train.iter().map(|&(_, _, y)| t(y)).sum::<f64>() / train.len() as f64;
            let var = train.iter().map(|&(_, _, y)| (t(y) - m) * (t(y) - m)).sum::<f64>()
                / train.len() as f64;
            (m, var.sqrt().max(1e-9))
        } else {
            (0.0, 1.0)
        };

        let mut observed = BTreeMap::new();
        for &(u, v, y) in &train {
            observed.insert((u, v), y);
        }

        // components from the observed topology plus one surrogate edge per
        // measured pair (measurement implies reachability)
        let mut aug = a_obs.weights().clone();
        for &(u, v, _) in train.iter().chain(&validation) {
            if aug[[u, v]] == 0.0 {
                aug[[u, v]] = 1.0;
                aug[[v, u]] = 1.0;
            }
        }
        let aug = DenseAdjacency::new(aug, false)?;
        let components = tarjan_scc(&aug, 0.0);

        Ok(Self {
            kind,
            a_obs: a_obs.clone(),
            mask: mask.clone(),
            r_target: reachability(a_obs, 0.0).to_f64(),
            features,
            train,
            validation,
            observed,
            components,
            shift,
            scale,
            log_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.a_obs.n()
    }

    fn to_raw(&self, head: f64) -> f64 {
        if !self.kind.is_regression() {
            return head;
        }
        let affine = self.shift + self.scale * head;
        if self.log_scale {
            affine.exp()
        } else {
            affine
        }
    }

    /// d(raw)/d(head) at the given head output.
    fn raw_jacobian(&self, head: f64) -> f64 {
        if !self.kind.is_regression() {
            return 1.0;
        }
        if self.log_scale {
            self.scale * (self.shift + self.scale * head).exp()
        } else {
            self.scale
        }
    }

    fn normalize(&self, raw: f64) -> f64 {
        if !self.kind.is_regression() {
            return raw;
        }
        let t = if self.log_scale { raw.ln() } else { raw };
        (t - self.shift) / self.scale
    }
}

/// The additive pieces of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub data_fit: f64,
    pub triangle: f64,
    pub structure: f64,
    pub l1: f64,
}

impl LossTerms {
    pub fn smooth(&self, gamma: f64) -> f64 {
        self.data_fit + gamma * self.triangle + self.structure
    }

    pub fn objective(&self, gamma: f64, alpha: f64) -> f64 {
        self.smooth(gamma) + alpha * self.l1
    }

    pub fn is_finite(&self) -> bool {
        self.data_fit.is_finite()
            && self.triangle.is_finite()
            && self.structure.is_finite()
            && self.l1.is_finite()
    }
}

/// Fixed per-epoch triangle data: intermediate node and frozen raw bound.
pub type BoundMap = BTreeMap<(usize, usize), f64>;

/// Candidate-path cache plus the support snapshot it was computed on.
#[derive(Debug, Clone)]
pub struct PathState {
    pub cache: BTreeMap<(usize, usize), PathSet>,
    pub support: BinaryMatrix,
    pub bounds: BoundMap,
}

fn support_drift(a: &BinaryMatrix, b: &BinaryMatrix, n: usize) -> f64 {
    let mut diff = 0usize;
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) != b.get(i, j) {
                diff += 1;
            }
        }
    }
    diff as f64 / (n * n) as f64
}

/// Recomputes path sets for all measured pairs, draws one interior node per
/// training pair, and freezes the triangle bounds (observed leg values where
/// available, otherwise the current model's own predictions as constants).
pub fn refresh_paths(
    problem: &TrainingProblem,
    params: &ModelParams,
    adj: &Array2<f64>,
    config: &OptimConfig,
    rng: &mut ChaCha12Rng,
) -> Result<PathState> {
    let dense = DenseAdjacency::new(adj.clone(), false)?;
    let mut wanted: Vec<(usize, usize)> = problem
        .train
        .iter()
        .chain(&problem.validation)
        .map(|&(u, v, _)| (u, v))
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut cache = batch_sample(
        &dense,
        &wanted,
        config.n_paths,
        config.max_hops,
        config.tau,
        config.path_cost,
    );

    // draw z for every training pair with an interior, in pair order
    let mut z_of_pair: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut leg_pairs: Vec<(usize, usize)> = Vec::new();
    for &(u, v, _) in &problem.train {
        let Some(best) = cache.get(&(u, v)).and_then(|ps| ps.best()) else {
            continue;
        };
        let interior = best.interior();
        if interior.is_empty() {
            continue;
        }
        let z = interior[rng.random_range(0..interior.len())];
        z_of_pair.insert((u, v), z);
        for leg in [(u.min(z), u.max(z)), (z.min(v), z.max(v))] {
            if !problem.observed.contains_key(&leg) && !cache.contains_key(&leg) {
                leg_pairs.push(leg);
            }
        }
    }
    leg_pairs.sort_unstable();
    leg_pairs.dedup();
    cache.extend(batch_sample(
        &dense,
        &leg_pairs,
        config.n_paths,
        config.max_hops,
        config.tau,
        config.path_cost,
    ));

    // freeze bound values with one shared forward pass
    let gcn = gcn_forward(&problem.features, &dense, params)?;
    let empty = PathSet::empty((0, 0));
    let leg_value = |a: usize, b: usize| -> f64 {
        let key = (a.min(b), a.max(b));
        if let Some(&y) = problem.observed.get(&key) {
            return y;
        }
        let paths = cache.get(&key).unwrap_or(&empty);
        let head = crate::nn::predict(&gcn.h, params, key.0, key.1, paths);
        problem.to_raw(head)
    };
    let mut bounds = BoundMap::new();
    for (&(u, v), &z) in &z_of_pair {
        let b = problem.kind.combine(leg_value(u, z), leg_value(z, v));
        bounds.insert((u, v), b);
    }

    Ok(PathState {
        support: BinaryMatrix::from_support(&dense, config.tau),
        cache,
        bounds,
    })
}

struct PairEval {
    trace: PairTrace,
    dout: Array1<f64>,
    data: f64,
    tri: f64,
}

fn eval_pair(
    problem: &TrainingProblem,
    config: &OptimConfig,
    gcn: &GcnTrace,
    params: &ModelParams,
    state: &PathState,
    obs: Observation,
    with_grad: bool,
) -> PairEval {
    let (u, v, y_raw) = obs;
    let empty = PathSet::empty((u, v));
    let paths = state.cache.get(&(u, v)).unwrap_or(&empty);
    let trace = forward_pair(&gcn.h, params, u, v, paths);
    let o = trace.out.len();
    let mut dout = Array1::zeros(o);
    let mut data;
    let mut tri = 0.0;
    if o == 1 {
        let t_norm = problem.normalize(y_raw);
        let resid = trace.out[0] - t_norm;
        data = resid * resid;
        if with_grad {
            dout[0] = 2.0 * resid;
        }
        if let Some(&bound) = state.bounds.get(&(u, v)) {
            let y_hat_raw = problem.to_raw(trace.out[0]);
            let diff = problem.kind.penalty_diff(y_hat_raw, bound);
            if diff > 0.0 {
                tri = diff;
                if with_grad {
                    let sign = match problem.kind {
                        MetricKind::Additive => 1.0,
                        _ => -1.0,
                    };
                    dout[0] += config.gamma * sign * problem.raw_jacobian(trace.out[0]);
                }
            }
        }
    } else {
        // boolean head: cross entropy on the softmax
        let m = trace.out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e0 = (trace.out[0] - m).exp();
        let e1 = (trace.out[1] - m).exp();
        let z = e0 + e1;
        let p0 = e0 / z;
        let p1 = e1 / z;
        let label = y_raw;
        data = -(label * p1.clamp(1e-12, 1.0).ln() + (1.0 - label) * p0.clamp(1e-12, 1.0).ln());
        if with_grad {
            dout[0] = p0 - (1.0 - label);
            dout[1] = p1 - label;
        }
        if let Some(&bound) = state.bounds.get(&(u, v)) {
            let diff = bound - p1;
            if diff > 0.0 {
                tri = diff;
                if with_grad {
                    let dp1 = -config.gamma;
                    let jac = p1 * p0;
                    dout[0] += dp1 * (-jac);
                    dout[1] += dp1 * jac;
                }
            }
        }
    }
    if !data.is_finite() {
        data = f64::INFINITY;
    }
    PairEval { trace, dout, data, tri }
}

/// Smooth-part evaluation at one point, optionally with gradients.
/// Batches only group the work; the result is the full-split mean.
fn eval_smooth(
    problem: &TrainingProblem,
    config: &OptimConfig,
    params: &ModelParams,
    adj: &Array2<f64>,
    state: &PathState,
    batch_order: Option<&[usize]>,
    with_grad: bool,
) -> Result<(LossTerms, Option<Gradients>)> {
    let n = problem.n();
    let dense = DenseAdjacency::new(adj.clone(), false)?;
    let gcn = gcn_forward(&problem.features, &dense, params)?;

    let default_order: Vec<usize> = (0..problem.train.len()).collect();
    let order = batch_order.unwrap_or(&default_order);
    let total = order.len() as f64;

    let mut data_sum = 0.0;
    let mut tri_sum = 0.0;
    let mut pairs: Vec<PairTrace> = Vec::with_capacity(order.len());
    let mut douts: Vec<Array1<f64>> = Vec::with_capacity(order.len());
    for chunk in order.chunks(config.batch_train) {
        for &idx in chunk {
            let ev = eval_pair(problem, config, &gcn, params, state, problem.train[idx], with_grad);
            data_sum += ev.data;
            tri_sum += ev.tri;
            if with_grad {
                pairs.push(ev.trace);
                douts.push(ev.dout);
            }
        }
    }

    // structure term on the masked learned matrix
    let masked = Array2::from_shape_fn((n, n), |(i, j)| {
        if problem.mask.get(i, j) {
            adj[[i, j]]
        } else {
            0.0
        }
    });
    let sur = surrogate_forward(&masked, config.walk_cap);
    let frob = (&sur.r_tilde - &problem.r_target).mapv(|x| x * x).sum();
    let l1 = adj.mapv(f64::abs).sum();

    let terms = LossTerms {
        data_fit: data_sum / total,
        triangle: tri_sum / total,
        structure: frob,
        l1,
    };

    if !with_grad {
        return Ok((terms, None));
    }

    let trace = ForwardTrace { gcn, pairs, douts };
    let mut grads = backward(&trace, &problem.features, params, 1.0 / total)?;

    let d_r = (&sur.r_tilde - &problem.r_target).mapv(|x| 2.0 * x);
    let d_masked = surrogate_backward(&sur, &d_r);
    let mut d_adj_struct = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if problem.mask.get(i, j) {
                d_adj_struct[[i, j]] = d_masked[[i, j]];
            }
        }
    }
    let mut d_adj_struct = sym_matrix(&d_adj_struct);
    for i in 0..n {
        d_adj_struct[[i, i]] = 0.0;
    }
    grads.adj += &d_adj_struct;

    Ok((terms, Some(grads)))
}

/// Mean data-fit loss on the validation split.
fn validation_loss(
    problem: &TrainingProblem,
    config: &OptimConfig,
    params: &ModelParams,
    adj: &Array2<f64>,
    state: &PathState,
) -> Result<f64> {
    if problem.validation.is_empty() {
        return Ok(f64::NAN);
    }
    let dense = DenseAdjacency::new(adj.clone(), false)?;
    let gcn = gcn_forward(&problem.features, &dense, params)?;
    let mut sum = 0.0;
    for chunk in problem.validation.chunks(config.batch_eval.max(1)) {
        for &(u, v, y_raw) in chunk {
            let empty = PathSet::empty((u, v));
            let paths = state.cache.get(&(u, v)).unwrap_or(&empty);
            let head = crate::nn::predict(&gcn.h, params, u, v, paths);
            if problem.kind.is_regression() {
                let resid = head - problem.normalize(y_raw);
                sum += resid * resid;
            } else {
                let p = head.clamp(1e-12, 1.0 - 1e-12);
                sum += -(y_raw * p.ln() + (1.0 - y_raw) * (1.0 - p).ln());
            }
        }
    }
    Ok(sum / problem.validation.len() as f64)
}

/// Full objective on the training split at one point (pure given the path
/// state).
pub fn objective(
    problem: &TrainingProblem,
    config: &OptimConfig,
    params: &ModelParams,
    adj: &Array2<f64>,
    state: &PathState,
) -> Result<LossTerms> {
    let (terms, _) = eval_smooth(problem, config, params, adj, state, None, false)?;
    Ok(terms)
}

/// Gradient of the smooth part at one point; the l1 piece is handled by the
/// proximal step, not the gradient.
pub fn smooth_gradients(
    problem: &TrainingProblem,
    config: &OptimConfig,
    params: &ModelParams,
    adj: &Array2<f64>,
    state: &PathState,
) -> Result<(LossTerms, Gradients)> {
    let (terms, grads) = eval_smooth(problem, config, params, adj, state, None, true)?;
    Ok((terms, grads.expect("gradients requested")))
}

/// One history row per epoch; row 0 is the pre-training state.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub objective: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lambda_min_z: f64,
    pub l1_norm: f64,
    pub edges_above_tau: usize,
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("epoch,objective,train_loss,val_loss,lambda_min_Z,l1_norm,edges_above_tau\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch, r.objective, r.train_loss, r.val_loss, r.lambda_min_z, r.l1_norm,
            r.edges_above_tau
        );
    }
    s
}

/// Everything needed to predict after training, plus resumable RNG state.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: MetricKind,
    pub params: ModelParams,
    pub adj: Array2<f64>,
    pub features: NodeFeatures,
    pub shift: f64,
    pub scale: f64,
    pub log_scale: bool,
    pub n_paths: usize,
    pub max_hops: usize,
    pub tau: f64,
    pub path_cost: PathCost,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub rng_stream: u64,
}

impl TrainedModel {
    /// Raw-scale predictions (probabilities for boolean) for a batch of
    /// pairs against the learned adjacency.
    pub fn predict_pairs(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let dense = DenseAdjacency::new(self.adj.clone(), false)?;
        let gcn = gcn_forward(&self.features, &dense, &self.params)?;
        let canonical: Vec<(usize, usize)> =
            pairs.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let mut unique = canonical.clone();
        unique.sort_unstable();
        unique.dedup();
        let cache = batch_sample(
            &dense,
            &unique,
            self.n_paths,
            self.max_hops,
            self.tau,
            self.path_cost,
        );
        Ok(canonical
            .into_iter()
            .map(|key| {
                let paths = &cache[&key];
                let head = crate::nn::predict(&gcn.h, &self.params, key.0, key.1, paths);
                if !self.kind.is_regression() {
                    head
                } else if self.log_scale {
                    (self.shift + self.scale * head).exp()
                } else {
                    self.shift + self.scale * head
                }
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_checkpoint(&std::fs::read_to_string(path)?)
    }

    /// Versioned text container; every f64 is stored as its bit pattern so
    /// a round trip is exact.
    pub fn to_checkpoint_string(&self) -> String {
        fn hex(x: f64) -> String {
            format!("{:016x}", x.to_bits())
        }
        fn tensor(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
            let _ = writeln!(out, "tensor {name} {rows} {cols}");
            for r in 0..rows {
                let line: Vec<String> =
                    (0..cols).map(|c| hex(data[r * cols + c])).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        let mut s = String::from("deepnt-checkpoint v1\n");
        let _ = writeln!(s, "kind {}", self.kind.name());
        let (d, h, o) = self.params.dims();
        let n = self.adj.nrows();
        let _ = writeln!(s, "dims {n} {d} {h} {o}");
        let _ = writeln!(s, "paths {} {} {}", self.n_paths, self.max_hops, hex(self.tau));
        let _ = writeln!(
            s,
            "path-cost {}",
            match self.path_cost {
                PathCost::Hops => "hops",
                PathCost::InverseWeight => "weight",
            }
        );
        let _ = writeln!(
            s,
            "affine {} {} {}",
            hex(self.shift),
            hex(self.scale),
            if self.log_scale { "log" } else { "linear" }
        );
        let seed_hex: String = self.rng_seed.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(s, "rng {seed_hex} {} {}", self.rng_word_pos, self.rng_stream);
        let w1v: Vec<f64> = self.params.w1.iter().copied().collect();
        tensor(&mut s, "w1", d, h, &w1v);
        let w2v: Vec<f64> = self.params.w2.iter().copied().collect();
        tensor(&mut s, "w2", h, h, &w2v);
        let rv: Vec<f64> = self.params.r.iter().copied().collect();
        tensor(&mut s, "r", 1, 2 * h, &rv);
        let wov: Vec<f64> = self.params.w_out.iter().copied().collect();
        tensor(&mut s, "w_out", 2 * h, o, &wov);
        let bov: Vec<f64> = self.params.b_out.iter().copied().collect();
        tensor(&mut s, "b_out", 1, o, &bov);
        let fv: Vec<f64> = self.features.h0.iter().copied().collect();
        tensor(&mut s, "features", n, self.features.dim(), &fv);
        let av: Vec<f64> = self.adj.iter().copied().collect();
        tensor(&mut s, "adjacency", n, n, &av);
        s.push_str("end\n");
        s
    }

    pub fn parse_checkpoint(text: &str) -> Result<Self> {
        fn unhex(s: &str) -> Result<f64> {
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::Parse(format!("bad f64 hex {s:?}")))
        }
        let mut lines = text.lines();
        match lines.next() {
            Some("deepnt-checkpoint v1") => {}
            other => return Err(Error::Parse(format!("bad checkpoint header {other:?}"))),
        }
        let mut kind = None;
        let mut dims = None;
        let mut paths_meta = None;
        let mut path_cost = PathCost::Hops;
        let mut affine: Option<(f64, f64, bool)> = None;
        let mut rng_meta: Option<([u8; 32], u128, u64)> = None;
        let mut tensors: BTreeMap<String, (usize, usize, Vec<f64>)> = BTreeMap::new();
        while let Some(line) = lines.next() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["end"] => break,
                ["kind", k] => kind = Some(MetricKind::from_name(k)?),
                ["dims", n, d, h, o] => {
                    let parse = |s: &str| -> Result<usize> {
                        s.parse().map_err(|_| Error::Parse(format!("bad dim {s:?}")))
                    };
                    dims = Some((parse(n)?, parse(d)?, parse(h)?, parse(o)?));
                }
                ["paths", np, mh, tau] => {
                    let np: usize =
                        np.parse().map_err(|_| Error::Parse("bad n_paths".into()))?;
                    let mh: usize =
                        mh.parse().map_err(|_| Error::Parse("bad max_hops".into()))?;
                    paths_meta = Some((np, mh, unhex(tau)?));
                }
                ["path-cost", c] => {
                    path_cost = match *c {
                        "hops" => PathCost::Hops,
                        "weight" => PathCost::InverseWeight,
                        other => return Err(Error::Parse(format!("bad path cost {other:?}"))),
                    };
                }
                ["affine", sh, sc, map] => {
                    let log_scale = match *map {
                        "log" => true,
                        "linear" => false,
                        other => {
                            return Err(Error::Parse(format!("bad target map {other:?}")))
                        }
                    };
                    affine = Some((unhex(sh)?, unhex(sc)?, log_scale));
                }
                ["rng", seed_hex, wp, st] => {
                    if seed_hex.len() != 64 {
                        return Err(Error::Parse("bad rng seed length".into()));
                    }
                    let mut seed = [0u8; 32];
                    for i in 0..32 {
                        seed[i] = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                            .map_err(|_| Error::Parse("bad rng seed hex".into()))?;
                    }
                    let wp: u128 =
                        wp.parse().map_err(|_| Error::Parse("bad rng word pos".into()))?;
                    let st: u64 =
                        st.parse().map_err(|_| Error::Parse("bad rng stream".into()))?;
                    rng_meta = Some((seed, wp, st));
                }
                ["tensor", name, rows, cols] => {
                    let rows: usize =
                        rows.parse().map_err(|_| Error::Parse("bad tensor rows".into()))?;
                    let cols: usize =
                        cols.parse().map_err(|_| Error::Parse("bad tensor cols".into()))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let row = lines
                            .next()
                            .ok_or_else(|| Error::Parse(format!("truncated tensor {name}")))?;
                        for cell in row.split_whitespace() {
                            data.push(unhex(cell)?);
                        }
                    }
                    if data.len() != rows * cols {
                        return Err(Error::Parse(format!("tensor {name} has wrong size")));
                    }
                    tensors.insert(name.to_string(), (rows, cols, data));
                }
                _ => return Err(Error::Parse(format!("bad checkpoint line {line:?}"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Parse("checkpoint missing kind".into()))?;
        let (n, d, h, o) = dims.ok_or_else(|| Error::Parse("checkpoint missing dims".into()))?;
        let (n_paths, max_hops, tau) =
            paths_meta.ok_or_else(|| Error::Parse("checkpoint missing paths".into()))?;
        let (shift, scale, log_scale) =
            affine.ok_or_else(|| Error::Parse("checkpoint missing affine".into()))?;
        let (rng_seed, rng_word_pos, rng_stream) =
            rng_meta.ok_or_else(|| Error::Parse("checkpoint missing rng".into()))?;
        let grab = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let (r, c, data) = tensors
                .get(name)
                .ok_or_else(|| Error::Parse(format!("checkpoint missing tensor {name}")))?;
            if *r != rows || *c != cols {
                return Err(Error::Parse(format!(
                    "tensor {name} has shape {r}x{c}, expected {rows}x{cols}"
                )));
            }
            Ok(data.clone())
        };
        let params = ModelParams {
            w1: Array2::from_shape_vec((d, h), grab("w1", d, h)?).expect("shape"),
            w2: Array2::from_shape_vec((h, h), grab("w2", h, h)?).expect("shape"),
            r: Array1::from_vec(grab("r", 1, 2 * h)?),
            w_out: Array2::from_shape_vec((2 * h, o), grab("w_out", 2 * h, o)?).expect("shape"),
            b_out: Array1::from_vec(grab("b_out", 1, o)?),
        };
        let feat_cols = tensors
            .get("features")
            .map(|(_, c, _)| *c)
            .ok_or_else(|| Error::Parse("checkpoint missing tensor features".into()))?;
        let features = NodeFeatures {
            h0: Array2::from_shape_vec((n, feat_cols), grab("features", n, feat_cols)?)
                .expect("shape"),
        };
        let adj = Array2::from_shape_vec((n, n), grab("adjacency", n, n)?).expect("shape");
        Ok(Self {
            kind,
            params,
            adj,
            features,
            shift,
            scale,
            log_scale,
            n_paths,
            max_hops,
            tau,
            path_cost,
            rng_seed,
            rng_word_pos,
            rng_stream,
        })
    }
}

/// Result of one training run: best-validation snapshot plus the recorded
/// history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: Vec<HistoryRow>,
    pub problem: TrainingProblem,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, grad: &[f64], eta: f64) -> Vec<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
                self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                -eta * mh / (vh.sqrt() + EPS)
            })
            .collect()
    }
}

fn lambda_min_z(adj: &Array2<f64>) -> Result<f64> {
    let (vals, _) = eigh(&z_of(adj))?;
    Ok(vals[0])
}

fn edges_above(adj: &Array2<f64>, tau: f64) -> usize {
    let n = adj.nrows();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[[i, j]] > tau {
                count += 1;
            }
        }
    }
    count
}

fn clamp_feasible(adj: &mut Array2<f64>) {
    let n = adj.nrows();
    adj.mapv_inplace(|x| x.max(0.0));
    for i in 0..n {
        adj[[i, i]] = 0.0;
    }
}

/// Trains the model and the adjacency on the observation set. Returns the
/// best-validation snapshot and the per-epoch history; row 0 of the history
/// is the initial objective.
pub fn train(
    obs: &ObservationSet,
    a_obs: &DenseAdjacency,
    mask: &BinaryMatrix,
    kind: MetricKind,
    config: &OptimConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let problem = TrainingProblem::new(obs, a_obs, mask, kind, config)?;
    let n = problem.n();
    let d = problem.features.dim();
    let o = if kind.is_regression() { 1 } else { 2 };

    let mut rng = stream_rng(seed, Stream::Training);
    let mut theta = ModelParams::init(d, config.hidden, o, seed);
    let mut theta_prev = theta.clone();
    let mut adj: Array2<f64> = if config.init_adj_zero {
        Array2::zeros((n, n))
    } else {
        a_obs.weights().clone()
    };
    let mut adj_prev = adj.clone();

    let mut state = refresh_paths(&problem, &theta, &adj, config, &mut rng)?;
    let mut adam = config.adaptive.then(|| AdamState::new(theta.flatten().len()));

    let mut history = Vec::with_capacity(config.max_epochs + 1);
    let initial = objective(&problem, config, &theta, &adj, &state)?;
    let init_val = validation_loss(&problem, config, &theta, &adj, &state)?;
    history.push(HistoryRow {
        epoch: 0,
        objective: initial.objective(config.gamma, config.alpha),
        train_loss: initial.data_fit,
        val_loss: init_val,
        lambda_min_z: lambda_min_z(&adj)?,
        l1_norm: initial.l1,
        edges_above_tau: edges_above(&adj, config.tau),
    });

    let mut best_val = init_val;
    let mut best = (theta.clone(), adj.clone());
    let mut wait = 0usize;

    for epoch in 1..=config.max_epochs {
        // extrapolated evaluation points, clamped back onto the feasible set
        let mut theta_bar = theta.clone();
        theta_bar.axpy(1.0 - config.omega, &theta);
        theta_bar.axpy(-(1.0 - config.omega), &theta_prev);
        let mut adj_bar = &adj + &((&adj - &adj_prev) * (1.0 - config.omega));
        clamp_feasible(&mut adj_bar);

        // path/bound refresh on schedule or when the support drifted
        let due = (epoch - 1) % config.path_refresh == 0 && epoch > 1;
        let drifted = support_drift(
            &BinaryMatrix::from_support(
                &DenseAdjacency::new(adj.clone(), false)?,
                config.tau,
            ),
            &state.support,
            n,
        ) > 0.01;
        if due || drifted {
            state = refresh_paths(&problem, &theta, &adj, config, &mut rng)?;
        }

        let mut order: Vec<usize> = (0..problem.train.len()).collect();
        order.shuffle(&mut rng);
        let (terms_bar, grads) =
            eval_smooth(&problem, config, &theta_bar, &adj_bar, &state, Some(&order), true)?;
        let grads = grads.expect("gradients requested");
        if !terms_bar.is_finite() {
            return Err(Error::Numeric(format!(
                "objective diverged at epoch {epoch}: {terms_bar:?}"
            )));
        }

        // parameter step
        theta_prev = theta;
        theta = theta_bar.clone();
        if let Some(adam) = adam.as_mut() {
            let delta = adam.step(&grads.params_flat(), config.eta);
            let mut flat = theta.flatten();
            for (x, dx) in flat.iter_mut().zip(&delta) {
                *x += dx;
            }
            theta.assign_flat(&flat);
        } else {
            theta.w1.scaled_add(-config.eta, &grads.w1);
            theta.w2.scaled_add(-config.eta, &grads.w2);
            theta.r.scaled_add(-config.eta, &grads.r);
            theta.w_out.scaled_add(-config.eta, &grads.w_out);
            theta.b_out.scaled_add(-config.eta, &grads.b_out);
        }
        if !theta.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged at epoch {epoch}")));
        }

        // proximal adjacency step then connectivity projection
        adj_prev = adj;
        let stepped = &adj_bar - &(&grads.adj * config.eta_adj);
        let thresholded = soft_threshold(&stepped, config.eta_adj * config.alpha);
        adj = connectivity_projection(&thresholded, &problem.components, config.eps_pd)?;

        // bookkeeping at the new iterate
        let terms = objective(&problem, config, &theta, &adj, &state)?;
        let val = validation_loss(&problem, config, &theta, &adj, &state)?;
        if !terms.is_finite() || !val.is_finite() {
            return Err(Error::Numeric(format!(
                "objective diverged at epoch {epoch}: {terms:?}, val {val}"
            )));
        }
        history.push(HistoryRow {
            epoch,
            objective: terms.objective(config.gamma, config.alpha),
            train_loss: terms.data_fit,
            val_loss: val,
            lambda_min_z: lambda_min_z(&adj)?,
            l1_norm: terms.l1,
            edges_above_tau: edges_above(&adj, config.tau),
        });

        if val < best_val {
            best_val = val;
            best = (theta.clone(), adj.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                break;
            }
        }
    }

    let (best_theta, best_adj) = best;
    let model = TrainedModel {
        kind,
        params: best_theta,
        adj: best_adj,
        features: problem.features.clone(),
        shift: problem.shift,
        scale: problem.scale,
        log_scale: problem.log_scale,
        n_paths: config.n_paths,
        max_hops: config.max_hops,
        tau: config.tau,
        path_cost: config.path_cost,
        rng_seed: rng.get_seed(),
        rng_word_pos: rng.get_word_pos(),
        rng_stream: rng.get_stream(),
    };
    Ok(TrainOutcome { model, history, problem })
}
