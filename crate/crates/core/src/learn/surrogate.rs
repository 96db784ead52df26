//! Smooth stand-in for the binary path-existence map, with its exact
//! gradient.
//!
//! The learned side of the structure loss needs gradients, but path
//! existence is discrete. The surrogate normalizes the matrix to a
//! contractive walk generator B = A / (smoothmax row sum + 1), sums the
//! first `walk_cap` powers, and saturates with 1 - exp(-c W). It is monotone
//! in every entry, zero exactly where no walk exists, approaches 1 where
//! short walks carry large weight, and is differentiable everywhere: the row
//! normalizer is a log-sum-exp softened maximum, so gradients stay
//! continuous when two rows trade places as the heaviest.

use ndarray::{Array1, Array2};

use crate::graph::BinaryMatrix;

/// Saturation constant c in 1 - exp(-c W).
pub const SURROGATE_SATURATION: f64 = 5.0;

/// Sharpness of the softened maximum over row sums; the softmax exceeds the
/// true max by at most ln(n) / SOFTMAX_SHARPNESS.
pub const SOFTMAX_SHARPNESS: f64 = 32.0;

/// Forward bookkeeping for the surrogate's backward pass.
#[derive(Debug, Clone)]
pub struct SurrogateTrace {
    pub b: Array2<f64>,
    pub powers: Vec<Array2<f64>>, // B^1 .. B^walk_cap
    pub walk_sum: Array2<f64>,
    pub r_tilde: Array2<f64>,
    pub norm: f64,               // softmax row sum + 1
    pub row_weights: Array1<f64>, // d norm / d row sum
}

pub(crate) fn surrogate_forward(a: &Array2<f64>, walk_cap: usize) -> SurrogateTrace {
    assert!(walk_cap >= 1);
    let n = a.nrows();
    let row_sums: Array1<f64> = a.sum_axis(ndarray::Axis(1));
    let m = row_sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Array1<f64> = row_sums.mapv(|s| (SOFTMAX_SHARPNESS * (s - m)).exp());
    let z: f64 = exps.sum();
    let soft_max = m + z.ln() / SOFTMAX_SHARPNESS;
    let row_weights = exps / z;
    let norm = soft_max + 1.0;

    let b = a / norm;
    let mut powers = Vec::with_capacity(walk_cap);
    powers.push(b.clone());
    for _ in 1..walk_cap {
        let next = powers.last().expect("nonempty").dot(&b);
        powers.push(next);
    }
    let mut walk_sum = Array2::zeros((n, n));
    for p in &powers {
        walk_sum += p;
    }
    let r_tilde = walk_sum.mapv(|w| 1.0 - (-SURROGATE_SATURATION * w).exp());
    SurrogateTrace { b, powers, walk_sum, r_tilde, norm, row_weights }
}

/// Gradient of a loss through the surrogate: given dL/dR_tilde, returns
/// dL/dA for the matrix the surrogate was built from.
pub(crate) fn surrogate_backward(trace: &SurrogateTrace, d_rtilde: &Array2<f64>) -> Array2<f64> {
    let n = trace.b.nrows();
    let walk_cap = trace.powers.len();
    // dW = dR ∘ c exp(-cW)
    let dw = Array2::from_shape_fn((n, n), |(i, j)| {
        d_rtilde[[i, j]]
            * SURROGATE_SATURATION
            * (-SURROGATE_SATURATION * trace.walk_sum[[i, j]]).exp()
    });
    // d<G, B^k>/dB = sum_{a+b=k-1} (B^a)^T G (B^b)^T; grouping over k gives
    // dB = sum_a (B^a)^T dW (S_{cap-1-a})^T with S_m the power prefix sums.
    let eye = Array2::eye(n);
    let mut prefix: Vec<Array2<f64>> = Vec::with_capacity(walk_cap);
    let mut acc = eye.clone();
    prefix.push(acc.clone()); // S_0 = I
    for k in 1..walk_cap {
        acc += &trace.powers[k - 1];
        prefix.push(acc.clone());
    }
    let mut db = Array2::zeros((n, n));
    for a_pow in 0..walk_cap {
        let left = if a_pow == 0 { &eye } else { &trace.powers[a_pow - 1] };
        let s = &prefix[walk_cap - 1 - a_pow];
        db += &left.t().dot(&dw).dot(&s.t());
    }
    // B = A / norm; the softened max contributes d norm / dA_ij =
    // row_weights[i] for every entry of row i
    let mut da = &db / trace.norm;
    let ds: f64 = -(&db * &trace.b).sum() / trace.norm;
    for i in 0..n {
        let w = ds * trace.row_weights[i];
        for j in 0..n {
            da[[i, j]] += w;
        }
    }
    da
}

/// Smooth reachability estimate in [0, 1) for every ordered pair.
pub fn reachability_surrogate(a: &Array2<f64>, walk_cap: usize) -> Array2<f64> {
    surrogate_forward(a, walk_cap).r_tilde
}

/// Frobenius mismatch between the surrogate on the masked learned matrix and
/// the exact reachability of the observed graph, plus the l1 report.
/// Returns (frobenius, l1).
pub fn structure_loss_parts(
    adj: &Array2<f64>,
    mask: &BinaryMatrix,
    r_target: &Array2<f64>,
    walk_cap: usize,
) -> (f64, f64) {
    let n = adj.nrows();
    let masked = Array2::from_shape_fn((n, n), |(i, j)| {
        if mask.get(i, j) {
            adj[[i, j]]
        } else {
            0.0
        }
    });
    let r = reachability_surrogate(&masked, walk_cap);
    let frob: f64 = (&r - r_target).mapv(|x| x * x).sum();
    let l1: f64 = adj.mapv(f64::abs).sum();
    (frob, l1)
}

/// Full structure loss including the sparsity report.
pub fn structure_loss(
    adj: &Array2<f64>,
    mask: &BinaryMatrix,
    r_target: &Array2<f64>,
    alpha: f64,
    walk_cap: usize,
) -> f64 {
    let (frob, l1) = structure_loss_parts(adj, mask, r_target, walk_cap);
    frob + alpha * l1
}
