//! Masked non-negative matrix factorization baseline.
//!
//! Multiplicative updates on the observed entries of the pairwise metric
//! matrix; unobserved entries never enter the residual, so predictions for
//! them come purely from the learned low-rank structure.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sim::Observation;

const MU_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct NmfModel {
    pub w: Array2<f64>,  // n x rank
    pub h: Array2<f64>,  // rank x n
    pub shift: f64,      // applied before factorization, removed on predict
    pub objective: Vec<f64>,
}

impl NmfModel {
    pub fn predict(&self, u: usize, v: usize) -> f64 {
        let (u, v) = (u.min(v), u.max(v));
        self.w.row(u).dot(&self.h.column(v)) - self.shift
    }
}

/// Fits rank-`rank` factors to the observed pairs by masked multiplicative
/// updates. The masked objective is non-increasing per iteration.
pub fn baseline_nmf(
    observations: &[Observation],
    n: usize,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<NmfModel> {
    if rank == 0 || rank >= n {
        return Err(Error::Input(format!("nmf rank must be in [1, n), got {rank} for n={n}")));
    }
    if observations.is_empty() {
        return Err(Error::Input("nmf needs at least one observation".into()));
    }
    // shift all values strictly positive if needed
    let min_val = observations.iter().map(|&(_, _, y)| y).fold(f64::INFINITY, f64::min);
    let shift = if min_val <= 0.0 { -min_val + 1e-3 } else { 0.0 };

    let mut v = Array2::zeros((n, n));
    let mut mask = Array2::zeros((n, n));
    for &(a, b, y) in observations {
        let y = y + shift;
        v[[a, b]] = y;
        v[[b, a]] = y;
        mask[[a, b]] = 1.0;
        mask[[b, a]] = 1.0;
    }

    let mean = observations.iter().map(|&(_, _, y)| y + shift).sum::<f64>()
        / observations.len() as f64;
    let scale = (mean / rank as f64).sqrt().max(1e-6);
    let mut rng = stream_rng(seed, Stream::Baseline);
    let mut w = Array2::from_shape_fn((n, rank), |_| rng.random_range(0.1..1.0) * scale);
    let mut h = Array2::from_shape_fn((rank, n), |_| rng.random_range(0.1..1.0) * scale);

    let masked_obj = |w: &Array2<f64>, h: &Array2<f64>| -> f64 {
        let r = w.dot(h);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if mask[[i, j]] > 0.0 {
                    let d = v[[i, j]] - r[[i, j]];
                    s += d * d;
                }
            }
        }
        s
    };

    let mv = &mask * &v;
    let mut objective = Vec::with_capacity(iters + 1);
    objective.push(masked_obj(&w, &h));
    for _ in 0..iters {
        // W <- W * (M.V Ht) / (M.(W H) Ht)
        let wh = w.dot(&h);
        let num_w = mv.dot(&h.t());
        let den_w = (&mask * &wh).dot(&h.t());
        for i in 0..n {
            for k in 0..rank {
                w[[i, k]] *= num_w[[i, k]] / (den_w[[i, k]] + MU_EPS);
            }
        }
        // H <- H * (Wt M.V) / (Wt M.(W H))
        let wh = w.dot(&h);
        let num_h = w.t().dot(&mv);
        let den_h = w.t().dot(&(&mask * &wh));
        for k in 0..rank {
            for j in 0..n {
                h[[k, j]] *= num_h[[k, j]] / (den_h[[k, j]] + MU_EPS);
            }
        }
        objective.push(masked_obj(&w, &h));
    }
    Ok(NmfModel { w, h, shift, objective })
}
