//! Pair-MLP baseline: a two-layer perceptron on the concatenated binary
//! encodings of the two endpoints, trained with the same split and stopping
//! rules as the main model.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::binary_encode;
use crate::rng::{stream_rng, Stream};
use crate::sim::{MetricKind, Observation};

#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub hidden: usize,
    pub eta: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: 64, eta: 1e-2, max_epochs: 500, patience: 10, batch: 1024 }
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    kind: MetricKind,
    d: usize,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    shift: f64,
    scale: f64,
}

impl MlpModel {
    fn encode(&self, u: usize, v: usize) -> Array1<f64> {
        let (u, v) = (u.min(v), u.max(v));
        let eu = binary_encode(u, self.d).expect("fits");
        let ev = binary_encode(v, self.d).expect("fits");
        let mut x = Array1::zeros(2 * self.d);
        for k in 0..self.d {
            x[k] = eu[k];
            x[self.d + k] = ev[k];
        }
        x
    }

    fn head(&self, x: &Array1<f64>) -> Array1<f64> {
        let z1 = x.dot(&self.w1) + &self.b1;
        let a1 = z1.mapv(|t| t.max(0.0));
        a1.dot(&self.w2) + &self.b2
    }

    /// Raw-scale prediction (probability for boolean).
    pub fn predict(&self, u: usize, v: usize) -> f64 {
        let out = self.head(&self.encode(u, v));
        if self.kind.is_regression() {
            self.shift + self.scale * out[0]
        } else {
            let m = out[0].max(out[1]);
            let e0 = (out[0] - m).exp();
            let e1 = (out[1] - m).exp();
            e1 / (e0 + e1)
        }
    }
}

/// Trains the pair MLP with Adam and validation early stopping.
pub fn baseline_mlp(
    train: &[Observation],
    validation: &[Observation],
    n: usize,
    kind: MetricKind,
    config: &MlpConfig,
    seed: u64,
) -> Result<MlpModel> {
    if config.hidden == 0 {
        return Err(Error::Config("mlp hidden width must be positive".into()));
    }
    if train.is_empty() {
        return Err(Error::Input("mlp needs a nonempty training split".into()));
    }
    let d = if n <= 2 { 1 } else { (usize::BITS - (n - 1).leading_zeros()) as usize };
    let o = if kind.is_regression() { 1 } else { 2 };
    let (shift, scale) = if kind.is_regression() {
        let m = train.iter().map(|&(_, _, y)| y).sum::<f64>() / train.len() as f64;
        let var =
            train.iter().map(|&(_, _, y)| (y - m) * (y - m)).sum::<f64>() / train.len() as f64;
        (m, var.sqrt().max(1e-9))
    } else {
        (0.0, 1.0)
    };

    let mut rng = stream_rng(seed, Stream::Baseline);
    let s1 = 1.0 / ((2 * d) as f64).sqrt();
    let s2 = 1.0 / (config.hidden as f64).sqrt();
    let mut model = MlpModel {
        kind,
        d,
        w1: Array2::from_shape_fn((2 * d, config.hidden), |_| rng.random_range(-s1..s1)),
        b1: Array1::zeros(config.hidden),
        w2: Array2::from_shape_fn((config.hidden, o), |_| rng.random_range(-s2..s2)),
        b2: Array1::zeros(o),
        shift,
        scale,
    };

    // Adam state over the flattened parameter vector
    let nparams = model.w1.len() + model.b1.len() + model.w2.len() + model.b2.len();
    let mut m_adam = vec![0.0; nparams];
    let mut v_adam = vec![0.0; nparams];
    let mut t_adam = 0usize;

    let inputs: Vec<Array1<f64>> =
        train.iter().map(|&(u, v, _)| model.encode(u, v)).collect();
    let targets: Vec<f64> = train
        .iter()
        .map(|&(_, _, y)| if kind.is_regression() { (y - shift) / scale } else { y })
        .collect();

    let val_loss = |model: &MlpModel| -> f64 {
        if validation.is_empty() {
            return f64::NAN;
        }
        let mut s = 0.0;
        for &(u, v, y) in validation {
            let out = model.head(&model.encode(u, v));
            if kind.is_regression() {
                let r = out[0] - (y - shift) / scale;
                s += r * r;
            } else {
                let m = out[0].max(out[1]);
                let e0 = (out[0] - m).exp();
                let e1 = (out[1] - m).exp();
                let p1 = (e1 / (e0 + e1)).clamp(1e-12, 1.0 - 1e-12);
                s += -(y * p1.ln() + (1.0 - y) * (1.0 - p1).ln());
            }
        }
        s / validation.len() as f64
    };

    let mut best = (val_loss(&model), model.clone());
    let mut wait = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            let mut gw1 = Array2::zeros(model.w1.dim());
            let mut gb1 = Array1::zeros(model.b1.len());
            let mut gw2 = Array2::zeros(model.w2.dim());
            let mut gb2 = Array1::zeros(model.b2.len());
            for &i in chunk {
                let x = &inputs[i];
                let z1 = x.dot(&model.w1) + &model.b1;
                let a1 = z1.mapv(|t| t.max(0.0));
                let out = a1.dot(&model.w2) + &model.b2;
                let dout: Array1<f64> = if o == 1 {
                    Array1::from_vec(vec![2.0 * (out[0] - targets[i])])
                } else {
                    let m = out[0].max(out[1]);
                    let e0 = (out[0] - m).exp();
                    let e1 = (out[1] - m).exp();
                    let z = e0 + e1;
                    Array1::from_vec(vec![
                        e0 / z - (1.0 - targets[i]),
                        e1 / z - targets[i],
                    ])
                };
                for a in 0..model.w2.nrows() {
                    for b in 0..o {
                        gw2[[a, b]] += a1[a] * dout[b];
                    }
                }
                gb2 += &dout;
                let da1 = model.w2.dot(&dout);
                let dz1 = Array1::from_shape_fn(a1.len(), |k| {
                    if z1[k] > 0.0 {
                        da1[k]
                    } else {
                        0.0
                    }
                });
                for a in 0..model.w1.nrows() {
                    for b in 0..model.w1.ncols() {
                        gw1[[a, b]] += x[a] * dz1[b];
                    }
                }
                gb1 += &dz1;
            }
            let inv = 1.0 / chunk.len() as f64;

            // adam over the concatenated gradient
            t_adam += 1;
            let bc1 = 1.0 - 0.9f64.powi(t_adam as i32);
            let bc2 = 1.0 - 0.999f64.powi(t_adam as i32);
            let mut idx = 0usize;
            let mut apply = |param: &mut f64, g: f64| {
                let g = g * inv;
                m_adam[idx] = 0.9 * m_adam[idx] + 0.1 * g;
                v_adam[idx] = 0.999 * v_adam[idx] + 0.001 * g * g;
                let mh = m_adam[idx] / bc1;
                let vh = v_adam[idx] / bc2;
                *param -= config.eta * mh / (vh.sqrt() + 1e-8);
                idx += 1;
            };
            for (p, g) in model.w1.iter_mut().zip(gw1.iter()) {
                apply(p, *g);
            }
            for (p, g) in model.b1.iter_mut().zip(gb1.iter()) {
                apply(p, *g);
            }
            for (p, g) in model.w2.iter_mut().zip(gw2.iter()) {
                apply(p, *g);
            }
            for (p, g) in model.b2.iter_mut().zip(gb2.iter()) {
                apply(p, *g);
            }
        }
        let vl = val_loss(&model);
        if vl.is_nan() || vl < best.0 {
            best = (vl, model.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                break;
            }
        }
    }
    Ok(best.1)
}
