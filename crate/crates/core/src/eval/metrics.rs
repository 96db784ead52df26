//! Prediction and topology-recovery metrics.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::DenseAdjacency;

/// Mean absolute percentage error. Zero-truth entries are excluded (and
/// counted); an all-excluded input is an error.
pub fn mape(preds: &[f64], truths: &[f64]) -> Result<f64> {
    assert_eq!(preds.len(), truths.len());
    if preds.is_empty() {
        return Err(Error::Metric("mape needs at least one pair".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (&p, &t) in preds.iter().zip(truths) {
        if t == 0.0 {
            continue;
        }
        sum += (p - t).abs() / t.abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric(format!(
            "all {} truths are zero; mape undefined",
            preds.len()
        )));
    }
    Ok(sum / used as f64)
}

pub fn mse(preds: &[f64], truths: &[f64]) -> f64 {
    assert_eq!(preds.len(), truths.len());
    if preds.is_empty() {
        return 0.0;
    }
    preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / preds.len() as f64
}

/// Fraction of correct labels after thresholding probabilities at 0.5.
pub fn accuracy(preds: &[f64], truths: &[f64]) -> f64 {
    assert_eq!(preds.len(), truths.len());
    if preds.is_empty() {
        return 0.0;
    }
    let correct = preds
        .iter()
        .zip(truths)
        .filter(|&(&p, &t)| ((p >= 0.5) as u8 as f64) == t)
        .count();
    correct as f64 / preds.len() as f64
}

/// F1 of class 1 at threshold 0.5; degenerate denominators give 0.
pub fn f1(preds: &[f64], truths: &[f64]) -> f64 {
    assert_eq!(preds.len(), truths.len());
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fl = 0.0;
    for (&p, &t) in preds.iter().zip(truths) {
        let yes = p >= 0.5;
        if yes && t == 1.0 {
            tp += 1.0;
        } else if yes {
            fp += 1.0;
        } else if t == 1.0 {
            fl += 1.0;
        }
    }
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fl);
    2.0 * precision * recall / (precision + recall)
}

/// Undirected edge precision/recall/F1 of a learned weight matrix against
/// the true graph, counting entries above `tau` as predicted edges.
pub fn topology_f1(a_true: &DenseAdjacency, learned: &Array2<f64>, tau: f64) -> (f64, f64, f64) {
    let n = a_true.n();
    assert_eq!(learned.nrows(), n);
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fl = 0.0;
    for u in 0..n {
        for v in (u + 1)..n {
            let predicted = 0.5 * (learned[[u, v]] + learned[[v, u]]) > tau;
            let actual = a_true.has_edge(u, v);
            match (predicted, actual) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fl += 1.0,
                _ => {}
            }
        }
    }
    if tp == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let p = tp / (tp + fp);
    let r = tp / (tp + fl);
    (p, r, 2.0 * p * r / (p + r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mape_examples() {
        assert_abs_diff_eq!(mape(&[110.0], &[100.0]).unwrap(), 0.1, epsilon = 1e-12);
        assert_eq!(mape(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mape(&[50.0, 200.0], &[100.0, 100.0]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        // zero truths are skipped; all-zero is an error
        assert_abs_diff_eq!(
            mape(&[50.0, 123.0], &[100.0, 0.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(mape(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(accuracy(&[0.9, 0.2], &[1.0, 0.0]), 1.0);
        assert_eq!(f1(&[0.9, 0.2], &[1.0, 0.0]), 1.0);
        // preds [1,1] truths [1,0]: acc 0.5, f1 = 2/3
        assert_abs_diff_eq!(accuracy(&[1.0, 1.0], &[1.0, 0.0]), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f1(&[1.0, 1.0], &[1.0, 0.0]), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(mse(&[3.0], &[1.0]), 4.0);
    }

    #[test]
    fn topology_examples() {
        let g = crate::sim::generate_graph(crate::sim::GraphModel::Er { p: 0.3 }, 10, 3)
            .unwrap();
        let (p, r, f) = topology_f1(&g, g.weights(), 0.1);
        assert_eq!((p, r, f), (1.0, 1.0, 1.0));

        let zero = Array2::zeros((10, 10));
        assert_eq!(topology_f1(&g, &zero, 0.1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn topology_partial_recovery() {
        // 10-edge path-ish graph; learned keeps 8 true edges, adds 2 false
        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 1)).collect();
        let g = crate::graph::DenseAdjacency::from_unit_edges(11, false, &edges).unwrap();
        let mut learned = g.weights().clone();
        learned[[0, 1]] = 0.0;
        learned[[1, 0]] = 0.0;
        learned[[5, 6]] = 0.0;
        learned[[6, 5]] = 0.0;
        learned[[0, 5]] = 1.0;
        learned[[5, 0]] = 1.0;
        learned[[2, 9]] = 1.0;
        learned[[9, 2]] = 1.0;
        let (p, r, f) = topology_f1(&g, &learned, 0.1);
        assert_abs_diff_eq!(p, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 0.8, epsilon = 1e-12);
    }
}
