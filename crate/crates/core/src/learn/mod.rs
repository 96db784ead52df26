//! Joint learning of model parameters and the adjacency matrix:
//! extrapolated proximal gradient with l1 soft-thresholding, a smooth
//! reachability surrogate for the structure loss, and spectral connectivity
//! projections for the whole graph and each strongly connected component.

mod project;
mod surrogate;
mod train;

pub use project::connectivity_projection;
pub use surrogate::{
    reachability_surrogate, structure_loss, structure_loss_parts, SurrogateTrace,
    SURROGATE_SATURATION,
};
pub use train::{
    history_to_csv, objective, refresh_paths, smooth_gradients, train, BoundMap, HistoryRow,
    LossTerms, OptimConfig, PathState, TrainOutcome, TrainedModel, TrainingProblem,
};

use ndarray::Array2;

/// Elementwise soft-thresholding followed by the adjacency feasibility
/// clamps: negatives to zero, diagonal to zero.
pub fn soft_threshold(x: &Array2<f64>, lambda: f64) -> Array2<f64> {
    assert!(lambda >= 0.0, "threshold must be non-negative");
    let mut out = x.mapv(|v| v.signum() * (v.abs() - lambda).max(0.0));
    out.mapv_inplace(|v| v.max(0.0));
    let n = out.nrows().min(out.ncols());
    for i in 0..n {
        out[[i, i]] = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_threshold_examples() {
        let x = array![[0.0, 3.0], [-0.5, 0.0]];
        let out = soft_threshold(&x, 1.0);
        assert_eq!(out, array![[0.0, 2.0], [0.0, 0.0]]);
    }

    #[test]
    fn zero_threshold_is_identity_on_feasible_input() {
        let x = array![[0.0, 1.5, 0.25], [1.5, 0.0, 0.0], [0.25, 0.0, 0.0]];
        assert_eq!(soft_threshold(&x, 0.0), x);
    }

    #[test]
    fn prox_matches_grid_search_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(2024, crate::rng::Stream::Training);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let lambda: f64 = rng.random_range(0.0..2.0);
            let got = x.signum() * (x.abs() - lambda).max(0.0);
            // grid-search argmin of 0.5(z-x)^2 + lambda |z|
            let mut best = f64::INFINITY;
            let mut best_z = 0.0;
            let mut z = -4.0;
            while z <= 4.0 {
                let f = 0.5 * (z - x) * (z - x) + lambda * z.abs();
                if f < best {
                    best = f;
                    best_z = z;
                }
                z += 1e-4;
            }
            assert!((got - best_z).abs() < 1e-3, "x={x} lambda={lambda} got={got} grid={best_z}");
        }
    }
}
