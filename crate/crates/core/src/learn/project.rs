//! Spectral projection keeping the learned adjacency weakly connected,
//! globally and inside each strongly connected component.
//!
//! The Z-matrix of a non-negative symmetric adjacency is positive definite
//! exactly when the graph is connected. The projection clips Z's eigenvalues
//! from below and inverts the off-diagonal identity Z_ij = 1/n - A_ij, which
//! is exact whenever the recovered entries stay non-negative.

use ndarray::Array2;

use crate::eig::eigh;
use crate::error::{Error, Result};
use crate::graph::{z_of, SccPartition};

const MAX_PASSES: usize = 8;
const MAX_ROUNDS: usize = 4;

/// One clip-and-invert pass on the |idx| x |idx| submatrix. Returns false
/// when the block already satisfied the floor and was left untouched.
fn project_block(a: &mut Array2<f64>, idx: &[usize], eps_pd: f64) -> Result<bool> {
    let m = idx.len();
    if m < 2 {
        return Ok(false);
    }
    let sub = Array2::from_shape_fn((m, m), |(i, j)| a[[idx[i], idx[j]]]);
    let z = z_of(&sub);
    let (vals, vecs) = eigh(&z)?;
    if vals[0] >= eps_pd {
        return Ok(false);
    }
    let clipped = vals.mapv(|l| l.max(eps_pd));
    // Z' = V diag(clipped) V^T
    let mut z_new: Array2<f64> = Array2::zeros((m, m));
    for k in 0..m {
        let col = vecs.column(k);
        for i in 0..m {
            for j in 0..m {
                z_new[[i, j]] += clipped[k] * col[i] * col[j];
            }
        }
    }
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        for j in (i + 1)..m {
            let z_ij = 0.5 * (z_new[[i, j]] + z_new[[j, i]]);
            let w = f64::max(inv_m - z_ij, 0.0);
            a[[idx[i], idx[j]]] = w;
            a[[idx[j], idx[i]]] = w;
        }
    }
    Ok(true)
}

fn lambda_min_of(a: &Array2<f64>) -> Result<f64> {
    let (vals, _) = eigh(&z_of(a))?;
    Ok(vals[0])
}

/// Projects a symmetric non-negative zero-diagonal adjacency so that
/// lambda_min(Z) stays above eps_pd/2 for the whole matrix, applying the
/// same repair to every given component with its own 1/|g| offset.
pub fn connectivity_projection(
    adj: &Array2<f64>,
    components: &SccPartition,
    eps_pd: f64,
) -> Result<Array2<f64>> {
    let n = adj.nrows();
    let all: Vec<usize> = (0..n).collect();
    let mut a = adj.clone();
    for round in 0..MAX_ROUNDS {
        for _ in 0..MAX_PASSES {
            if !project_block(&mut a, &all, eps_pd)? {
                break;
            }
        }
        for comp in &components.components {
            if comp.len() == n {
                // identical to the global block (same 1/n offset)
                continue;
            }
            for _ in 0..MAX_PASSES {
                if !project_block(&mut a, comp, eps_pd)? {
                    break;
                }
            }
        }
        // the component repairs may nudge the global floor; verify and
        // re-run if the half-floor contract is not yet met
        if lambda_min_of(&a)? >= 0.5 * eps_pd {
            for i in 0..n {
                a[[i, i]] = 0.0;
            }
            return Ok(a);
        }
        if round + 1 == MAX_ROUNDS {
            break;
        }
    }
    Err(Error::Numeric(format!(
        "connectivity projection did not reach lambda_min >= {} after {MAX_ROUNDS} rounds",
        0.5 * eps_pd
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{components_undirected, tarjan_scc, DenseAdjacency};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn partition_of(a: &DenseAdjacency) -> SccPartition {
        tarjan_scc(a, 0.0)
    }

    #[test]
    fn two_isolated_nodes_worked_example() {
        // Z = [[0.5, 0.5], [0.5, 0.5]] has eigenpairs 0 on (1,-1)/sqrt(2)
        // and 1 on (1,1)/sqrt(2); clipping 0 to 0.1 gives
        // Z' = [[0.55, 0.45], [0.45, 0.55]] and the inversion recovers
        // A'_01 = 1/2 - 0.45 = 0.05 with z(A') = Z' exactly.
        let a = Array2::zeros((2, 2));
        let parts = SccPartition { components: vec![vec![0], vec![1]] };
        let out = connectivity_projection(&a, &parts, 0.1).unwrap();
        assert_abs_diff_eq!(out[[0, 1]], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(out[[1, 0]], 0.05, epsilon = 1e-12);
        assert_eq!(out[[0, 0]], 0.0);
        let z = z_of(&out);
        assert_abs_diff_eq!(z[[0, 0]], 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(z[[0, 1]], 0.45, epsilon = 1e-12);
    }

    #[test]
    fn satisfied_input_is_a_fixed_point() {
        let g = DenseAdjacency::from_unit_edges(4, false, &[(0, 1), (1, 2), (2, 3), (3, 0)])
            .unwrap();
        let eps = 1e-3;
        let before = g.weights().clone();
        let out = connectivity_projection(&before, &partition_of(&g), eps).unwrap();
        for (x, y) in before.iter().zip(out.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_disconnected_graphs_meet_the_contract() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(77, crate::rng::Stream::Training);
        let eps = 1e-2;
        for trial in 0..60 {
            let n = 4 + trial % 7;
            // two blocks with no cross edges
            let split = 1 + rng.random_range(0..(n - 1));
            let mut edges: Vec<(usize, usize, f64)> = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    let same_side = (u < split) == (v < split);
                    if same_side && rng.random::<f64>() < 0.6 {
                        edges.push((u, v, rng.random_range(0.2..1.5)));
                    }
                }
            }
            let g = DenseAdjacency::from_edges(n, false, &edges).unwrap();
            let parts = partition_of(&g);
            let out = connectivity_projection(g.weights(), &parts, eps).unwrap();

            // contract: non-negative, zero diagonal, symmetric, PD floor
            for i in 0..n {
                assert_eq!(out[[i, i]], 0.0);
                for j in 0..n {
                    assert!(out[[i, j]] >= 0.0);
                    assert_abs_diff_eq!(out[[i, j]], out[[j, i]], epsilon = 1e-12);
                }
            }
            let lam = lambda_min_of(&out).unwrap();
            assert!(lam >= 0.5 * eps, "lambda_min {lam} below floor");

            // positive support must now be one connected component
            let d = DenseAdjacency::new(out, false).unwrap();
            assert_eq!(components_undirected(&d, 0.0).len(), 1, "trial {trial}");
        }
    }

    #[test]
    fn per_component_floor_holds() {
        // one weak 3-node component and one singleton
        let mut w = Array2::zeros((4, 4));
        w[[0, 1]] = 1e-6;
        w[[1, 0]] = 1e-6;
        w[[1, 2]] = 1e-6;
        w[[2, 1]] = 1e-6;
        let parts = SccPartition { components: vec![vec![0, 1, 2], vec![3]] };
        let eps = 1e-3;
        let out = connectivity_projection(&w, &parts, eps).unwrap();
        let sub = array![
            [out[[0, 0]], out[[0, 1]], out[[0, 2]]],
            [out[[1, 0]], out[[1, 1]], out[[1, 2]]],
            [out[[2, 0]], out[[2, 1]], out[[2, 2]]],
        ];
        let lam = lambda_min_of(&sub).unwrap();
        assert!(lam >= 0.5 * eps, "component lambda_min {lam}");
    }
}
