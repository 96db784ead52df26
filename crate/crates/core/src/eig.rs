//! Symmetric eigendecomposition without external solvers.
//!
//! Two deterministic routes: cyclic Jacobi rotations for matrices up to
//! 256x256, Householder tridiagonalization followed by implicit-shift QL
//! above that. Both return eigenvalues in ascending order with eigenvectors
//! in the matching columns, accurate to well below 1e-9 at the scales this
//! crate works at.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;
const QL_MAX_ITERS: usize = 80;

fn check_square_finite(m: &Array2<f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Input(format!("matrix must be square, got {r}x{c}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(r)
}

fn sort_pairs(mut vals: Array1<f64>, mut vecs: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        sorted_vecs.column_mut(k).assign(&vecs.column(i));
    }
    vals = sorted_vals;
    vecs = sorted_vecs;
    (vals, vecs)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Works on the
/// upper triangle of a flat buffer; eigenvectors are accumulated as rows so
/// every rotation touches contiguous memory.
pub fn jacobi_eigh(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = check_square_finite(m)?;
    if n <= 1 {
        return Ok((m.diag().to_owned(), Array2::eye(n)));
    }
    let mut a: Vec<f64> = m.iter().copied().collect();
    // vt[p * n + j] = j-th component of eigenvector p
    let mut vt = vec![0.0; n * n];
    for p in 0..n {
        vt[p * n + p] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        // 1e-13 relative off-diagonal mass bounds the eigenvalue error far
        // below the 1e-9 contract; a tighter floor just spins at roundoff
        if (2.0 * off).sqrt() <= 1e-13 * frob {
            let vals = Array1::from_iter((0..n).map(|i| a[i * n + i]));
            let mut vecs = Array2::zeros((n, n));
            for p in 0..n {
                for j in 0..n {
                    vecs[[j, p]] = vt[p * n + j];
                }
            }
            return Ok(sort_pairs(vals, vecs));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                a[p * n + p] -= h;
                a[q * n + q] += h;
                a[p * n + q] = 0.0;

                // rotate the rest of the upper triangle in three strips
                macro_rules! rot {
                    ($ix:expr, $iy:expr) => {{
                        let g = a[$ix];
                        let hh = a[$iy];
                        a[$ix] = g - s * (hh + tau * g);
                        a[$iy] = hh + s * (g - tau * hh);
                    }};
                }
                for j in 0..p {
                    rot!(j * n + p, j * n + q);
                }
                for j in (p + 1)..q {
                    rot!(p * n + j, j * n + q);
                }
                for j in (q + 1)..n {
                    rot!(p * n + j, q * n + j);
                }
                let (head, tail) = vt.split_at_mut(q * n);
                let row_p = &mut head[p * n..p * n + n];
                let row_q = &mut tail[..n];
                for j in 0..n {
                    let g = row_p[j];
                    let hh = row_q[j];
                    row_p[j] = g - s * (hh + tau * g);
                    row_q[j] = hh + s * (g - tau * hh);
                }
            }
        }
    }
    Err(Error::Numeric("Jacobi sweep limit reached without convergence".into()))
}

/// Householder reduction to tridiagonal form (diagonal d, subdiagonal e),
/// accumulating the transform in v. Classic EISPACK tred2.
fn tred2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on a tridiagonal matrix; EISPACK tql2 with eigenvalues
/// sorted ascending at the end.
fn tql2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERS {
                    return Err(Error::Numeric("QL iteration limit exceeded".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = (p * p + 1.0).sqrt();
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = (p * p + e[i] * e[i]).sqrt();
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // ascending order
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                let t = v[[j, i]];
                v[[j, i]] = v[[j, k]];
                v[[j, k]] = t;
            }
        }
    }
    Ok(())
}

/// Householder + QL eigendecomposition of a symmetric matrix.
pub fn tridiag_eigh(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = check_square_finite(m)?;
    let mut v = m.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return Ok((Array1::zeros(0), v));
    }
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok((Array1::from(d), v))
}

/// Eigendecomposition of a symmetric matrix; the input is symmetrized
/// defensively. Eigenvalues ascending, eigenvectors in columns.
pub fn eigh(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = check_square_finite(m)?;
    let s = (m + &m.t()) * 0.5;
    if n <= 256 {
        jacobi_eigh(&s)
    } else {
        tridiag_eigh(&s)
    }
}

/// Smallest eigenvalue of a (defensively symmetrized) matrix.
pub fn min_eigenvalue_sym(m: &Array2<f64>) -> Result<f64> {
    let (vals, _) = eigh(m)?;
    vals.first()
        .copied()
        .ok_or_else(|| Error::Input("empty matrix".into()))
}
