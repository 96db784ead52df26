//! Block-pooled heatmap export: dense CSV grids plus 8-bit PGM images with
//! the value scale recorded in a sidecar file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::Result;

/// Mean over `block x block` tiles (ragged edge tiles average over their
/// actual cells). Block means times their cell counts conserve the total sum.
pub fn block_mean(m: &Array2<f64>, block: usize) -> Array2<f64> {
    assert!(block >= 1);
    let (rows, cols) = m.dim();
    let br = rows.div_ceil(block);
    let bc = cols.div_ceil(block);
    let mut out = Array2::zeros((br, bc));
    for i in 0..br {
        for j in 0..bc {
            let r0 = i * block;
            let c0 = j * block;
            let r1 = (r0 + block).min(rows);
            let c1 = (c0 + block).min(cols);
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += m[[r, c]];
                }
            }
            out[[i, j]] = sum / ((r1 - r0) * (c1 - c0)) as f64;
        }
    }
    out
}

pub fn dense_csv(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[[i, j]])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Binary 8-bit PGM, row-major, values scaled to [0, 255]. Returns the
/// (min, max) scale written into the image.
pub fn write_pgm(m: &Array2<f64>, path: &Path) -> Result<(f64, f64)> {
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = Vec::with_capacity(64 + m.len());
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).as_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = ((m[[i, j]] - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
            bytes.push(v);
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok((lo, hi))
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.scale.txt` for one matrix.
pub fn export_heatmap(m: &Array2<f64>, block: usize, dir: &Path, stem: &str) -> Result<()> {
    let pooled = block_mean(m, block);
    std::fs::write(dir.join(format!("{stem}.csv")), dense_csv(&pooled))?;
    let (lo, hi) = write_pgm(&pooled, &dir.join(format!("{stem}.pgm")))?;
    std::fs::write(
        dir.join(format!("{stem}.scale.txt")),
        format!("min {lo}\nmax {hi}\nblock {block}\n"),
    )?;
    Ok(())
}

/// The three reconstruction views: the true adjacency, the observation
/// error, and the learning error.
pub fn export_reconstruction(
    a_true: &Array2<f64>,
    a_obs: &Array2<f64>,
    learned: &Array2<f64>,
    block: usize,
    dir: &Path,
) -> Result<()> {
    export_heatmap(a_true, block, dir, "adjacency_true")?;
    export_heatmap(&(a_obs - a_true), block, dir, "adjacency_observed_minus_true")?;
    export_heatmap(&(learned - a_true), block, dir, "adjacency_learned_minus_true")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pooling_conserves_the_total_sum() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(31, crate::rng::Stream::Baseline);
        let m = Array2::from_shape_fn((103, 103), |_| rng.random_range(-2.0..2.0));
        for block in [1usize, 7, 50, 103] {
            let pooled = block_mean(&m, block);
            // block means weighted by their cell counts reproduce the sum
            let mut total = 0.0;
            for i in 0..pooled.nrows() {
                for j in 0..pooled.ncols() {
                    let r = (m.nrows() - i * block).min(block);
                    let c = (m.ncols() - j * block).min(block);
                    total += pooled[[i, j]] * (r * c) as f64;
                }
            }
            assert_abs_diff_eq!(total, m.sum(), epsilon = 1e-9);
        }
    }

    #[test]
    fn pgm_has_correct_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let m = Array2::from_shape_fn((4, 6), |(i, j)| (i * 6 + j) as f64);
        let path = dir.path().join("x.pgm");
        let (lo, hi) = write_pgm(&m, &path).unwrap();
        assert_eq!((lo, hi), (0.0, 23.0));
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n6 4\n255\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 24);
        assert_eq!(*bytes.last().unwrap(), 255);
    }
}
