//! Exact PCA via Jacobi eigen-decomposition of the covariance matrix.
//!
//! Embedding widths are small (h <= 64 at desk scale), so a cyclic Jacobi
//! sweep is plenty and keeps the decomposition deterministic. Sign
//! convention: each component's largest-magnitude entry is positive.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Eigen-decomposition of a symmetric matrix. Returns `(values, vectors)`
/// sorted by descending eigenvalue; `vectors` holds one eigenvector per
/// row.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (row, &col) in order.iter().enumerate() {
        let mut max_abs = 0.0;
        let mut flip = false;
        for k in 0..n {
            let entry = v.get(k, col);
            if entry.abs() > max_abs {
                max_abs = entry.abs();
                flip = entry < 0.0;
            }
        }
        let sign = if flip { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors.set(row, k, sign * v.get(k, col));
        }
    }
    Ok((values, vectors))
}

/// 2-D PCA projection of the rows of `points`.
///
/// Returns the projected `N x 2` matrix and the component matrix
/// (`2 x h`, one component per row). Widths below 2 are padded with a
/// zero second coordinate.
pub fn project_2d(points: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = points.rows();
    let h = points.cols();
    if n == 0 || h == 0 {
        return Err(Error::EmptyBatch("pca projection".into()));
    }
    let mut mean = vec![0.0; h];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(points.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(h, h);
    for r in 0..n {
        let row = points.row(r);
        for i in 0..h {
            let di = row[i] - mean[i];
            for j in i..h {
                let dj = row[j] - mean[j];
                cov.set(i, j, cov.get(i, j) + di * dj);
            }
        }
    }
    for i in 0..h {
        for j in i..h {
            let v = cov.get(i, j) / n as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let (_, vectors) = symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(2, h);
    for c in 0..2.min(h) {
        components.row_mut(c).copy_from_slice(vectors.row(c));
    }
    let mut projected = Matrix::zeros(n, 2);
    for r in 0..n {
        let row = points.row(r);
        for c in 0..2.min(h) {
            let mut acc = 0.0;
            for t in 0..h {
                acc += (row[t] - mean[t]) * components.get(c, t);
            }
            projected.set(r, c, acc);
        }
    }
    Ok((projected, components))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Frozen from a 50-digit closed-form eigen solution of the 2x2
    // covariance of five fixed points.
    #[test]
    fn pca_components_match_eigen_oracle_fixture() {
        let points = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.4],
            vec![2.0, 1.1],
            vec![3.0, 1.4],
            vec![4.0, 2.2],
        ])
        .unwrap();
        let cov = {
            let mut c = Matrix::zeros(2, 2);
            c.set(0, 0, 2.0);
            c.set(0, 1, 1.08);
            c.set(1, 0, 1.08);
            c.set(1, 1, 0.5936);
            c
        };
        let (values, vectors) = symmetric_eigen(&cov).unwrap();
        assert!((values[0] - 2.585555306487620143).abs() < 1e-12);
        assert!((values[1] - 0.0080446935123797625).abs() < 1e-12);
        assert!((vectors.get(0, 0) - 0.87910259871655893).abs() < 1e-10);
        assert!((vectors.get(0, 1) - 0.47663258483846108).abs() < 1e-10);

        let (projected, components) = project_2d(&points).unwrap();
        assert_eq!(projected.rows(), 5);
        for c in 0..2 {
            for t in 0..2 {
                assert!((components.get(c, t) - vectors.get(c, t)).abs() < 1e-10);
            }
        }
    }

    // Points already spanning a 2-D subspace of a higher-dimensional
    // space reproduce their pairwise geometry exactly.
    #[test]
    fn pca_exact_on_embedded_planar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 6;
        // orthonormal pair of directions in 6-d
        let mut u = vec![0.0; h];
        let mut w = vec![0.0; h];
        u[0] = 0.6;
        u[2] = 0.8;
        w[1] = 1.0;
        let n = 12;
        let mut rows = Vec::new();
        let mut coords = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            coords.push((a, b));
            let row: Vec<f64> = (0..h).map(|t| a * u[t] + b * w[t] + 3.0).collect();
            rows.push(row);
        }
        let points = Matrix::from_rows(&rows).unwrap();
        let (projected, _) = project_2d(&points).unwrap();
        // pairwise distances preserved up to rotation/reflection
        for i in 0..n {
            for j in (i + 1)..n {
                let orig = {
                    let (ai, bi) = coords[i];
                    let (aj, bj) = coords[j];
                    ((ai - aj).powi(2) + (bi - bj).powi(2)).sqrt()
                };
                let proj = {
                    let dx = projected.get(i, 0) - projected.get(j, 0);
                    let dy = projected.get(i, 1) - projected.get(j, 1);
                    (dx * dx + dy * dy).sqrt()
                };
                assert!(
                    (orig - proj).abs() < 1e-9,
                    "pair ({i},{j}): {orig} vs {proj}"
                );
            }
        }
    }

    #[test]
    fn eigen_rejects_non_square() {
        assert!(symmetric_eigen(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_diagonalizes_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-2.0..2.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        // A v = lambda v for every pair
        for e in 0..n {
            for i in 0..n {
                let mut av = 0.0;
                for j in 0..n {
                    av += m.get(i, j) * vectors.get(e, j);
                }
                assert!(
                    (av - values[e] * vectors.get(e, i)).abs() < 1e-9,
                    "eigenpair {e} row {i}"
                );
            }
        }
    }
}
