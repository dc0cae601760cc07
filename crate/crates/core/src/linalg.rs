//! Dense linear algebra kernels: LU solves, cyclic Jacobi eigendecomposition,
//! and a real embedding for Hermitian eigenvalues.
//!
//! Everything here is written for small dense matrices (n up to a few
//! hundred). Jacobi is chosen over QL/QR for its robustness on degenerate
//! clusters and the orthogonality of the accumulated rotations.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

/// Solve `A x = b` by LU decomposition with partial pivoting.
///
/// Returns [`Error::SingularSystem`] when a pivot falls below
/// `1e-13 * max|A|`, which at these scales means the system is rank
/// deficient rather than merely ill-conditioned.
pub fn lu_solve(a: &Array2<f64>, b: &Array1<f64>, context: &str) -> Result<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "lu_solve requires a square matrix");
    assert_eq!(b.len(), n, "rhs length must match matrix dimension");

    let scale = a.iter().fold(0.0_f64, |m, &v| m.max(v.abs())).max(1.0);
    let tol = 1e-13 * scale;

    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        // Partial pivoting: pick the largest magnitude in this column.
        let mut pivot_row = col;
        let mut pivot_val = lu[[perm[col], col]].abs();
        for row in col + 1..n {
            let v = lu[[perm[row], col]].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < tol {
            return Err(Error::SingularSystem {
                context: context.to_string(),
            });
        }
        perm.swap(col, pivot_row);

        let piv = lu[[perm[col], col]];
        for row in col + 1..n {
            let factor = lu[[perm[row], col]] / piv;
            lu[[perm[row], col]] = factor;
            for k in col + 1..n {
                lu[[perm[row], k]] -= factor * lu[[perm[col], k]];
            }
        }
    }

    // Forward substitution on the permuted rhs.
    let mut y = Array1::<f64>::zeros(n);
    for row in 0..n {
        let mut acc = x[perm[row]];
        for k in 0..row {
            acc -= lu[[perm[row], k]] * y[k];
        }
        y[row] = acc;
    }
    // Back substitution.
    for row in (0..n).rev() {
        let mut acc = y[row];
        for k in row + 1..n {
            acc -= lu[[perm[row], k]] * x[k];
        }
        x[row] = acc / lu[[perm[row], row]];
    }
    Ok(x)
}

/// Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of the second result.
pub fn jacobi_eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "jacobi_eigh requires a square matrix");

    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n == 1 {
        return Ok((Array1::from_vec(vec![m[[0, 0]]]), v));
    }

    let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = (1e-15 * fro).max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = off_diagonal_norm(&m);
        if off <= stop {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- J^T A J applied to rows/columns p and q.
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
                // Accumulate the rotation into the eigenvector matrix.
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > stop {
        return Err(Error::EigensolverFailure { sweeps: MAX_SWEEPS });
    }

    // Sort ascending, permuting the eigenvector columns alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].partial_cmp(&m[[j, j]]).unwrap());
    let lambdas = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, dst]] = v[[r, src]];
        }
    }
    Ok((lambdas, vectors))
}

fn off_diagonal_norm(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                acc += m[[p, q]] * m[[p, q]];
            }
        }
    }
    acc.sqrt()
}

/// Eigenvalues (ascending) of a complex Hermitian matrix.
///
/// Uses the real embedding `[[Re, -Im], [Im, Re]]`, which is symmetric when
/// the input is Hermitian and carries each eigenvalue of the input twice.
/// The doubled spectrum is collapsed by taking every second sorted value.
pub fn hermitian_eigenvalues(h: &Array2<Complex64>) -> Result<Array1<f64>> {
    let n = h.nrows();
    assert_eq!(h.ncols(), n, "hermitian_eigenvalues requires a square matrix");

    let mut emb = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = h[[i, j]];
            emb[[i, j]] = z.re;
            emb[[i + n, j + n]] = z.re;
            emb[[i, j + n]] = -z.im;
            emb[[i + n, j]] = z.im;
        }
    }
    let (doubled, _) = jacobi_eigh(&emb)?;
    Ok(Array1::from_iter((0..n).map(|k| doubled[2 * k])))
}

/// Spectral norm of a complex Hermitian matrix by power iteration on the
/// squared real embedding (the plain iterate would oscillate on the
/// symmetric +/- spectrum these Hamiltonians carry).
pub fn hermitian_spectral_norm(h: &Array2<Complex64>) -> f64 {
    let n = h.nrows();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
        .collect();
    normalize_c(&mut v);
    let mut est = 0.0;
    for _ in 0..200 {
        let w = matvec_c(h, &v);
        let w2 = matvec_c(h, &w);
        let norm = norm_c(&w2);
        if norm < 1e-300 {
            return 0.0;
        }
        est = norm.sqrt();
        v = w2;
        normalize_c(&mut v);
    }
    est
}

fn matvec_c(m: &Array2<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = m.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += m[[i, j]] * v[j];
        }
        out[i] = acc;
    }
    out
}

fn norm_c(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize_c(v: &mut [Complex64]) {
    let n = norm_c(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

/// Largest absolute entry of the difference of two matrices.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Largest absolute entry of a vector difference.
pub fn max_abs_diff_vec(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (&x, &y)| m.max((x - y).abs()))
}
