//! Direct solvers: partial-pivot LU, Householder least squares, Cholesky.

use super::{dot, DenseMatrix, NumlinError};

/// Pivots smaller than this (relative to the largest entry of `A`) are
/// reported as singular.
pub const PIVOT_TOL: f64 = 1e-13;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumlinError> {
    if !a.is_square() {
        return Err(NumlinError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if b.len() != n {
        return Err(NumlinError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let scale = a.max_abs();
    if n > 0 && scale == 0.0 {
        return Err(NumlinError::Singular { pivot: 0.0, index: 0 });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv_row, piv) = (col..n)
            .map(|i| (i, m[(i, col)]))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty pivot range");
        if piv.abs() < PIVOT_TOL * scale {
            return Err(NumlinError::Singular {
                pivot: piv.abs(),
                index: col,
            });
        }
        if piv_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv_row, j)];
                m[(piv_row, j)] = tmp;
            }
            x.swap(col, piv_row);
        }
        for i in (col + 1)..n {
            let f = m[(i, col)] / piv;
            if f == 0.0 {
                continue;
            }
            m[(i, col)] = 0.0;
            for j in (col + 1)..n {
                m[(i, j)] -= f * m[(col, j)];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Minimizes `‖A x − b‖₂` for a tall matrix with full column rank using
/// Householder QR.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumlinError> {
    let (rows, cols) = (a.rows(), a.cols());
    if b.len() != rows {
        return Err(NumlinError::DimensionMismatch {
            expected: rows,
            found: b.len(),
        });
    }
    if rows < cols {
        return Err(NumlinError::ShapeMismatch {
            left: (rows, cols),
            right: (cols, 1),
        });
    }
    let scale = a.max_abs();
    let mut r = a.clone();
    let mut y = b.to_vec();
    let mut v = vec![0.0; rows];
    for k in 0..cols {
        let norm: f64 = (k..rows).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm < PIVOT_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(NumlinError::Singular { pivot: norm, index: k });
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        for i in k..rows {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..rows).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..cols {
            let s: f64 = (k..rows).map(|i| v[i] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..rows {
                r[(i, j)] -= s * v[i];
            }
        }
        let s: f64 = (k..rows).map(|i| v[i] * y[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in k..rows {
            y[i] -= s * v[i];
        }
    }
    let mut x = vec![0.0; cols];
    for i in (0..cols).rev() {
        let s: f64 = ((i + 1)..cols).map(|j| r[(i, j)] * x[j]).sum();
        x[i] = (y[i] - s) / r[(i, i)];
    }
    Ok(x)
}

/// Upper-triangular `R` with `RᵀR = A` for symmetric positive definite `A`.
pub fn cholesky_upper(a: &DenseMatrix) -> Result<DenseMatrix, NumlinError> {
    if !a.is_square() {
        return Err(NumlinError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= r[(k, j)] * r[(k, j)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(NumlinError::NotPositiveDefinite { index: j, pivot: d });
        }
        let rjj = d.sqrt();
        r[(j, j)] = rjj;
        for i in (j + 1)..n {
            let mut s = a[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Ok(r)
}

/// `X R⁻¹` for upper-triangular `R` (row-wise forward substitution).
pub fn right_solve_upper(x: &DenseMatrix, r: &DenseMatrix) -> DenseMatrix {
    let k = r.rows();
    assert_eq!(x.cols(), k);
    let mut out = DenseMatrix::zeros(x.rows(), k);
    for i in 0..x.rows() {
        let src = x.row(i);
        let dst = out.row_mut(i);
        for j in 0..k {
            let s: f64 = (0..j).map(|l| dst[l] * r[(l, j)]).sum();
            dst[j] = (src[j] - s) / r[(j, j)];
        }
    }
    out
}

/// Solves `A X = B` for symmetric positive definite `A` given its Cholesky
/// factor `R` (`A = RᵀR`).
pub fn cholesky_solve(r: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = r.rows();
    assert_eq!(b.rows(), n);
    let mut out = b.clone();
    for c in 0..b.cols() {
        // Rᵀ y = b
        for i in 0..n {
            let s: f64 = (0..i).map(|k| r[(k, i)] * out[(k, c)]).sum();
            out[(i, c)] = (out[(i, c)] - s) / r[(i, i)];
        }
        // R x = y
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| r[(i, k)] * out[(k, c)]).sum();
            out[(i, c)] = (out[(i, c)] - s) / r[(i, i)];
        }
    }
    out
}

/// `‖A x − b‖∞`.
pub fn residual_inf(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    (0..a.rows())
        .map(|i| (dot(a.row(i), x) - b[i]).abs())
        .fold(0.0, f64::max)
}
