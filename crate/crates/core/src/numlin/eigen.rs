//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use super::{DenseMatrix, NumlinError};

const MAX_SWEEPS: usize = 100;

/// Entries with magnitude at or below this are treated as zero when fixing
/// eigenvector signs.
pub const SIGN_THRESHOLD: f64 = 1e-12;

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Symmetric eigendecomposition `A = Q diag(λ) Qᵀ` by cyclic Jacobi rotations.
///
/// `tol` bounds the accepted asymmetry `max |A − Aᵀ|`; the solver works on
/// `(A + Aᵀ)/2`. Eigenvalues come back ascending and every eigenvector is
/// normalized so that its first entry larger than [`SIGN_THRESHOLD`] in
/// magnitude is positive. Vectors inside a degenerate cluster are an
/// arbitrary orthonormal basis of the cluster.
pub fn sym_eig(a: &DenseMatrix, tol: f64) -> Result<SymEig, NumlinError> {
    if !a.is_square() {
        return Err(NumlinError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    assert!(tol > 0.0, "symmetry tolerance must be positive");
    let asym = a.max_asymmetry();
    if asym > tol {
        return Err(NumlinError::NotSymmetric { asymmetry: asym, tol });
    }

    let n = a.rows();
    let mut m = a.symmetric_part();
    let mut q = DenseMatrix::identity(n);
    let scale = m.frobenius_norm();

    let target = (f64::EPSILON * scale).powi(2);
    let mut sweeps = 0;
    while n > 1 && off_diagonal_sq(&m) > target {
        if sweeps == MAX_SWEEPS {
            return Err(NumlinError::NoConvergence { sweeps });
        }
        for p in 0..n - 1 {
            for r in (p + 1)..n {
                rotate(&mut m, &mut q, p, r);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = q.select_columns(&order);
    fix_signs(&mut vectors);
    Ok(SymEig { values, vectors })
}

fn off_diagonal_sq(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s
}

/// Annihilates `m[p][r]` with a plane rotation `J` and accumulates `Q ← Q J`.
fn rotate(m: &mut DenseMatrix, q: &mut DenseMatrix, p: usize, r: usize) {
    let apr = m[(p, r)];
    if apr == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let arr = m[(r, r)];
    // Skip rotations that cannot change the diagonal in floating point.
    if apr.abs() < f64::EPSILON * 1e-3 * (app.abs() + arr.abs()) {
        m[(p, r)] = 0.0;
        m[(r, p)] = 0.0;
        return;
    }
    let theta = (arr - app) / (2.0 * apr);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.rows();

    // columns: A ← A J
    for k in 0..n {
        let akp = m[(k, p)];
        let akr = m[(k, r)];
        m[(k, p)] = c * akp - s * akr;
        m[(k, r)] = s * akp + c * akr;
    }
    // rows: A ← Jᵀ A
    {
        let (lo, hi) = (p.min(r), p.max(r));
        let cols = m.cols();
        let data = m.as_mut_slice();
        let (head, tail) = data.split_at_mut(hi * cols);
        let row_lo = &mut head[lo * cols..(lo + 1) * cols];
        let row_hi = &mut tail[..cols];
        let (row_p, row_r) = if p < r { (row_lo, row_hi) } else { (row_hi, row_lo) };
        for (xp, xr) in row_p.iter_mut().zip(row_r.iter_mut()) {
            let a = *xp;
            let b = *xr;
            *xp = c * a - s * b;
            *xr = s * a + c * b;
        }
    }
    m[(p, r)] = 0.0;
    m[(r, p)] = 0.0;

    for k in 0..n {
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = c * qkp - s * qkr;
        q[(k, r)] = s * qkp + c * qkr;
    }
}

/// Flips columns so the first entry with `|x| > SIGN_THRESHOLD` is positive.
pub fn fix_signs(vectors: &mut DenseMatrix) {
    for j in 0..vectors.cols() {
        let lead = (0..vectors.rows())
            .map(|i| vectors[(i, j)])
            .find(|x| x.abs() > SIGN_THRESHOLD);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..vectors.rows() {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}
