//! Dense linear algebra: matrices, a symmetric eigensolver, direct solvers,
//! stationary-distribution weighted norms and principal angles.

mod eigen;
mod matrix;
mod solve;
mod sparse;

pub use eigen::{fix_signs, sym_eig, SymEig, SIGN_THRESHOLD};
pub use matrix::{dot, max_abs_diff, norm2, DenseMatrix};
pub use solve::{
    cholesky_solve, cholesky_upper, least_squares, residual_inf, right_solve_upper, solve_linear,
    PIVOT_TOL,
};
pub use sparse::CsrMatrix;

use thiserror::Error;

/// Default asymmetry tolerance accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Threshold on `‖XᵀX − I‖_F` for inputs that must have orthonormal columns.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumlinError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix not symmetric: max |A - Aᵀ| = {asymmetry:e} > {tol:e}")]
    NotSymmetric { asymmetry: f64, tol: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("singular matrix: pivot {pivot:e} at column {index}")]
    Singular { pivot: f64, index: usize },
    #[error("matrix not positive definite: pivot {pivot:e} at {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("columns not orthonormal: ‖XᵀX − I‖_F = {deviation:e}")]
    NotOrthonormal { deviation: f64 },
    #[error("weights must be strictly positive (index {index}: {value})")]
    NonPositiveWeight { index: usize, value: f64 },
}

fn check_weights(phi: &[f64]) -> Result<(), NumlinError> {
    match phi.iter().position(|&p| !(p > 0.0)) {
        Some(index) => Err(NumlinError::NonPositiveWeight {
            index,
            value: phi[index],
        }),
        None => Ok(()),
    }
}

/// `√(Σᵢ φᵢ xᵢ²)`.
pub fn weighted_norm(x: &[f64], phi: &[f64]) -> Result<f64, NumlinError> {
    if x.len() != phi.len() {
        return Err(NumlinError::DimensionMismatch {
            expected: phi.len(),
            found: x.len(),
        });
    }
    check_weights(phi)?;
    Ok(x.iter().zip(phi).map(|(v, p)| p * v * v).sum::<f64>().sqrt())
}

/// Operator norm induced by [`weighted_norm`]: `‖Φ^{1/2} A Φ^{−1/2}‖₂`.
pub fn weighted_opnorm(a: &DenseMatrix, phi: &[f64]) -> Result<f64, NumlinError> {
    if !a.is_square() {
        return Err(NumlinError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if a.rows() != phi.len() {
        return Err(NumlinError::DimensionMismatch {
            expected: a.rows(),
            found: phi.len(),
        });
    }
    check_weights(phi)?;
    let sq: Vec<f64> = phi.iter().map(|p| p.sqrt()).collect();
    let inv_sq: Vec<f64> = sq.iter().map(|s| 1.0 / s).collect();
    let b = a.scale_rows(&sq).scale_cols(&inv_sq);
    Ok(spectral_norm(&b))
}

/// Largest singular value, via the eigenvalues of the Gram matrix `BᵀB`.
pub fn spectral_norm(b: &DenseMatrix) -> f64 {
    if b.rows() == 0 || b.cols() == 0 {
        return 0.0;
    }
    let gram = b.tr_matmul(b).expect("Gram of a matrix with itself").symmetric_part();
    let eig = sym_eig(&gram, f64::INFINITY).expect("Gram matrix is symmetric");
    eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Singular values of a (small) matrix in descending order.
pub fn singular_values(b: &DenseMatrix) -> Vec<f64> {
    if b.cols() == 0 {
        return Vec::new();
    }
    let gram = b.tr_matmul(b).expect("Gram of a matrix with itself").symmetric_part();
    let eig = sym_eig(&gram, f64::INFINITY).expect("Gram matrix is symmetric");
    eig.values.iter().rev().map(|v| v.max(0.0).sqrt()).collect()
}

/// `‖XᵀX − I‖_F`.
pub fn orthonormality_defect(x: &DenseMatrix) -> f64 {
    let gram = x.tr_matmul(x).expect("Gram of a matrix with itself");
    gram.sub(&DenseMatrix::identity(x.cols()))
        .expect("square Gram")
        .frobenius_norm()
}

/// Principal angles between the column spans of `X` and `Y`, ascending,
/// each in `[0, π/2]`. Both inputs must have orthonormal columns.
pub fn principal_angles(x: &DenseMatrix, y: &DenseMatrix) -> Result<Vec<f64>, NumlinError> {
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(NumlinError::ShapeMismatch {
            left: (x.rows(), x.cols()),
            right: (y.rows(), y.cols()),
        });
    }
    for m in [x, y] {
        let deviation = orthonormality_defect(m);
        if deviation > ORTHONORMAL_TOL {
            return Err(NumlinError::NotOrthonormal { deviation });
        }
    }
    let cross = x.tr_matmul(y)?;
    let mut angles: Vec<f64> = singular_values(&cross)
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
