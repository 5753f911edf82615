//! Laplacians of (possibly non-reversible) Markov chains and their spectra.
//!
//! The chain Laplacian is `L = I − (P + Φ⁻¹PᵀΦ)/2`. It is self-adjoint in the
//! `Φ`-weighted inner product, and similar to the symmetric matrix
//! `𝓛 = Φ^{1/2} L Φ^{−1/2}`, which is where every spectrum here is computed.

use thiserror::Error;

use crate::chain::{self, ChainError};
use crate::numlin::{sym_eig, DenseMatrix, NumlinError, SYMMETRY_TOL};

/// Tolerance on `‖φᵀP − φᵀ‖∞` accepted when building a Laplacian.
pub const STATIONARITY_CHECK_TOL: f64 = 1e-10;
/// `λ₂` below this means the graph is disconnected.
pub const GAP_TOL: f64 = 1e-9;
/// Largest vertex count accepted by [`cheeger_constant`].
pub const CHEEGER_MAX_NODES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("φ is not stationary for P: residual {residual:e}")]
    NotStationary { residual: f64 },
    #[error("symmetrized Laplacian has asymmetry {asymmetry:e}; φ is inconsistent with L")]
    AsymmetryTooLarge { asymmetry: f64 },
    #[error("spectral gap {lambda2:e} is numerically zero: graph is disconnected")]
    Degenerate { lambda2: f64 },
    #[error("weight matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("weight matrix has a negative entry at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize },
    #[error("graph has {nodes} nodes; brute-force Cheeger limit is {CHEEGER_MAX_NODES}")]
    TooLarge { nodes: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Numlin(#[from] NumlinError),
}

/// Full spectrum of a chain Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralBundle {
    /// Ascending eigenvalues `λ₁ ≤ … ≤ λ_|S|`.
    pub lambdas: Vec<f64>,
    /// Eigenvectors as columns, `Φ`-orthonormal: `UᵀΦU = I`.
    pub u: DenseMatrix,
    pub phi: Vec<f64>,
}

impl SpectralBundle {
    pub fn size(&self) -> usize {
        self.lambdas.len()
    }

    /// First `k` eigenvectors.
    pub fn basis(&self, k: usize) -> DenseMatrix {
        self.u.leading_columns(k)
    }

    /// `λ_k` with 1-based `k`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// `λ_{k+1}`, or `+∞` when `k = |S|` (nothing left to truncate).
    pub fn lambda_after(&self, k: usize) -> f64 {
        self.lambdas.get(k).copied().unwrap_or(f64::INFINITY)
    }

    pub fn sum_lowest(&self, k: usize) -> f64 {
        self.lambdas[..k].iter().sum()
    }
}

fn check_inputs(p: &DenseMatrix, phi: &[f64]) -> Result<(), SpectralError> {
    if !p.is_square() {
        return Err(NumlinError::NotSquare {
            rows: p.rows(),
            cols: p.cols(),
        }
        .into());
    }
    if phi.len() != p.rows() {
        return Err(SpectralError::DimensionMismatch {
            expected: p.rows(),
            found: phi.len(),
        });
    }
    if let Some(index) = phi.iter().position(|&x| !(x > 0.0)) {
        return Err(NumlinError::NonPositiveWeight {
            index,
            value: phi[index],
        }
        .into());
    }
    let residual = chain::stationarity_residual(p, phi);
    if residual > STATIONARITY_CHECK_TOL {
        return Err(SpectralError::NotStationary { residual });
    }
    Ok(())
}

/// `L = I − (P + Φ⁻¹PᵀΦ)/2`.
pub fn build_laplacian(p: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, SpectralError> {
    check_inputs(p, phi)?;
    let n = p.rows();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        let adjoint = p[(j, i)] * phi[j] / phi[i];
        (if i == j { 1.0 } else { 0.0 }) - 0.5 * (p[(i, j)] + adjoint)
    }))
}

/// `𝓛 = Φ^{1/2} L Φ^{−1/2}`, exactly symmetrized after the asymmetry check.
pub fn symmetrize(l: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, SpectralError> {
    if !l.is_square() || l.rows() != phi.len() {
        return Err(SpectralError::DimensionMismatch {
            expected: l.rows(),
            found: phi.len(),
        });
    }
    let sq: Vec<f64> = phi.iter().map(|x| x.sqrt()).collect();
    let n = l.rows();
    let sym = DenseMatrix::from_fn(n, n, |i, j| sq[i] * l[(i, j)] / sq[j]);
    let asymmetry = sym.max_asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(SpectralError::AsymmetryTooLarge { asymmetry });
    }
    Ok(sym.symmetric_part())
}

/// Eigen-decomposition of `L` through `𝓛`: `U = Φ^{−1/2} Y`.
pub fn spectrum(l: &DenseMatrix, phi: &[f64]) -> Result<SpectralBundle, SpectralError> {
    let sym = symmetrize(l, phi)?;
    let eig = sym_eig(&sym, SYMMETRY_TOL)?;
    let inv_sq: Vec<f64> = phi.iter().map(|x| 1.0 / x.sqrt()).collect();
    Ok(SpectralBundle {
        lambdas: eig.values,
        u: eig.vectors.scale_rows(&inv_sq),
        phi: phi.to_vec(),
    })
}

/// `λ₂`; disconnected graphs are an error rather than a tiny number.
pub fn spectral_gap(bundle: &SpectralBundle) -> Result<f64, SpectralError> {
    let lambda2 = bundle.lambdas.get(1).copied().unwrap_or(0.0);
    if lambda2 < GAP_TOL {
        return Err(SpectralError::Degenerate { lambda2 });
    }
    Ok(lambda2)
}

/// Directed-graph Laplacian `I − (Φ^{1/2}PΦ^{−1/2} + Φ^{−1/2}PᵀΦ^{1/2})/2`.
pub fn chung_laplacian(p: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, SpectralError> {
    check_inputs(p, phi)?;
    let sq: Vec<f64> = phi.iter().map(|x| x.sqrt()).collect();
    let n = p.rows();
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        let forward = sq[i] * p[(i, j)] / sq[j];
        let backward = p[(j, i)] * sq[j] / sq[i];
        (if i == j { 1.0 } else { 0.0 }) - 0.5 * (forward + backward)
    }))
}

fn check_weights(w: &DenseMatrix) -> Result<(), SpectralError> {
    if !w.is_square() {
        return Err(NumlinError::NotSquare {
            rows: w.rows(),
            cols: w.cols(),
        }
        .into());
    }
    let asymmetry = w.max_asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(SpectralError::NotSymmetric { asymmetry });
    }
    for i in 0..w.rows() {
        if let Some(j) = w.row(i).iter().position(|&x| x < 0.0) {
            return Err(SpectralError::NegativeWeight { row: i, col: j });
        }
    }
    Ok(())
}

/// Combinatorial Laplacian `D − W`.
pub fn combinatorial_laplacian(w: &DenseMatrix) -> DenseMatrix {
    let d = w.row_sums();
    DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| {
        (if i == j { d[i] } else { 0.0 }) - w[(i, j)]
    })
}

/// `Σᵢⱼ Wᵢⱼ (xᵢ − xⱼ)²`, which equals `2·xᵀ(D − W)x`.
pub fn dirichlet_energy(x: &[f64], w: &DenseMatrix) -> Result<f64, SpectralError> {
    check_weights(w)?;
    if x.len() != w.rows() {
        return Err(SpectralError::DimensionMismatch {
            expected: w.rows(),
            found: x.len(),
        });
    }
    let mut energy = 0.0;
    for i in 0..w.rows() {
        for (j, &wij) in w.row(i).iter().enumerate() {
            let d = x[i] - x[j];
            energy += wij * d * d;
        }
    }
    let lx = combinatorial_laplacian(w).matvec(x)?;
    let quad: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
    let scale = 1.0 + energy.abs();
    assert!(
        (energy - 2.0 * quad).abs() <= 1e-10 * scale,
        "Dirichlet double sum {energy} disagrees with 2·xᵀLx = {}",
        2.0 * quad
    );
    Ok(energy)
}

fn is_connected(w: &DenseMatrix) -> bool {
    let n = w.rows();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for (v, &x) in w.row(u).iter().enumerate() {
            if x > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Exact Cheeger constant `min_S cut(S, S̄) / min(vol S, vol S̄)` by
/// enumerating every cut (graphs of at most 16 vertices).
pub fn cheeger_constant(w: &DenseMatrix) -> Result<f64, SpectralError> {
    check_weights(w)?;
    let n = w.rows();
    if n > CHEEGER_MAX_NODES {
        return Err(SpectralError::TooLarge { nodes: n });
    }
    if n < 2 || !is_connected(w) {
        return Err(SpectralError::Disconnected);
    }
    let degree = w.row_sums();
    let total: f64 = degree.iter().sum();
    let mut best = f64::INFINITY;
    // Vertex n-1 always stays outside S, so each cut is visited once.
    for mask in 1u32..(1 << (n - 1)) {
        let inside = |i: usize| mask & (1 << i) != 0;
        let vol: f64 = (0..n).filter(|&i| inside(i)).map(|i| degree[i]).sum();
        let mut cut = 0.0;
        for i in (0..n).filter(|&i| inside(i)) {
            for (j, &x) in w.row(i).iter().enumerate() {
                if !inside(j) {
                    cut += x;
                }
            }
        }
        best = best.min(cut / vol.min(total - vol));
    }
    Ok(best)
}

/// Simple random walk `P = D⁻¹W` on an undirected graph together with its
/// stationary distribution `φ = d / vol(V)`.
pub fn random_walk(w: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>), SpectralError> {
    check_weights(w)?;
    let d = w.row_sums();
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(NumlinError::NonPositiveWeight { index: i, value: d[i] }.into());
    }
    let total: f64 = d.iter().sum();
    let p = DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| w[(i, j)] / d[i]);
    Ok((p, d.iter().map(|x| x / total).collect()))
}
