//! Ergodic Markov chains: ergodicity test, stationary distribution, average
//! reward and the differential value function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numlin::{self, dot, least_squares, solve_linear, DenseMatrix, NumlinError};

/// Maximum row-sum deviation accepted as stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-10;
/// Default tolerance on `‖φᵀP − φᵀ‖∞`.
pub const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("row {row} of P sums to {sum} (or has a negative entry)")]
    NotStochastic { row: usize, sum: f64 },
    #[error("chain is not irreducible and aperiodic")]
    NotErgodic,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("stationary distribution not reached: residual {residual:e} > {tol:e}")]
    StationarityNotReached { residual: f64, tol: f64 },
    #[error("linear algebra failure: {0}")]
    Numlin(#[from] NumlinError),
}

/// Row-stochastic kernel with rewards and its stationary distribution.
#[derive(Debug, Clone)]
pub struct ErgodicChain {
    p: DenseMatrix,
    r: Vec<f64>,
    phi: Vec<f64>,
    labels: Vec<(usize, usize)>,
}

impl ErgodicChain {
    /// Validates stochasticity and ergodicity, then caches `φ`.
    pub fn new(p: DenseMatrix, r: Vec<f64>, labels: Vec<(usize, usize)>) -> Result<Self, ChainError> {
        if !p.is_square() {
            return Err(NumlinError::NotSquare {
                rows: p.rows(),
                cols: p.cols(),
            }
            .into());
        }
        for len in [r.len(), labels.len()] {
            if len != p.rows() {
                return Err(ChainError::DimensionMismatch {
                    expected: p.rows(),
                    found: len,
                });
            }
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(NumlinError::NonFinite { row: 0, col: 0 }.into());
        }
        let phi = stationary_distribution(&p, STATIONARY_TOL)?;
        Ok(Self { p, r, phi, labels })
    }

    /// Chain without spatial labels (states are labelled `(i, 0)`).
    pub fn from_kernel(p: DenseMatrix, r: Vec<f64>) -> Result<Self, ChainError> {
        let labels = (0..p.rows()).map(|i| (i, 0)).collect();
        Self::new(p, r, labels)
    }

    pub fn size(&self) -> usize {
        self.p.rows()
    }

    pub fn kernel(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn rewards(&self) -> &[f64] {
        &self.r
    }

    pub fn stationary(&self) -> &[f64] {
        &self.phi
    }

    pub fn state_labels(&self) -> &[(usize, usize)] {
        &self.labels
    }

    pub fn solve_poisson(&self) -> Result<ValueSolution, ChainError> {
        solve_poisson(&self.p, &self.r)
    }
}

/// Average reward, centered reward, differential value and stationary
/// distribution of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    pub rho: f64,
    pub r_bar: Vec<f64>,
    pub v: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ValueSolution {
    /// `‖v − r̄ − P v‖∞`.
    pub fn poisson_residual(&self, p: &DenseMatrix) -> f64 {
        let pv = p.matvec(&self.v).expect("dimensions fixed at solve time");
        self.v
            .iter()
            .zip(&self.r_bar)
            .zip(&pv)
            .map(|((v, r), pv)| (v - r - pv).abs())
            .fold(0.0, f64::max)
    }

    /// `|φᵀ v|`.
    pub fn normalization_defect(&self) -> f64 {
        dot(&self.phi, &self.v).abs()
    }
}

fn check_stochastic(p: &DenseMatrix) -> Result<(), ChainError> {
    if !p.is_square() {
        return Err(NumlinError::NotSquare {
            rows: p.rows(),
            cols: p.cols(),
        }
        .into());
    }
    for i in 0..p.rows() {
        let row = p.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&x| x < 0.0) {
            return Err(ChainError::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// Boolean square matrix with bitset rows.
#[derive(Clone)]
struct Pattern {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Pattern {
    fn support(p: &DenseMatrix) -> Self {
        let n = p.rows();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for i in 0..n {
            for (j, &x) in p.row(i).iter().enumerate() {
                if x > 0.0 {
                    bits[i * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        Self { n, words, bits }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn mul(&self, rhs: &Pattern) -> Pattern {
        let mut out = vec![0u64; self.bits.len()];
        for i in 0..self.n {
            let dst = &mut out[i * self.words..(i + 1) * self.words];
            for (w, &word) in self.row(i).iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    let k = w * 64 + word.trailing_zeros() as usize;
                    word &= word - 1;
                    for (d, s) in dst.iter_mut().zip(rhs.row(k)) {
                        *d |= s;
                    }
                }
            }
        }
        Pattern {
            n: self.n,
            words: self.words,
            bits: out,
        }
    }

    fn all_positive(&self) -> bool {
        let full_words = self.n / 64;
        let tail = self.n % 64;
        (0..self.n).all(|i| {
            let row = self.row(i);
            row[..full_words].iter().all(|&w| w == u64::MAX)
                && (tail == 0 || row[full_words] == (1u64 << tail) - 1)
        })
    }
}

/// True iff some power `P^t` with `1 ≤ t ≤ max_power` is entrywise positive
/// (default `max_power = |S|²`).
///
/// Works on the support pattern of `P`; positivity of `P^t` persists for all
/// larger `t`, so it suffices to test `t = max_power` by repeated squaring.
pub fn check_ergodic(p: &DenseMatrix, max_power: Option<usize>) -> Result<bool, ChainError> {
    check_stochastic(p)?;
    let n = p.rows();
    if n == 0 {
        return Ok(false);
    }
    let mut t = max_power.unwrap_or(n * n).max(1);
    let mut base = Pattern::support(p);
    let mut acc: Option<Pattern> = None;
    while t > 0 {
        if t & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a.mul(&base),
            });
        }
        t >>= 1;
        if t > 0 {
            base = base.mul(&base);
        }
    }
    Ok(acc.expect("t ≥ 1").all_positive())
}

/// Stationary distribution of an ergodic kernel.
///
/// Solves `(Pᵀ − I) φ = 0` with the last equation replaced by `Σφ = 1`, then
/// polishes with power iteration until `‖φᵀP − φᵀ‖∞ ≤ tol`.
pub fn stationary_distribution(p: &DenseMatrix, tol: f64) -> Result<Vec<f64>, ChainError> {
    if !check_ergodic(p, None)? {
        return Err(ChainError::NotErgodic);
    }
    let n = p.rows();
    let mut a = DenseMatrix::from_fn(n, n, |i, j| p[(j, i)] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut phi = solve_linear(&a, &b)?;
    normalize_probability(&mut phi);

    let mut residual = stationarity_residual(p, &phi);
    for _ in 0..200 {
        if residual <= tol {
            break;
        }
        let next = p.vecmat(&phi)?;
        phi = next;
        normalize_probability(&mut phi);
        residual = stationarity_residual(p, &phi);
    }
    if residual > tol {
        return Err(ChainError::StationarityNotReached { residual, tol });
    }
    if phi.iter().any(|&x| !(x > 0.0)) {
        return Err(ChainError::NotErgodic);
    }
    Ok(phi)
}

fn normalize_probability(phi: &mut [f64]) {
    for x in phi.iter_mut() {
        *x = x.max(0.0);
    }
    let s: f64 = phi.iter().sum();
    for x in phi.iter_mut() {
        *x /= s;
    }
}

/// `‖φᵀP − φᵀ‖∞`.
pub fn stationarity_residual(p: &DenseMatrix, phi: &[f64]) -> f64 {
    let next = p.vecmat(phi).expect("φ has |S| entries");
    numlin::max_abs_diff(&next, phi)
}

/// `ρ = φᵀr` and `r̄ = r − ρ·1`.
pub fn average_reward(phi: &[f64], r: &[f64]) -> Result<(f64, Vec<f64>), ChainError> {
    if phi.len() != r.len() {
        return Err(ChainError::DimensionMismatch {
            expected: phi.len(),
            found: r.len(),
        });
    }
    let rho = dot(phi, r);
    let mut r_bar: Vec<f64> = r.iter().map(|x| x - rho).collect();
    // Remove the O(ε) leftover so φᵀ r̄ vanishes to rounding.
    let drift = dot(phi, &r_bar);
    for x in r_bar.iter_mut() {
        *x -= drift;
    }
    Ok((rho, r_bar))
}

/// Differential value function `v = r̄ + P v` with `φᵀv = 0`.
///
/// Solves the stacked system `[(I − P); φᵀ] v = [r̄; 0]` in the least-squares
/// sense; for an ergodic chain it is consistent and has full column rank.
pub fn solve_poisson(p: &DenseMatrix, r: &[f64]) -> Result<ValueSolution, ChainError> {
    let n = p.rows();
    if r.len() != n {
        return Err(ChainError::DimensionMismatch {
            expected: n,
            found: r.len(),
        });
    }
    let phi = stationary_distribution(p, STATIONARY_TOL)?;
    let (rho, r_bar) = average_reward(&phi, r)?;

    let stacked = DenseMatrix::from_fn(n + 1, n, |i, j| {
        if i < n {
            (if i == j { 1.0 } else { 0.0 }) - p[(i, j)]
        } else {
            phi[j]
        }
    });
    let mut rhs = r_bar.clone();
    rhs.push(0.0);
    let mut v = least_squares(&stacked, &rhs)?;
    recenter(&mut v, &phi);
    Ok(ValueSolution { rho, r_bar, v, phi })
}

/// Second route to the same `v`: `(I − P + 1φᵀ) v = r̄`.
///
/// The deflated matrix is invertible for ergodic `P` and maps the subspace
/// `{x : φᵀx = 0}` onto itself, so its solution automatically satisfies the
/// normalization.
pub fn solve_poisson_deflated(p: &DenseMatrix, r: &[f64]) -> Result<ValueSolution, ChainError> {
    let n = p.rows();
    if r.len() != n {
        return Err(ChainError::DimensionMismatch {
            expected: n,
            found: r.len(),
        });
    }
    let phi = stationary_distribution(p, STATIONARY_TOL)?;
    let (rho, r_bar) = average_reward(&phi, r)?;
    let a = DenseMatrix::from_fn(n, n, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - p[(i, j)] + phi[j]
    });
    let v = solve_linear(&a, &r_bar)?;
    Ok(ValueSolution { rho, r_bar, v, phi })
}

fn recenter(v: &mut [f64], phi: &[f64]) {
    let shift = dot(phi, v);
    for x in v.iter_mut() {
        *x -= shift;
    }
}

/// Orthonormal basis (columns) of `{x : φᵀx = 0}` under the Euclidean inner
/// product, built by Householder reflection of `φ/‖φ‖`.
pub fn zero_mean_basis(phi: &[f64]) -> DenseMatrix {
    let n = phi.len();
    let norm = numlin::norm2(phi);
    let mut w: Vec<f64> = phi.iter().map(|x| x / norm).collect();
    // Reflection H maps e₀ to ±φ̂; its other columns span φ̂⊥.
    w[0] += if w[0] >= 0.0 { 1.0 } else { -1.0 };
    let wn2 = dot(&w, &w);
    DenseMatrix::from_fn(n, n - 1, |i, j| {
        let col = j + 1;
        (if i == col { 1.0 } else { 0.0 }) - 2.0 * w[i] * w[col] / wn2
    })
}

/// Smallest singular value of `(I − P)` restricted to `{x : φᵀx = 0}`.
pub fn restricted_min_singular_value(p: &DenseMatrix, phi: &[f64]) -> f64 {
    let n = p.rows();
    let q = zero_mean_basis(phi);
    let i_minus_p = DenseMatrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - p[(i, j)]);
    let image = i_minus_p.matmul(&q).expect("n x n times n x (n-1)");
    numlin::singular_values(&image).last().copied().unwrap_or(0.0)
}
