//! `Φ`-weighted least-squares projections, value-approximation errors and
//! the bounds that control them.
//!
//! With `Ψ` the exact bottom-`k` eigenvectors and `Ψ̂` learned features,
//!
//! ```text
//! ‖v − Π_Ψ̂ v‖_Φ ≤ ‖r̄‖_Φ √(1/(λ₂ λ_{k+1})) + ‖v‖_Φ √(2ε/(λ_{k+1} − λ_k))
//! ```
//!
//! where the first term bounds the truncation error `‖v − Π_Ψ v‖_Φ` and the
//! second bounds `‖(Π_Ψ − Π_Ψ̂) v‖_Φ`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ErgodicChain, ValueSolution};
use crate::gdo::{phi_gram, phi_orthonormality_defect, Representation};
use crate::numlin::{
    cholesky_solve, cholesky_upper, spectral_norm, weighted_norm, DenseMatrix, NumlinError,
    ORTHONORMAL_TOL,
};
use crate::spectral::{SpectralBundle, GAP_TOL};

/// `λ_{k+1} − λ_k` at or below this makes the estimation bound vacuous.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Slack allowed on every checked inequality.
pub const INVARIANT_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("features are rank deficient in the Φ geometry")]
    RankDeficient,
    #[error("spectral gap λ₂ = {lambda2:e} is numerically zero")]
    DegenerateGap { lambda2: f64 },
    #[error("negative residual ε = {epsilon:e}")]
    NegativeEpsilon { epsilon: f64 },
    #[error("features are not Φ-orthonormal: defect {deviation:e}")]
    NotOrthonormal { deviation: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invariant violated: {inequality} (lhs {lhs:e}, rhs {rhs:e}, margin {margin:e})")]
    InvariantViolated {
        inequality: &'static str,
        lhs: f64,
        rhs: f64,
        margin: f64,
    },
    #[error(transparent)]
    Numlin(#[from] NumlinError),
}

/// A bound that is either a number or vacuous (infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Finite(f64),
    Vacuous,
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Finite(x) => Some(x),
            Bound::Vacuous => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    /// Sum with a finite term; vacuous stays vacuous.
    pub fn plus(self, x: f64) -> Bound {
        match self {
            Bound::Finite(b) => Bound::Finite(b + x),
            Bound::Vacuous => Bound::Vacuous,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(x) => write!(f, "{x}"),
            Bound::Vacuous => f.write_str("inf"),
        }
    }
}

fn gram_factor(x: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, BoundsError> {
    if x.rows() != phi.len() {
        return Err(BoundsError::DimensionMismatch {
            expected: phi.len(),
            found: x.rows(),
        });
    }
    let gram = phi_gram(x, phi);
    let scale = gram.max_abs();
    let r = cholesky_upper(&gram).map_err(|_| BoundsError::RankDeficient)?;
    let min_pivot = (0..r.rows()).map(|i| r[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot * min_pivot > 1e-14 * scale) {
        return Err(BoundsError::RankDeficient);
    }
    Ok(r)
}

/// `Π = X (XᵀΦX)⁻¹ XᵀΦ`.
pub fn phi_projector(x: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, BoundsError> {
    let r = gram_factor(x, phi)?;
    // C = (XᵀΦX)⁻¹ XᵀΦ, then Π = X C.
    let xt_phi = x.scale_rows(phi).transpose();
    let c = cholesky_solve(&r, &xt_phi);
    Ok(x.matmul(&c)?)
}

/// `v̂ = Π v`, computed without forming `Π`.
pub fn approx_value(v: &[f64], x: &DenseMatrix, phi: &[f64]) -> Result<Vec<f64>, BoundsError> {
    if v.len() != phi.len() {
        return Err(BoundsError::DimensionMismatch {
            expected: phi.len(),
            found: v.len(),
        });
    }
    let r = gram_factor(x, phi)?;
    let weighted: Vec<f64> = v.iter().zip(phi).map(|(a, b)| a * b).collect();
    let rhs = DenseMatrix::new(x.cols(), 1, x.vecmat(&weighted)?)?;
    let coef = cholesky_solve(&r, &rhs).into_vec();
    Ok(x.matvec(&coef)?)
}

/// `‖v − Π v‖_Φ`.
pub fn approximation_error(v: &[f64], x: &DenseMatrix, phi: &[f64]) -> Result<f64, BoundsError> {
    let vhat = approx_value(v, x, phi)?;
    let diff: Vec<f64> = v.iter().zip(&vhat).map(|(a, b)| a - b).collect();
    Ok(weighted_norm(&diff, phi)?)
}

/// `‖r̄‖_Φ √(1/(λ₂ λ_{k+1}))`. An infinite `λ_{k+1}` (nothing truncated)
/// gives 0.
pub fn truncation_bound(r_bar: &[f64], phi: &[f64], lambda2: f64, lambda_k1: f64) -> Result<f64, BoundsError> {
    if !(lambda2 > GAP_TOL) {
        return Err(BoundsError::DegenerateGap { lambda2 });
    }
    let norm = weighted_norm(r_bar, phi)?;
    Ok(norm * (1.0 / (lambda2 * lambda_k1)).sqrt())
}

/// `‖v‖_Φ √(2ε/(λ_{k+1} − λ_k))`, vacuous when the gap is at most
/// [`DEGENERACY_TOL`].
pub fn estimation_bound(
    v: &[f64],
    phi: &[f64],
    epsilon: f64,
    lambda_k: f64,
    lambda_k1: f64,
) -> Result<Bound, BoundsError> {
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(BoundsError::NegativeEpsilon { epsilon });
    }
    let gap = lambda_k1 - lambda_k;
    if !(gap > DEGENERACY_TOL) {
        return Ok(Bound::Vacuous);
    }
    let norm = weighted_norm(v, phi)?;
    Ok(Bound::Finite(norm * (2.0 * epsilon / gap).sqrt()))
}

fn check_phi_orthonormal(x: &DenseMatrix, phi: &[f64]) -> Result<(), BoundsError> {
    if x.rows() != phi.len() {
        return Err(BoundsError::DimensionMismatch {
            expected: phi.len(),
            found: x.rows(),
        });
    }
    let deviation = phi_orthonormality_defect(x, phi);
    if deviation > ORTHONORMAL_TOL {
        return Err(BoundsError::NotOrthonormal { deviation });
    }
    Ok(())
}

/// `‖Π_Ψ − Π_Ψ̂‖_Φ` for two `Φ`-orthonormal bases of equal size.
///
/// With `Y = Φ^{1/2}Ψ` and `Ŷ = Φ^{1/2}Ψ̂` this is `‖YYᵀ − ŶŶᵀ‖₂`, the sine
/// of the largest principal angle, evaluated as `‖(I − YYᵀ)Ŷ‖₂`.
pub fn projector_distance(psi: &DenseMatrix, psi_hat: &DenseMatrix, phi: &[f64]) -> Result<f64, BoundsError> {
    check_phi_orthonormal(psi, phi)?;
    check_phi_orthonormal(psi_hat, phi)?;
    if psi.cols() != psi_hat.cols() {
        return Err(BoundsError::DimensionMismatch {
            expected: psi.cols(),
            found: psi_hat.cols(),
        });
    }
    let sq: Vec<f64> = phi.iter().map(|p| p.sqrt()).collect();
    let y = psi.scale_rows(&sq);
    let yh = psi_hat.scale_rows(&sq);
    let overlap = y.tr_matmul(&yh)?;
    let residual = yh.sub(&y.matmul(&overlap)?)?;
    Ok(spectral_norm(&residual).min(1.0))
}

/// Every quantity for one `(chain, k)` experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub lambda2: f64,
    pub lambda_k: f64,
    pub lambda_k1: f64,
    pub epsilon: f64,
    pub err_exact_basis: f64,
    pub err_learned_basis: f64,
    pub projector_distance: f64,
    pub truncation_bound: f64,
    pub estimation_bound: Bound,
    pub total_bound: Bound,
    /// `‖v‖_Φ`.
    pub value_norm: f64,
}

impl BoundReport {
    /// Re-checks the three inequalities the report must satisfy.
    pub fn check_invariants(&self) -> Result<(), BoundsError> {
        check_le(
            "err_exact_basis <= truncation_bound",
            self.err_exact_basis,
            self.truncation_bound,
        )?;
        if let Bound::Finite(total) = self.total_bound {
            check_le("err_learned_basis <= total_bound", self.err_learned_basis, total)?;
        }
        let gap = self.lambda_k1 - self.lambda_k;
        if gap > DEGENERACY_TOL {
            check_le(
                "projector_distance <= sqrt(2 eps / gap)",
                self.projector_distance,
                (2.0 * self.epsilon / gap).sqrt(),
            )?;
        }
        Ok(())
    }
}

fn check_le(inequality: &'static str, lhs: f64, rhs: f64) -> Result<(), BoundsError> {
    let margin = rhs + INVARIANT_SLACK - lhs;
    if margin >= 0.0 {
        Ok(())
    } else {
        Err(BoundsError::InvariantViolated {
            inequality,
            lhs,
            rhs,
            margin,
        })
    }
}

/// Assembles and checks a [`BoundReport`] using the first `k` exact
/// eigenvectors and the learned features of `representation`.
pub fn make_report(
    chain: &ErgodicChain,
    bundle: &SpectralBundle,
    representation: &Representation,
    value: &ValueSolution,
    k: usize,
) -> Result<BoundReport, BoundsError> {
    let n = chain.size();
    if bundle.size() != n || value.v.len() != n {
        return Err(BoundsError::DimensionMismatch {
            expected: n,
            found: bundle.size().min(value.v.len()),
        });
    }
    if k == 0 || k > n || representation.psi_hat.cols() != k {
        return Err(BoundsError::DimensionMismatch {
            expected: k,
            found: representation.psi_hat.cols(),
        });
    }
    let phi = chain.stationary();
    let psi = bundle.basis(k);
    let lambda2 = bundle.lambdas.get(1).copied().unwrap_or(f64::INFINITY);
    let lambda_k = bundle.lambda(k);
    let lambda_k1 = bundle.lambda_after(k);

    let err_exact_basis = approximation_error(&value.v, &psi, phi)?;
    let err_learned_basis = approximation_error(&value.v, &representation.psi_hat, phi)?;
    let projector_distance = projector_distance(&psi, &representation.psi_hat, phi)?;
    let truncation = truncation_bound(&value.r_bar, phi, lambda2, lambda_k1)?;
    let estimation = estimation_bound(&value.v, phi, representation.epsilon, lambda_k, lambda_k1)?;

    let report = BoundReport {
        k,
        lambda2,
        lambda_k,
        lambda_k1,
        epsilon: representation.epsilon,
        err_exact_basis,
        err_learned_basis,
        projector_distance,
        truncation_bound: truncation,
        estimation_bound: estimation,
        total_bound: estimation.plus(truncation),
        value_norm: weighted_norm(&value.v, phi)?,
    };
    report.check_invariants()?;
    Ok(report)
}

/// `⟨f, g⟩` in the `φ`-weighted function space, `Σ_s φ(s) f(s) g(s)`.
pub fn tilde_inner(f: &[f64], g: &[f64], phi: &[f64]) -> f64 {
    phi.iter().zip(f).zip(g).map(|((p, a), b)| p * a * b).sum()
}

/// `⟨f, L̃g⟩` evaluated from the kernel
/// `D̃(s, s') = P(s'|s)/(2φ(s')) + P(s|s')/(2φ(s))` as
/// `Σ_s φ(s) f(s) (g(s) − Σ_{s'} D̃(s, s') g(s') φ(s'))`.
pub fn tilde_laplacian_pairing(f: &[f64], g: &[f64], p: &DenseMatrix, phi: &[f64]) -> f64 {
    let n = phi.len();
    let mut total = 0.0;
    for s in 0..n {
        let mut smoothed = 0.0;
        for t in 0..n {
            let kernel = p[(s, t)] / (2.0 * phi[t]) + p[(t, s)] / (2.0 * phi[s]);
            smoothed += kernel * g[t] * phi[t];
        }
        total += phi[s] * f[s] * (g[s] - smoothed);
    }
    total
}

/// `fᵀ Φ L g`.
pub fn matrix_laplacian_pairing(f: &[f64], g: &[f64], l: &DenseMatrix, phi: &[f64]) -> f64 {
    let lg = l.matvec(g).expect("dimensions agree");
    tilde_inner(f, &lg, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdo::{gdo_residual, initial_features, phi_orthonormalize};
    use crate::spectral::{build_laplacian, spectrum};

    struct Fixture {
        chain: ErgodicChain,
        l: DenseMatrix,
        bundle: SpectralBundle,
        value: ValueSolution,
    }

    fn fixture(p: DenseMatrix, r: Vec<f64>) -> Fixture {
        let chain = ErgodicChain::from_kernel(p, r).unwrap();
        let l = build_laplacian(chain.kernel(), chain.stationary()).unwrap();
        let bundle = spectrum(&l, chain.stationary()).unwrap();
        let value = chain.solve_poisson().unwrap();
        Fixture { chain, l, bundle, value }
    }

    fn uniform_pair() -> Fixture {
        fixture(DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap(), vec![1.0, 0.0])
    }

    fn four_state() -> Fixture {
        fixture(
            DenseMatrix::from_rows(&[
                [0.1, 0.5, 0.2, 0.2],
                [0.3, 0.1, 0.5, 0.1],
                [0.2, 0.2, 0.1, 0.5],
                [0.6, 0.1, 0.2, 0.1],
            ])
            .unwrap(),
            vec![1.0, -0.5, 0.25, 2.0],
        )
    }

    fn exact_rep(f: &Fixture, k: usize) -> Representation {
        Representation {
            psi_hat: f.bundle.basis(k),
            k,
            epsilon: 0.0,
            optimizer_trace: Vec::new(),
        }
    }

    fn assert_mat_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert!(a.sub(b).unwrap().max_abs() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn projector_properties() {
        let f = four_state();
        let phi = f.chain.stationary();
        let x = initial_features(4, 2, 3);
        let pi = phi_projector(&x, phi).unwrap();
        assert_mat_close(&pi.matmul(&pi).unwrap(), &pi, 1e-10);
        let phi_pi = pi.scale_rows(phi);
        assert_mat_close(&phi_pi, &phi_pi.transpose(), 1e-10);
        assert_mat_close(&pi.matmul(&x).unwrap(), &x, 1e-10);
        let m = DenseMatrix::from_rows(&[[2.0, 1.0], [-1.0, 3.0]]).unwrap();
        assert_mat_close(&phi_projector(&x.matmul(&m).unwrap(), phi).unwrap(), &pi, 1e-10);
        let full = phi_projector(&initial_features(4, 4, 1), phi).unwrap();
        assert_mat_close(&full, &DenseMatrix::identity(4), 1e-10);
        let rank_one = DenseMatrix::from_fn(4, 2, |s, _| s as f64);
        assert!(matches!(phi_projector(&rank_one, phi), Err(BoundsError::RankDeficient)));
    }

    #[test]
    fn constant_feature_projects_to_mean() {
        let f = four_state();
        let phi = f.chain.stationary();
        let ones = DenseMatrix::from_fn(4, 1, |_, _| 1.0);
        let w = [1.0, 2.0, 3.0, 4.0];
        let mean = tilde_inner(phi, &w, &[1.0; 4]);
        for x in approx_value(&w, &ones, phi).unwrap() {
            assert!((x - mean).abs() < 1e-14);
        }
        for x in approx_value(&f.value.v, &ones, phi).unwrap() {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn approx_value_residual_is_orthogonal() {
        let f = four_state();
        let phi = f.chain.stationary();
        let x = initial_features(4, 2, 8);
        let vhat = approx_value(&f.value.v, &x, phi).unwrap();
        let res: Vec<f64> = f.value.v.iter().zip(&vhat).map(|(a, b)| a - b).collect();
        for j in 0..2 {
            assert!(tilde_inner(&res, &x.column(j), phi).abs() < 1e-10);
        }
        let full = approx_value(&f.value.v, &f.bundle.u, phi).unwrap();
        assert!(full.iter().zip(&f.value.v).all(|(a, b)| (a - b).abs() < 1e-12));
        let inside = x.matvec(&[0.3, -2.0]).unwrap();
        let same = approx_value(&inside, &x, phi).unwrap();
        assert!(same.iter().zip(&inside).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn two_state_worked_example() {
        let f = uniform_pair();
        let phi = f.chain.stationary();
        let ones = DenseMatrix::from_fn(2, 1, |_, _| 1.0);
        let vhat = approx_value(&f.value.v, &ones, phi).unwrap();
        assert!(vhat.iter().all(|x| x.abs() < 1e-15));
        assert!((weighted_norm(&f.value.r_bar, phi).unwrap() - 0.5).abs() < 1e-15);
        let tb = truncation_bound(&f.value.r_bar, phi, 1.0, 1.0).unwrap();
        assert!((tb - 0.5).abs() < 1e-15);

        let report = make_report(&f.chain, &f.bundle, &exact_rep(&f, 1), &f.value, 1).unwrap();
        assert!((report.err_exact_basis - 0.5).abs() < 1e-12);
        assert!((report.truncation_bound - 0.5).abs() < 1e-12);
        assert!((report.lambda2 - 1.0).abs() < 1e-12);
        assert_eq!(report.estimation_bound, Bound::Finite(0.0));
        assert_eq!(report.total_bound, Bound::Finite(report.truncation_bound));
    }

    #[test]
    fn truncation_bound_examples() {
        let phi = [0.5, 0.5];
        assert_eq!(truncation_bound(&[0.0, 0.0], &phi, 1.0, 1.0).unwrap(), 0.0);
        let a = truncation_bound(&[0.3, -0.3], &phi, 0.4, 0.9).unwrap();
        let b = truncation_bound(&[0.6, -0.6], &phi, 0.4, 0.9).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(matches!(
            truncation_bound(&[0.3, -0.3], &phi, 0.0, 0.9),
            Err(BoundsError::DegenerateGap { .. })
        ));
        assert_eq!(truncation_bound(&[0.3, -0.3], &phi, 0.4, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn estimation_bound_examples() {
        let phi = [0.5, 0.5];
        let v = [1.0, -1.0];
        assert_eq!(estimation_bound(&v, &phi, 0.0, 0.2, 0.7).unwrap(), Bound::Finite(0.0));
        assert_eq!(estimation_bound(&v, &phi, 0.1, 0.7, 0.7).unwrap(), Bound::Vacuous);
        match estimation_bound(&v, &phi, 0.25, 0.2, 0.7).unwrap() {
            Bound::Finite(x) => assert!((x - 1.0).abs() < 1e-15),
            Bound::Vacuous => panic!("gap is positive"),
        }
        assert!(matches!(
            estimation_bound(&v, &phi, -1e-3, 0.2, 0.7),
            Err(BoundsError::NegativeEpsilon { .. })
        ));
    }

    #[test]
    fn projector_distance_examples() {
        let f = four_state();
        let phi = f.chain.stationary();
        let psi = f.bundle.basis(2);
        assert!(projector_distance(&psi, &psi, phi).unwrap() < 1e-12);
        let (c, s) = (0.6f64, 0.8f64);
        let rot = DenseMatrix::from_rows(&[[c, -s], [s, c]]).unwrap();
        let rotated = psi.matmul(&rot).unwrap();
        assert!(projector_distance(&psi, &rotated, phi).unwrap() < 1e-12);

        let uniform = vec![0.25; 4];
        let e1 = DenseMatrix::from_fn(4, 1, |i, _| if i == 0 { 2.0 } else { 0.0 });
        let e2 = DenseMatrix::from_fn(4, 1, |i, _| if i == 1 { 2.0 } else { 0.0 });
        assert!((projector_distance(&e1, &e2, &uniform).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            projector_distance(&e1.scale(0.5), &e2, &uniform),
            Err(BoundsError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn full_basis_report_has_zero_errors() {
        let f = four_state();
        let report = make_report(&f.chain, &f.bundle, &exact_rep(&f, 4), &f.value, 4).unwrap();
        assert!(report.err_exact_basis < 1e-12 && report.err_learned_basis < 1e-12);
        assert!(report.lambda_k1.is_infinite());
        assert_eq!(report.truncation_bound, 0.0);
    }

    #[test]
    fn report_with_learned_features() {
        let f = four_state();
        let phi = f.chain.stationary();
        for seed in 0..10 {
            let psi_hat = phi_orthonormalize(&initial_features(4, 2, seed), phi).unwrap();
            let epsilon = gdo_residual(&psi_hat, &f.l, phi, &f.bundle.lambdas).unwrap();
            let rep = Representation {
                psi_hat,
                k: 2,
                epsilon,
                optimizer_trace: Vec::new(),
            };
            let report = make_report(&f.chain, &f.bundle, &rep, &f.value, 2).unwrap();
            assert!(
                report.err_learned_basis
                    >= report.err_exact_basis - report.projector_distance * report.value_norm - 1e-12
            );
        }
    }

    #[test]
    fn underreported_epsilon_is_caught() {
        let f = four_state();
        let phi = f.chain.stationary();
        let psi_hat = phi_orthonormalize(&initial_features(4, 2, 0), phi).unwrap();
        let rep = Representation {
            psi_hat,
            k: 2,
            epsilon: 0.0,
            optimizer_trace: Vec::new(),
        };
        assert!(matches!(
            make_report(&f.chain, &f.bundle, &rep, &f.value, 2),
            Err(BoundsError::InvariantViolated { .. })
        ));
    }

    #[test]
    fn kernel_pairing_matches_matrix_pairing() {
        let f = four_state();
        let phi = f.chain.stationary();
        let a = [0.3, -1.0, 2.0, 0.5];
        let b = [1.5, 0.2, -0.7, 1.0];
        let kernel = tilde_laplacian_pairing(&a, &b, f.chain.kernel(), phi);
        let matrix = matrix_laplacian_pairing(&a, &b, &f.l, phi);
        assert!((kernel - matrix).abs() < 1e-12);
    }
}
