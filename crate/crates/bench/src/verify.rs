//! Randomized property checks over every module, with margins.
//!
//! Each check draws its instances from its own ChaCha stream, so the suite
//! is reproducible and checks do not perturb one another.

use std::fmt;

use laprep_core::bounds::{approx_value, make_report, projector_distance, tilde_laplacian_pairing, truncation_bound};
use laprep_core::chain::{restricted_min_singular_value, solve_poisson_deflated, ErgodicChain};
use laprep_core::gdo::{
    gdo_gradient, gdo_loss, gdo_loss_monte_carlo, learn_representation, phi_orthonormalize, GdoConfig,
    Representation,
};
use laprep_core::numlin::{
    principal_angles, solve_linear, spectral_norm, sym_eig, weighted_norm, weighted_opnorm, DenseMatrix,
    SYMMETRY_TOL,
};
use laprep_core::spectral::{
    build_laplacian, cheeger_constant, chung_laplacian, random_walk, spectrum, symmetrize, SpectralError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gen;

/// Builds the Laplacian from `(P, φ)`.
pub type LaplacianFn = fn(&DenseMatrix, &[f64]) -> Result<DenseMatrix, SpectralError>;
/// Reports the residual of `Φ`-orthonormal features `x` against the operator
/// `a` with ascending eigenvalues `lambdas`.
pub type EpsilonFn = fn(&DenseMatrix, &DenseMatrix, &[f64], &[f64]) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Roughly a fifth of the trials.
    pub fast: bool,
    pub seed: u64,
    pub laplacian: LaplacianFn,
    pub epsilon: EpsilonFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            fast: false,
            seed: 0,
            laplacian: build_laplacian,
            epsilon: honest_epsilon,
        }
    }
}

impl VerifyOptions {
    fn trials(&self, full: usize, fast: usize) -> usize {
        if self.fast {
            fast
        } else {
            full
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// `tr(xᵀΦAx) − Σ_{i≤k} λᵢ`, with rounding-level negatives clamped to 0.
pub fn honest_epsilon(x: &DenseMatrix, a: &DenseMatrix, phi: &[f64], lambdas: &[f64]) -> f64 {
    let ax = a.matmul(x).expect("dimensions agree");
    let trace = x.scale_rows(phi).tr_matmul(&ax).expect("dimensions agree").trace();
    let eps = trace - lambdas[..x.cols()].iter().sum::<f64>();
    if (-1e-9..0.0).contains(&eps) {
        0.0
    } else {
        eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub trials: usize,
    /// Smallest slack seen; negative on failure.
    pub margin: f64,
    pub detail: String,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} trials={:<5} margin={:+.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.trials,
            self.margin,
            self.detail
        )
    }
}

struct Check {
    name: &'static str,
    trials: usize,
    failures: usize,
    worst: f64,
    first_failure: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            failures: 0,
            worst: f64::INFINITY,
            first_failure: None,
        }
    }

    fn observe(&mut self, margin: f64, ok: bool, what: impl FnOnce() -> String) {
        self.worst = if margin.is_nan() { f64::NEG_INFINITY } else { self.worst.min(margin) };
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    /// Passes when `margin >= 0`.
    fn at_least(&mut self, margin: f64, what: impl FnOnce() -> String) {
        self.observe(margin, margin >= 0.0, what);
    }

    /// Passes when `margin > 0`.
    fn strictly(&mut self, margin: f64, what: impl FnOnce() -> String) {
        self.observe(margin, margin > 0.0, what);
    }

    fn error(&mut self, what: String) {
        self.observe(f64::NEG_INFINITY, false, || what);
    }

    fn trial(&mut self) {
        self.trials += 1;
    }

    fn finish(self) -> PropertyResult {
        let passed = self.failures == 0 && self.trials > 0;
        let detail = match self.first_failure {
            Some(first) => format!("{} of {} failed; first: {first}", self.failures, self.trials),
            None if self.trials == 0 => "no trials ran".into(),
            None => "ok".into(),
        };
        PropertyResult {
            name: self.name,
            passed,
            trials: self.trials,
            margin: if self.worst.is_finite() || self.worst < 0.0 { self.worst } else { 0.0 },
            detail,
        }
    }
}

fn inverse(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_linear(a, &e).ok()
        })
        .collect();
    DenseMatrix::from_columns(&cols?).ok()
}

/// `A Q = Q Λ`, `QᵀQ = I`, ascending eigenvalues.
pub fn check_eigendecomposition(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("eigendecomposition");
    let mut rng = opts.rng(10);
    for _ in 0..opts.trials(30, 6) {
        c.trial();
        let n = rng.random_range(2..=50);
        let a = gen::uniform_matrix(&mut rng, n, n).symmetric_part();
        let Ok(eig) = sym_eig(&a, SYMMETRY_TOL) else {
            c.error(format!("n={n}: eigensolver failed"));
            continue;
        };
        let recon = a
            .matmul(&eig.vectors)
            .and_then(|aq| aq.sub(&eig.vectors.scale_cols(&eig.values)))
            .map(|d| d.frobenius_norm())
            .unwrap_or(f64::INFINITY);
        let orth = eig
            .vectors
            .tr_matmul(&eig.vectors)
            .and_then(|g| g.sub(&DenseMatrix::identity(n)))
            .map(|d| d.frobenius_norm())
            .unwrap_or(f64::INFINITY);
        let sorted = eig.values.windows(2).all(|w| w[0] <= w[1]);
        c.at_least(1e-9 * a.frobenius_norm() - recon, || format!("n={n}: ‖AQ − QΛ‖ = {recon:e}"));
        c.at_least(1e-10 - orth, || format!("n={n}: ‖QᵀQ − I‖ = {orth:e}"));
        if !sorted {
            c.error(format!("n={n}: eigenvalues not ascending"));
        }
    }
    c.finish()
}

/// `‖Π_X − Π_Y‖_F² = 2 Σ sin²θᵢ` on random orthonormal pairs.
pub fn check_sin_theta(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("sin_theta_identity");
    let mut rng = opts.rng(11);
    for _ in 0..opts.trials(100, 20) {
        c.trial();
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..n);
        let x = gen::orthonormal(&mut rng, n, k);
        let y = gen::orthonormal(&mut rng, n, k);
        let px = x.matmul(&x.transpose()).expect("square");
        let py = y.matmul(&y.transpose()).expect("square");
        let lhs = px.sub(&py).expect("same shape").frobenius_norm().powi(2);
        let Ok(angles) = principal_angles(&x, &y) else {
            c.error(format!("n={n} k={k}: principal angles failed"));
            continue;
        };
        let rhs = 2.0 * angles.iter().map(|t| t.sin().powi(2)).sum::<f64>();
        c.at_least(1e-9 - (lhs - rhs).abs(), || format!("n={n} k={k}: {lhs} vs {rhs}"));
    }
    c.finish()
}

/// `sym(A)⁻¹ ⪰ sym(A⁻¹)` when `sym(A)` is positive definite.
pub fn check_symmetric_inverse(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("symmetric_inverse_order");
    let mut rng = opts.rng(12);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let n = rng.random_range(2..=8);
        let b = gen::uniform_matrix(&mut rng, n, n);
        let k = gen::uniform_matrix(&mut rng, n, n);
        let s = b
            .tr_matmul(&b)
            .and_then(|g| g.add(&DenseMatrix::identity(n).scale(0.1)))
            .expect("square");
        let a = s.add(&k.sub(&k.transpose()).expect("square").scale(0.5)).expect("square");
        let (Some(lhs), Some(inv)) = (inverse(&a.symmetric_part()), inverse(&a)) else {
            c.error(format!("n={n}: singular system"));
            continue;
        };
        let diff = lhs.sub(&inv.symmetric_part()).expect("square").symmetric_part();
        let min = sym_eig(&diff, SYMMETRY_TOL).map(|e| e.values[0]).unwrap_or(f64::NEG_INFINITY);
        c.at_least(min + 1e-10 * lhs.max_abs().max(1.0), || format!("n={n}: λ_min = {min:e}"));
    }
    c.finish()
}

/// With uniform `φ` the `Φ`-weighted operator norm is the spectral norm.
pub fn check_uniform_opnorm(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("uniform_weighted_opnorm");
    let mut rng = opts.rng(13);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let n = rng.random_range(1..=10);
        let a = gen::uniform_matrix(&mut rng, n, n);
        let phi = vec![1.0 / n as f64; n];
        match weighted_opnorm(&a, &phi) {
            Ok(w) => {
                let d = (w - spectral_norm(&a)).abs();
                c.at_least(1e-10 - d, || format!("n={n}: differs by {d:e}"));
            }
            Err(e) => c.error(format!("n={n}: {e}")),
        }
    }
    c.finish()
}

/// Residual and normalization of the Poisson solution, cross-checked
/// against the deflated solver.
pub fn check_poisson(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("poisson_solution");
    let mut rng = opts.rng(14);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 30);
        let n = chain.size();
        let (Ok(a), Ok(b)) = (chain.solve_poisson(), solve_poisson_deflated(chain.kernel(), chain.rewards())) else {
            c.error(format!("n={n}: solver failed"));
            continue;
        };
        let res = a.poisson_residual(chain.kernel());
        let norm = a.normalization_defect();
        let agree = a.v.iter().zip(&b.v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        c.at_least(1e-8 - res, || format!("n={n}: residual {res:e}"));
        c.at_least(1e-10 - norm, || format!("n={n}: |φᵀv| = {norm:e}"));
        c.at_least(1e-9 - agree, || format!("n={n}: solvers differ by {agree:e}"));
    }
    c.finish()
}

/// `I − P` is invertible on `φ`-mean-zero functions.
pub fn check_restricted_bijectivity(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("restricted_bijectivity");
    let mut rng = opts.rng(15);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 30);
        let sigma = restricted_min_singular_value(chain.kernel(), chain.stationary());
        c.strictly(sigma - 1e-10, || format!("n={}: σ_min = {sigma:e}", chain.size()));
    }
    c.finish()
}

fn laplacian_of(opts: &VerifyOptions, chain: &ErgodicChain) -> Result<DenseMatrix, String> {
    (opts.laplacian)(chain.kernel(), chain.stationary()).map_err(|e| e.to_string())
}

/// `ΦL` is symmetric and `L1 = 0`.
pub fn check_self_adjoint(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("laplacian_self_adjoint");
    let mut rng = opts.rng(16);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let l = match laplacian_of(opts, &chain) {
            Ok(l) => l,
            Err(e) => {
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        let asym = l.scale_rows(chain.stationary()).max_asymmetry();
        let row = l.row_sums().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        c.at_least(1e-12 - asym, || format!("n={n}: ‖ΦL − LᵀΦ‖ = {asym:e}"));
        c.at_least(1e-12 - row, || format!("n={n}: ‖L1‖ = {row:e}"));
    }
    c.finish()
}

/// The spectrum of `𝓛` is non-negative with `λ₁ = 0` and `λ₂ > 0`.
pub fn check_psd(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("laplacian_psd");
    let mut rng = opts.rng(17);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let bundle = laplacian_of(opts, &chain)
            .and_then(|l| spectrum(&l, chain.stationary()).map_err(|e| e.to_string()));
        match bundle {
            Ok(b) => {
                c.at_least(1e-10 - b.lambdas[0].abs(), || format!("n={n}: λ₁ = {:e}", b.lambdas[0]));
                c.strictly(b.lambdas[1], || format!("n={n}: λ₂ = {:e}", b.lambdas[1]));
            }
            Err(e) => c.error(format!("n={n}: {e}")),
        }
    }
    c.finish()
}

/// Chung's directed Laplacian equals `Φ^{1/2} L Φ^{-1/2}`.
pub fn check_chung(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("chung_equivalence");
    let mut rng = opts.rng(18);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let phi = chain.stationary();
        let pair = laplacian_of(opts, &chain)
            .and_then(|l| symmetrize(&l, phi).map_err(|e| e.to_string()))
            .and_then(|s| chung_laplacian(chain.kernel(), phi).map(|ch| (s, ch)).map_err(|e| e.to_string()));
        match pair {
            Ok((s, ch)) => {
                let d = s.sub(&ch).expect("same shape").max_abs();
                c.at_least(1e-12 - d, || format!("n={n}: differ by {d:e}"));
            }
            Err(e) => c.error(format!("n={n}: {e}")),
        }
    }
    c.finish()
}

/// `⟨x, Lx⟩_Φ = ½ Σ φ(s) P(s, s') (x(s) − x(s'))²`.
pub fn check_dirichlet_form(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("dirichlet_form");
    let mut rng = opts.rng(19);
    for _ in 0..opts.trials(20, 5) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let (p, phi) = (chain.kernel(), chain.stationary());
        let l = match laplacian_of(opts, &chain) {
            Ok(l) => l,
            Err(e) => {
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        for _ in 0..20 {
            let x = gen::uniform_vector(&mut rng, n);
            let lx = l.matvec(&x).expect("square");
            let quad: f64 = (0..n).map(|s| phi[s] * x[s] * lx[s]).sum();
            let mut kernel = 0.0;
            for s in 0..n {
                for t in 0..n {
                    kernel += 0.5 * phi[s] * p[(s, t)] * (x[s] - x[t]).powi(2);
                }
            }
            let d = (quad - kernel).abs();
            c.at_least(1e-12 - d, || format!("n={n}: {quad:e} vs {kernel:e}"));
        }
    }
    c.finish()
}

/// Kernel pairing with `D̃` equals `fᵀΦLg`.
pub fn check_kernel_pairing(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("kernel_pairing");
    let mut rng = opts.rng(20);
    for _ in 0..opts.trials(20, 5) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let (p, phi) = (chain.kernel(), chain.stationary());
        let l = match laplacian_of(opts, &chain) {
            Ok(l) => l,
            Err(e) => {
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        for _ in 0..opts.trials(100, 20) {
            let f = gen::uniform_vector(&mut rng, n);
            let g = gen::uniform_vector(&mut rng, n);
            let kernel = tilde_laplacian_pairing(&f, &g, p, phi);
            let lg = l.matvec(&g).expect("square");
            let matrix: f64 = (0..n).map(|s| phi[s] * f[s] * lg[s]).sum();
            let d = (kernel - matrix).abs();
            c.at_least(1e-10 - d, || format!("n={n}: {kernel:e} vs {matrix:e}"));
        }
    }
    c.finish()
}

/// `λ₂` of the normalized random walk lies in `[h²/2, 2h]`.
pub fn check_cheeger(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("cheeger_sandwich");
    let mut rng = opts.rng(21);
    for _ in 0..opts.trials(50, 10) {
        c.trial();
        let w = gen::connected_graph(&mut rng, 12);
        let n = w.rows();
        let result = cheeger_constant(&w).and_then(|h| {
            let (p, phi) = random_walk(&w)?;
            let bundle = spectrum(&build_laplacian(&p, &phi)?, &phi)?;
            Ok((h, bundle.lambdas[1]))
        });
        match result {
            Ok((h, lambda2)) => {
                c.at_least(lambda2 - h * h / 2.0 + 1e-12, || format!("n={n}: λ₂={lambda2} < h²/2, h={h}"));
                c.at_least(2.0 * h - lambda2 + 1e-12, || format!("n={n}: λ₂={lambda2} > 2h, h={h}"));
            }
            Err(e) => c.error(format!("n={n}: {e}")),
        }
    }
    c.finish()
}

/// `‖v − v_k‖²_Φ ≤ ‖r̄‖²_Φ/(λ₂λ_{k+1})` for every `k < |S|`.
pub fn check_truncation(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("truncation_lemma");
    let mut rng = opts.rng(22);
    for _ in 0..opts.trials(30, 6) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 20);
        let n = chain.size();
        let phi = chain.stationary();
        let prepared = laplacian_of(opts, &chain)
            .and_then(|l| spectrum(&l, phi).map_err(|e| e.to_string()))
            .and_then(|b| chain.solve_poisson().map(|v| (b, v)).map_err(|e| e.to_string()));
        let (bundle, value) = match prepared {
            Ok(p) => p,
            Err(e) => {
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        let rbar = weighted_norm(&value.r_bar, phi).expect("lengths agree");
        for k in 1..n {
            let Ok(vk) = approx_value(&value.v, &bundle.basis(k), phi) else {
                c.error(format!("n={n} k={k}: projection failed"));
                continue;
            };
            let diff: Vec<f64> = value.v.iter().zip(&vk).map(|(a, b)| a - b).collect();
            let err = weighted_norm(&diff, phi).expect("lengths agree");
            let bound = rbar * rbar / (bundle.lambdas[1] * bundle.lambdas[k]);
            c.at_least(bound - err * err + 1e-12, || format!("n={n} k={k}: {:e} > {bound:e}", err * err));
        }
    }
    c.finish()
}

/// `‖v − v_k‖² ≤ (vᵀAv − v_kᵀAv_k)/λ_{k+1}` for synthetic PSD `A`.
pub fn check_quadratic_bound(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("quadratic_bound");
    let mut rng = opts.rng(23);
    for _ in 0..opts.trials(30, 6) {
        c.trial();
        let n = rng.random_range(3..=20);
        let psd = gen::psd_with_zero(&mut rng, n);
        let k = rng.random_range(1..n);
        let v = gen::uniform_vector(&mut rng, n);
        let basis = psd.vectors.leading_columns(k);
        let vk = basis.matvec(&basis.vecmat(&v).expect("rows")).expect("cols");
        let quad = |x: &[f64]| {
            let ax = psd.matrix.matvec(x).expect("square");
            x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
        };
        let resid: f64 = v.iter().zip(&vk).map(|(p, q)| (p - q).powi(2)).sum();
        let bound = (quad(&v) - quad(&vk)) / psd.lambdas[k];
        c.at_least(bound - resid + 1e-10, || format!("n={n} k={k}: {resid:e} > {bound:e}"));
    }
    c.finish()
}

fn perturbed_orthonormal(
    rng: &mut ChaCha8Rng,
    basis: &DenseMatrix,
    phi: &[f64],
    scale: f64,
) -> Option<DenseMatrix> {
    let noise = gen::uniform_matrix(rng, basis.rows(), basis.cols());
    let x = basis.add(&noise.scale(scale)).ok()?;
    phi_orthonormalize(&x, phi).ok()
}

/// Projector distance below `√(2ε/(λ_{k+1} − λ_k))` on synthetic PSD
/// matrices with `|S| ≤ 30`, `k ≤ 5`.
pub fn check_graph_drawing(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("graph_drawing_lemma");
    let mut rng = opts.rng(24);
    for _ in 0..opts.trials(200, 40) {
        let n = rng.random_range(3..=30);
        let psd = gen::psd_with_zero(&mut rng, n);
        let k = rng.random_range(1..=5usize.min(n - 1));
        let scale = [1e-3, 1e-1, 1.0][rng.random_range(0..3)];
        let gap = psd.lambdas[k] - psd.lambdas[k - 1];
        if !(gap > 1e-9) {
            continue;
        }
        c.trial();
        let ones = vec![1.0; n];
        let psi = psd.vectors.leading_columns(k);
        let Some(psi_tilde) = perturbed_orthonormal(&mut rng, &psi, &ones, scale) else {
            c.error(format!("n={n} k={k}: perturbed basis is rank deficient"));
            continue;
        };
        let eps = (opts.epsilon)(&psi_tilde, &psd.matrix, &ones, &psd.lambdas);
        match projector_distance(&psi, &psi_tilde, &ones) {
            Ok(dist) => {
                let bound = (2.0 * eps.max(0.0) / gap).sqrt();
                c.strictly(bound - dist, || format!("n={n} k={k}: {dist:e} !< {bound:e}"));
            }
            Err(e) => c.error(format!("n={n} k={k}: {e}")),
        }
    }
    c.finish()
}

/// On perturbed bases of random chains: `‖Π_Ψ v − Π_Ψ̂ v‖_Φ ≤ ‖v‖_Φ√(2ε/gap)`
/// and the combined bound on `‖v − Π_Ψ̂ v‖_Φ`.
pub fn check_estimation(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("estimation_lemma");
    let mut rng = opts.rng(25);
    for _ in 0..opts.trials(30, 6) {
        let chain = gen::ergodic_chain(&mut rng, 15);
        let n = chain.size();
        let phi = chain.stationary();
        let prepared = build_laplacian(chain.kernel(), phi)
            .and_then(|l| spectrum(&l, phi).map(|b| (l, b)))
            .map_err(|e| e.to_string())
            .and_then(|(l, b)| chain.solve_poisson().map(|v| (l, b, v)).map_err(|e| e.to_string()));
        let (l, bundle, value) = match prepared {
            Ok(p) => p,
            Err(e) => {
                c.trial();
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        let k = rng.random_range(1..n);
        let scale = [1e-3, 1e-2, 0.3][rng.random_range(0..3)];
        let gap = bundle.lambdas[k] - bundle.lambdas[k - 1];
        if !(gap > 1e-9) {
            continue;
        }
        c.trial();
        let psi = bundle.basis(k);
        let Some(psi_hat) = perturbed_orthonormal(&mut rng, &psi, phi, scale) else {
            c.error(format!("n={n} k={k}: perturbed basis is rank deficient"));
            continue;
        };
        let eps = (opts.epsilon)(&psi_hat, &l, phi, &bundle.lambdas).max(0.0);
        let (Ok(vk), Ok(vhat)) = (approx_value(&value.v, &psi, phi), approx_value(&value.v, &psi_hat, phi)) else {
            c.error(format!("n={n} k={k}: projection failed"));
            continue;
        };
        let norm_v = weighted_norm(&value.v, phi).expect("lengths agree");
        let est = norm_v * (2.0 * eps / gap).sqrt();
        let diff: Vec<f64> = vk.iter().zip(&vhat).map(|(a, b)| a - b).collect();
        let lhs = weighted_norm(&diff, phi).expect("lengths agree");
        c.at_least(est - lhs + 1e-12, || format!("n={n} k={k}: ‖v_k − v̂‖ = {lhs:e} > {est:e}"));
        let resid: Vec<f64> = value.v.iter().zip(&vhat).map(|(a, b)| a - b).collect();
        let err = weighted_norm(&resid, phi).expect("lengths agree");
        let trunc = truncation_bound(&value.r_bar, phi, bundle.lambdas[1], bundle.lambdas[k]).unwrap_or(f64::NAN);
        c.at_least(trunc + est - err + 1e-12, || format!("n={n} k={k}: err {err:e} > {:e}", trunc + est));
    }
    c.finish()
}

/// Analytic gradient against central differences, relative error ≤ 1e-6.
pub fn check_gradient(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("gdo_gradient");
    let mut rng = opts.rng(26);
    for _ in 0..opts.trials(20, 5) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 15);
        let n = chain.size();
        let k = rng.random_range(1..=4);
        let beta = rng.random_range(0.5..10.0);
        let x = DenseMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
        let l = match laplacian_of(opts, &chain) {
            Ok(l) => l,
            Err(e) => {
                c.error(format!("n={n}: {e}"));
                continue;
            }
        };
        let Ok(grad) = gdo_gradient(&x, &chain, &l, beta) else {
            c.error(format!("n={n} k={k}: gradient failed"));
            continue;
        };
        let h = 1e-5;
        let loss = |y: &DenseMatrix| gdo_loss(y, &chain, &l, beta).unwrap_or(f64::NAN);
        let mut fd = DenseMatrix::zeros(n, k);
        for s in 0..n {
            for j in 0..k {
                let mut plus = x.clone();
                plus[(s, j)] += h;
                let mut minus = x.clone();
                minus[(s, j)] -= h;
                fd[(s, j)] = (loss(&plus) - loss(&minus)) / (2.0 * h);
            }
        }
        let rel = fd.sub(&grad).expect("same shape").frobenius_norm() / grad.frobenius_norm().max(1e-12);
        c.at_least(1e-6 - rel, || format!("n={n} k={k}: relative error {rel:e}"));
    }
    c.finish()
}

pub const MONTE_CARLO_SAMPLES: usize = 100_000;

/// Closed-form loss within three standard errors of a `10⁵`-sample estimate.
pub fn check_monte_carlo(opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("gdo_loss_monte_carlo");
    let mut rng = opts.rng(27);
    for trial in 0..opts.trials(3, 1) {
        c.trial();
        let chain = gen::ergodic_chain(&mut rng, 15);
        let n = chain.size();
        let k = rng.random_range(1..=3);
        let beta = rng.random_range(0.5..5.0);
        let x = DenseMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let seed = opts.seed.wrapping_add(trial as u64);
        let result = laplacian_of(opts, &chain).and_then(|l| {
            let exact = gdo_loss(&x, &chain, &l, beta).map_err(|e| e.to_string())?;
            let (mean, se) =
                gdo_loss_monte_carlo(&x, &chain, beta, MONTE_CARLO_SAMPLES, seed).map_err(|e| e.to_string())?;
            Ok((exact, mean, se))
        });
        match result {
            Ok((exact, mean, se)) => {
                let d = (exact - mean).abs();
                c.at_least(3.0 * se - d, || format!("n={n} k={k}: {exact} vs {mean} ± {se}"));
            }
            Err(e) => c.error(format!("n={n}: {e}")),
        }
    }
    c.finish()
}

/// Pipeline output on `P = [[½, ½], [½, ½]]`, `r = (1, 0)`, `k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateOutcome {
    pub phi: Vec<f64>,
    pub rho: f64,
    pub v: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub err_exact: f64,
    pub trunc_bound: f64,
}

pub fn two_state_pipeline() -> Result<TwoStateOutcome, String> {
    let p = DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).map_err(|e| e.to_string())?;
    let chain = ErgodicChain::from_kernel(p, vec![1.0, 0.0]).map_err(|e| e.to_string())?;
    let value = chain.solve_poisson().map_err(|e| e.to_string())?;
    let l = build_laplacian(chain.kernel(), chain.stationary()).map_err(|e| e.to_string())?;
    let bundle = spectrum(&l, chain.stationary()).map_err(|e| e.to_string())?;
    let config = GdoConfig {
        k: 1,
        iterations: 300,
        ..GdoConfig::default()
    };
    let rep: Representation = learn_representation(&chain, &l, &bundle, &config).map_err(|e| e.to_string())?;
    let report = make_report(&chain, &bundle, &rep, &value, 1).map_err(|e| e.to_string())?;
    Ok(TwoStateOutcome {
        phi: chain.stationary().to_vec(),
        rho: value.rho,
        v: value.v.clone(),
        lambdas: bundle.lambdas.clone(),
        err_exact: report.err_exact_basis,
        trunc_bound: report.truncation_bound,
    })
}

/// Largest deviation of [`two_state_pipeline`] from the hand-computed values.
pub fn two_state_deviation(out: &TwoStateOutcome) -> f64 {
    let expected: [(&[f64], &[f64]); 6] = [
        (&out.phi, &[0.5, 0.5]),
        (std::slice::from_ref(&out.rho), &[0.5]),
        (&out.v, &[0.5, -0.5]),
        (&out.lambdas, &[0.0, 1.0]),
        (std::slice::from_ref(&out.err_exact), &[0.5]),
        (std::slice::from_ref(&out.trunc_bound), &[0.5]),
    ];
    expected
        .iter()
        .flat_map(|(got, want)| {
            let len_ok = got.len() == want.len();
            got.iter()
                .zip(want.iter())
                .map(|(a, b)| (a - b).abs())
                .chain((!len_ok).then_some(f64::INFINITY))
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

pub fn check_two_state(_opts: &VerifyOptions) -> PropertyResult {
    let mut c = Check::new("two_state_example");
    c.trial();
    match two_state_pipeline() {
        Ok(out) => {
            let d = two_state_deviation(&out);
            c.at_least(1e-12 - d, || format!("deviation {d:e}: {out:?}"));
        }
        Err(e) => c.error(e),
    }
    c.finish()
}

pub type CheckFn = fn(&VerifyOptions) -> PropertyResult;

pub const ALL_CHECKS: [CheckFn; 19] = [
    check_eigendecomposition,
    check_sin_theta,
    check_symmetric_inverse,
    check_uniform_opnorm,
    check_poisson,
    check_restricted_bijectivity,
    check_self_adjoint,
    check_psd,
    check_chung,
    check_dirichlet_form,
    check_kernel_pairing,
    check_cheeger,
    check_truncation,
    check_quadratic_bound,
    check_graph_drawing,
    check_estimation,
    check_gradient,
    check_monte_carlo,
    check_two_state,
];

pub fn run_all(opts: &VerifyOptions) -> Vec<PropertyResult> {
    ALL_CHECKS.iter().map(|check| check(opts)).collect()
}
