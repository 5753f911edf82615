//! Tabular Graph Drawing Objective.
//!
//! Features are an `|S| × k` matrix `X` optimized directly. The objective is
//!
//! ```text
//! E_{s∼φ, s'∼P(·|s)} Σᵢ (Xᵢ(s) − Xᵢ(s'))²  +  β Σᵢⱼ (E_{s∼φ}[Xᵢ(s)Xⱼ(s)] − δᵢⱼ)²
//! ```
//!
//! which in closed form is `2·tr(XᵀΦLX) + β‖XᵀΦX − I‖²_F`. Its minimizers span
//! the bottom-`k` eigenspace of `L`; [`phi_orthonormalize`] turns the raw
//! output into exactly `Φ`-orthonormal features and [`gdo_residual`] measures
//! the remaining optimality gap `ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ErgodicChain;
use crate::numlin::{
    cholesky_upper, orthonormality_defect, right_solve_upper, sym_eig, CsrMatrix, DenseMatrix,
    NumlinError, ORTHONORMAL_TOL,
};
use crate::spectral::SpectralBundle;

/// RNG stream used for the initial features.
pub const INIT_STREAM: u64 = 1;
/// RNG stream used for minibatch sampling in stochastic mode.
pub const SAMPLING_STREAM: u64 = 2;

/// Smallest admissible eigenvalue of `XᵀΦX` before orthonormalization.
pub const RANK_TOL: f64 = 1e-12;
/// Negative residuals down to this value are rounding noise and clamp to 0.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// A run diverges once the loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdoError {
    #[error("invalid GDO configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("GDO diverged at iteration {iteration}: loss {loss:e}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("features are rank deficient: smallest Gram eigenvalue {min_eigenvalue:e}")]
    RankDeficient { min_eigenvalue: f64 },
    #[error("features are not Φ-orthonormal: ‖ΨᵀΦΨ − I‖_F = {deviation:e}")]
    NotOrthonormal { deviation: f64 },
    #[error("residual {epsilon:e} is below the Courant–Fischer floor")]
    NegativeResidual { epsilon: f64 },
    #[error(transparent)]
    Numlin(#[from] NumlinError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdoMode {
    FullGradient,
    Stochastic { batch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdoConfig {
    pub k: usize,
    pub beta: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
    pub mode: GdoMode,
}

impl Default for GdoConfig {
    fn default() -> Self {
        Self {
            k: 20,
            beta: 5.0,
            step_size: 0.05,
            iterations: 300,
            seed: 0,
            mode: GdoMode::FullGradient,
        }
    }
}

impl GdoConfig {
    pub fn validate(&self, states: usize) -> Result<(), GdoError> {
        if self.k == 0 || self.k > states {
            return Err(GdoError::InvalidConfig(format!(
                "k = {} must lie in 1..={states}",
                self.k
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(GdoError::InvalidConfig(format!("beta = {} must be positive", self.beta)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(GdoError::InvalidConfig(format!(
                "step_size = {} must be positive",
                self.step_size
            )));
        }
        if let GdoMode::Stochastic { batch: 0 } = self.mode {
            return Err(GdoError::InvalidConfig("batch must be positive".into()));
        }
        Ok(())
    }
}

/// Raw optimizer output.
#[derive(Debug, Clone)]
pub struct GdoRun {
    pub x: DenseMatrix,
    /// `(iteration, loss)` with iteration 0 the initial point.
    pub trace: Vec<(usize, f64)>,
}

/// `Φ`-orthonormal learned features and their residual.
#[derive(Debug, Clone)]
pub struct Representation {
    pub psi_hat: DenseMatrix,
    pub k: usize,
    pub epsilon: f64,
    pub optimizer_trace: Vec<(usize, f64)>,
}

fn check_shape(x: &DenseMatrix, states: usize) -> Result<(), GdoError> {
    if x.rows() != states || x.cols() == 0 {
        return Err(GdoError::DimensionMismatch {
            expected: (states, x.cols().max(1)),
            found: (x.rows(), x.cols()),
        });
    }
    Ok(())
}

/// `XᵀΦX`, filled symmetrically.
pub fn phi_gram(x: &DenseMatrix, phi: &[f64]) -> DenseMatrix {
    let k = x.cols();
    let mut g = DenseMatrix::zeros(k, k);
    for (s, &w) in phi.iter().enumerate() {
        let row = x.row(s);
        for i in 0..k {
            let a = w * row[i];
            let grow = g.row_mut(i);
            for j in i..k {
                grow[j] += a * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

fn penalty(g: &DenseMatrix) -> f64 {
    let k = g.rows();
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            sum += d * d;
        }
    }
    sum
}

/// `Σ_s φ(s) ⟨A_s, B_s⟩` over rows.
fn phi_inner(a: &DenseMatrix, b: &DenseMatrix, phi: &[f64]) -> f64 {
    phi.iter()
        .enumerate()
        .map(|(s, w)| w * a.row(s).iter().zip(b.row(s)).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

/// Loss and the pieces needed for its gradient at one point.
struct Eval {
    loss: f64,
    lx: DenseMatrix,
    gram: DenseMatrix,
}

struct Objective<'a> {
    l: CsrMatrix,
    phi: &'a [f64],
    beta: f64,
}

impl Objective<'_> {
    fn eval(&self, x: &DenseMatrix) -> Eval {
        let lx = self.l.mul_dense(x);
        let gram = phi_gram(x, self.phi);
        let loss = 2.0 * phi_inner(x, &lx, self.phi) + self.beta * penalty(&gram);
        Eval { loss, lx, gram }
    }

    /// `Φ⁻¹∇ = 4LX + 4βX(G − I)`.
    fn natural_gradient(&self, x: &DenseMatrix, e: &Eval) -> DenseMatrix {
        let mut m = e.gram.clone();
        for i in 0..m.rows() {
            m[(i, i)] -= 1.0;
        }
        let mut out = x.matmul(&m).expect("k×k right factor").scale(4.0 * self.beta);
        for (o, l) in out.as_mut_slice().iter_mut().zip(e.lx.as_slice()) {
            *o += 4.0 * l;
        }
        out
    }
}

/// Closed-form objective `2·tr(XᵀΦLX) + β‖XᵀΦX − I‖²_F`.
pub fn gdo_loss(x: &DenseMatrix, chain: &ErgodicChain, l: &DenseMatrix, beta: f64) -> Result<f64, GdoError> {
    check_shape(x, chain.size())?;
    if l.rows() != chain.size() || !l.is_square() {
        return Err(GdoError::DimensionMismatch {
            expected: (chain.size(), chain.size()),
            found: (l.rows(), l.cols()),
        });
    }
    let obj = Objective {
        l: CsrMatrix::from_dense(l),
        phi: chain.stationary(),
        beta,
    };
    Ok(obj.eval(x).loss)
}

/// Euclidean gradient `4ΦLX + 4βΦX(XᵀΦX − I)`.
pub fn gdo_gradient(
    x: &DenseMatrix,
    chain: &ErgodicChain,
    l: &DenseMatrix,
    beta: f64,
) -> Result<DenseMatrix, GdoError> {
    check_shape(x, chain.size())?;
    let obj = Objective {
        l: CsrMatrix::from_dense(l),
        phi: chain.stationary(),
        beta,
    };
    let e = obj.eval(x);
    Ok(obj.natural_gradient(x, &e).scale_rows(chain.stationary()))
}

/// Categorical sampler over a fixed probability vector.
struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self { cdf }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

struct PairSampler {
    states: Categorical,
    rows: Vec<Categorical>,
}

impl PairSampler {
    fn new(chain: &ErgodicChain) -> Self {
        let p = chain.kernel();
        Self {
            states: Categorical::new(chain.stationary()),
            rows: (0..p.rows()).map(|s| Categorical::new(p.row(s))).collect(),
        }
    }

    fn state(&self, rng: &mut impl Rng) -> usize {
        self.states.sample(rng)
    }

    fn transition(&self, rng: &mut impl Rng) -> (usize, usize) {
        let s = self.states.sample(rng);
        (s, self.rows[s].sample(rng))
    }
}

/// Monte-Carlo estimate of the expectation form of the objective.
///
/// Each sample draws `(s, s')` from `φ ⊗ P` for the smoothness term and two
/// independent states from `φ` for the penalty, whose product is an unbiased
/// estimate of the squared Gram deviation. Returns `(mean, standard error)`.
pub fn gdo_loss_monte_carlo(
    x: &DenseMatrix,
    chain: &ErgodicChain,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), GdoError> {
    check_shape(x, chain.size())?;
    if samples < 2 {
        return Err(GdoError::InvalidConfig("need at least two samples".into()));
    }
    let sampler = PairSampler::new(chain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = x.cols();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let (s, t) = sampler.transition(&mut rng);
        let smooth: f64 = x.row(s).iter().zip(x.row(t)).map(|(a, b)| (a - b).powi(2)).sum();
        let (a, b) = (x.row(sampler.state(&mut rng)), x.row(sampler.state(&mut rng)));
        let mut reg = 0.0;
        for i in 0..k {
            for j in 0..k {
                let delta = if i == j { 1.0 } else { 0.0 };
                reg += (a[i] * a[j] - delta) * (b[i] * b[j] - delta);
            }
        }
        let value = smooth + beta * reg;
        sum += value;
        sum_sq += value * value;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Seeded standard-normal features scaled by `1/√|S|`.
pub fn initial_features(states: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let scale = 1.0 / (states as f64).sqrt();
    DenseMatrix::from_fn(states, k, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
}

/// Runs `config.iterations` optimizer steps from [`initial_features`].
///
/// Steps follow `−Φ⁻¹∇`, the gradient in the `Φ`-weighted geometry the
/// objective is defined in. Full-gradient mode backtracks from `step_size`
/// until the Armijo condition holds, so the traced loss never increases.
/// Stochastic mode takes fixed steps on minibatch estimates.
pub fn optimize_gdo(chain: &ErgodicChain, l: &DenseMatrix, config: &GdoConfig) -> Result<GdoRun, GdoError> {
    let n = chain.size();
    config.validate(n)?;
    if l.rows() != n || !l.is_square() {
        return Err(GdoError::DimensionMismatch {
            expected: (n, n),
            found: (l.rows(), l.cols()),
        });
    }
    let obj = Objective {
        l: CsrMatrix::from_dense(l),
        phi: chain.stationary(),
        beta: config.beta,
    };
    let mut x = initial_features(n, config.k, config.seed);
    let mut current = obj.eval(&x);
    let initial = current.loss;
    let limit = DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    trace.push((0, initial));

    match config.mode {
        GdoMode::FullGradient => {
            let mut stalled = false;
            for it in 1..=config.iterations {
                if !stalled {
                    let dir = obj.natural_gradient(&x, &current);
                    let slope = phi_inner(&dir, &dir, obj.phi);
                    let mut t = config.step_size;
                    stalled = true;
                    if ARMIJO_C * t * slope <= f64::EPSILON * current.loss.abs() {
                        // Predicted decrease is below rounding.
                        trace.push((it, current.loss));
                        continue;
                    }
                    for _ in 0..MAX_BACKTRACKS {
                        let trial = axpy(&x, -t, &dir);
                        let e = obj.eval(&trial);
                        if e.loss.is_finite() && e.loss <= current.loss - ARMIJO_C * t * slope {
                            x = trial;
                            current = e;
                            stalled = false;
                            break;
                        }
                        t *= 0.5;
                    }
                }
                // Once no step size decreases the loss the iterate is
                // stationary to working precision and stays put.
                trace.push((it, current.loss));
            }
        }
        GdoMode::Stochastic { batch } => {
            let sampler = PairSampler::new(chain);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(SAMPLING_STREAM);
            for it in 1..=config.iterations {
                let dir = stochastic_direction(&x, &sampler, obj.phi, config.beta, batch, &mut rng);
                x = axpy(&x, -config.step_size, &dir);
                current = obj.eval(&x);
                if !current.loss.is_finite() || current.loss > limit {
                    return Err(GdoError::Diverged {
                        iteration: it,
                        loss: current.loss,
                    });
                }
                trace.push((it, current.loss));
            }
        }
    }
    if !current.loss.is_finite() || current.loss > limit {
        return Err(GdoError::Diverged {
            iteration: config.iterations,
            loss: current.loss,
        });
    }
    Ok(GdoRun { x, trace })
}

fn axpy(x: &DenseMatrix, a: f64, d: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for (o, v) in out.as_mut_slice().iter_mut().zip(d.as_slice()) {
        *o += a * v;
    }
    out
}

/// Unbiased minibatch estimate of `Φ⁻¹∇`.
fn stochastic_direction(
    x: &DenseMatrix,
    sampler: &PairSampler,
    phi: &[f64],
    beta: f64,
    batch: usize,
    rng: &mut impl Rng,
) -> DenseMatrix {
    let k = x.cols();
    let mut dir = DenseMatrix::zeros(x.rows(), k);
    let weight = 1.0 / batch as f64;
    for _ in 0..batch {
        // Smoothness: ∂/∂X of (X(s) − X(s'))² spread over both rows.
        let (s, t) = sampler.transition(rng);
        for i in 0..k {
            let d = 2.0 * (x[(s, i)] - x[(t, i)]) * weight;
            dir[(s, i)] += d / phi[s];
            dir[(t, i)] -= d / phi[t];
        }
    }
    let mut gram = DenseMatrix::zeros(k, k);
    for _ in 0..batch {
        let row = x.row(sampler.state(rng));
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] += row[i] * row[j] * weight;
            }
        }
    }
    for i in 0..k {
        gram[(i, i)] -= 1.0;
    }
    for _ in 0..batch {
        let s = sampler.state(rng);
        let g = x.row(s).to_vec();
        for j in 0..k {
            let v: f64 = (0..k).map(|i| g[i] * gram[(i, j)]).sum();
            dir[(s, j)] += 4.0 * beta * v * weight / phi[s];
        }
    }
    dir
}

/// `Ψ̂ = X R⁻¹` with `RᵀR = XᵀΦX`, so that `Ψ̂ᵀΦΨ̂ = I`.
///
/// A second pass is applied when the first leaves a Gram defect above
/// `1e-13`, which happens for badly scaled inputs.
pub fn phi_orthonormalize(x: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, GdoError> {
    check_shape(x, phi.len())?;
    let gram = phi_gram(x, phi);
    let min_eigenvalue = sym_eig(&gram, f64::INFINITY)?.values[0];
    if !(min_eigenvalue > RANK_TOL) {
        return Err(GdoError::RankDeficient { min_eigenvalue });
    }
    let mut psi = orthonormalize_once(x, phi)?;
    if phi_orthonormality_defect(&psi, phi) > 1e-13 {
        psi = orthonormalize_once(&psi, phi)?;
    }
    Ok(psi)
}

fn orthonormalize_once(x: &DenseMatrix, phi: &[f64]) -> Result<DenseMatrix, GdoError> {
    let r = cholesky_upper(&phi_gram(x, phi)).map_err(|e| match e {
        NumlinError::NotPositiveDefinite { pivot, .. } => GdoError::RankDeficient { min_eigenvalue: pivot },
        other => other.into(),
    })?;
    Ok(right_solve_upper(x, &r))
}

/// `‖XᵀΦX − I‖_F`.
pub fn phi_orthonormality_defect(x: &DenseMatrix, phi: &[f64]) -> f64 {
    let sq: Vec<f64> = phi.iter().map(|p| p.sqrt()).collect();
    orthonormality_defect(&x.scale_rows(&sq))
}

/// `ε = tr(Ψ̂ᵀΦLΨ̂) − Σᵢ₌₁..k λᵢ`, with values in `[−1e-9, 0)` clamped to 0.
pub fn gdo_residual(
    psi_hat: &DenseMatrix,
    l: &DenseMatrix,
    phi: &[f64],
    lambdas: &[f64],
) -> Result<f64, GdoError> {
    check_shape(psi_hat, phi.len())?;
    let k = psi_hat.cols();
    if lambdas.len() < k {
        return Err(GdoError::DimensionMismatch {
            expected: (k, 1),
            found: (lambdas.len(), 1),
        });
    }
    let deviation = phi_orthonormality_defect(psi_hat, phi);
    if deviation > ORTHONORMAL_TOL {
        return Err(GdoError::NotOrthonormal { deviation });
    }
    let lx = l.matmul(psi_hat)?;
    let energy = phi_inner(psi_hat, &lx, phi);
    let epsilon = energy - lambdas[..k].iter().sum::<f64>();
    if epsilon < -RESIDUAL_TOL {
        return Err(GdoError::NegativeResidual { epsilon });
    }
    Ok(epsilon.max(0.0))
}

/// Optimize, orthonormalize and measure `ε` in one go.
pub fn learn_representation(
    chain: &ErgodicChain,
    l: &DenseMatrix,
    bundle: &SpectralBundle,
    config: &GdoConfig,
) -> Result<Representation, GdoError> {
    let run = optimize_gdo(chain, l, config)?;
    let psi_hat = phi_orthonormalize(&run.x, chain.stationary())?;
    let epsilon = gdo_residual(&psi_hat, l, chain.stationary(), &bundle.lambdas)?;
    Ok(Representation {
        psi_hat,
        k: config.k,
        epsilon,
        optimizer_trace: run.trace,
    })
}
