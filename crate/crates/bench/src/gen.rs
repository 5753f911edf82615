//! Seeded random instances for the verification suite.

use laprep_core::chain::ErgodicChain;
use laprep_core::numlin::{sym_eig, DenseMatrix, SYMMETRY_TOL};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ergodic, generally non-reversible kernel on `n` states. Self-loops and a
/// directed ring guarantee irreducibility and aperiodicity.
pub fn ergodic_kernel(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut p = DenseMatrix::from_fn(n, n, |i, j| {
        let w: f64 = rng.random();
        if i == j || j == (i + 1) % n {
            0.05 + w
        } else if rng.random_bool(0.4) {
            w
        } else {
            0.0
        }
    });
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        p.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    p
}

/// Random chain with `2..=max_states` states and rewards in `[-2, 2)`.
pub fn ergodic_chain(rng: &mut ChaCha8Rng, max_states: usize) -> ErgodicChain {
    let n = rng.random_range(2..=max_states);
    let p = ergodic_kernel(rng, n);
    let r = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    ErgodicChain::from_kernel(p, r).expect("generated kernel is ergodic")
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Unit-weight connected undirected graph on `2..=max_nodes` vertices: a
/// random tree plus independent extra edges.
pub fn connected_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> DenseMatrix {
    let n = rng.random_range(2..=max_nodes);
    let mut w = DenseMatrix::zeros(n, n);
    for i in 1..n {
        let j = rng.random_range(0..i);
        w[(i, j)] = 1.0;
        w[(j, i)] = 1.0;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.3) {
                w[(i, j)] = 1.0;
                w[(j, i)] = 1.0;
            }
        }
    }
    w
}

/// Orthogonal `n × n` matrix from the eigenvectors of a random symmetric one.
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let a = uniform_matrix(rng, n, n).symmetric_part();
    sym_eig(&a, SYMMETRY_TOL).expect("symmetric input").vectors
}

/// Orthonormal `n × k` matrix.
pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DenseMatrix {
    orthogonal(rng, n).leading_columns(k)
}

/// Symmetric PSD matrix `Q diag(λ) Qᵀ` with `λ₁ = 0`, returned with its
/// ascending eigenvalues and eigenvectors.
pub struct SyntheticPsd {
    pub matrix: DenseMatrix,
    pub lambdas: Vec<f64>,
    pub vectors: DenseMatrix,
}

pub fn psd_with_zero(rng: &mut ChaCha8Rng, n: usize) -> SyntheticPsd {
    let mut lambdas: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { rng.random_range(0.01..2.0) }).collect();
    lambdas.sort_by(f64::total_cmp);
    let q = orthogonal(rng, n);
    let matrix = q.scale_cols(&lambdas).matmul(&q.transpose()).expect("square").symmetric_part();
    SyntheticPsd {
        matrix,
        lambdas,
        vectors: q,
    }
}
