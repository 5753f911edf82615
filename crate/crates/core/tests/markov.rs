use laprep_core::bounds::{
    approximation_error, make_report, matrix_laplacian_pairing, projector_distance, tilde_inner,
    tilde_laplacian_pairing, truncation_bound,
};
use laprep_core::chain::{
    check_ergodic, restricted_min_singular_value, solve_poisson, solve_poisson_deflated,
    zero_mean_basis, ErgodicChain,
};
use laprep_core::gdo::{gdo_gradient, gdo_loss, gdo_residual, phi_orthonormalize, Representation};
use laprep_core::gridworld::{build_grid, carve_walls, to_chain, Policy};
use laprep_core::numlin::{norm2, sym_eig, weighted_norm, DenseMatrix, SYMMETRY_TOL};
use laprep_core::spectral::{
    build_laplacian, chung_laplacian, cheeger_constant, random_walk, spectrum, symmetrize,
};
use proptest::prelude::*;

/// Random ergodic kernel: self-loops and a directed ring keep it irreducible
/// and aperiodic, the remaining entries are sparse and non-reversible.
fn ergodic_kernel(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (2..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n * n),
            prop::collection::vec(prop::bool::weighted(0.4), n * n),
        )
            .prop_map(move |(w, keep)| {
                let mut p = DenseMatrix::from_fn(n, n, |i, j| {
                    let forced = i == j || j == (i + 1) % n;
                    if forced {
                        0.05 + w[i * n + j]
                    } else if keep[i * n + j] {
                        w[i * n + j]
                    } else {
                        0.0
                    }
                });
                for i in 0..n {
                    let s: f64 = p.row(i).iter().sum();
                    p.row_mut(i).iter_mut().for_each(|x| *x /= s);
                }
                p
            })
    })
}

fn chain_with_rewards(max: usize) -> impl Strategy<Value = ErgodicChain> {
    ergodic_kernel(max).prop_flat_map(|p| {
        let n = p.rows();
        prop::collection::vec(-2.0f64..2.0, n).prop_map(move |r| ErgodicChain::from_kernel(p.clone(), r).unwrap())
    })
}

fn vectors(n: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn poisson_routes_agree(chain in chain_with_rewards(30)) {
        let p = chain.kernel();
        let a = solve_poisson(p, chain.rewards()).unwrap();
        let b = solve_poisson_deflated(p, chain.rewards()).unwrap();
        let diff = a.v.iter().zip(&b.v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9, "{}", diff);
        prop_assert!(a.poisson_residual(p) <= 1e-8);
        prop_assert!(a.normalization_defect() <= 1e-10);
        prop_assert!((a.rho - b.rho).abs() <= 1e-12);
    }

    #[test]
    fn restricted_map_is_bijective(p in ergodic_kernel(30)) {
        prop_assert!(check_ergodic(&p, None).unwrap());
        let phi = laprep_core::chain::stationary_distribution(&p, 1e-12).unwrap();
        prop_assert!(restricted_min_singular_value(&p, &phi) > 1e-10);
        let basis = zero_mean_basis(&phi);
        prop_assert_eq!(basis.cols(), p.rows() - 1);
    }

    #[test]
    fn laplacian_structure(chain in chain_with_rewards(20)) {
        let phi = chain.stationary();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        let phi_l = l.scale_rows(phi);
        prop_assert!(phi_l.sub(&phi_l.transpose()).unwrap().frobenius_norm() <= 1e-12);
        let sym = symmetrize(&l, phi).unwrap();
        let chung = chung_laplacian(chain.kernel(), phi).unwrap();
        prop_assert!(sym.sub(&chung).unwrap().max_abs() <= 1e-12);
        let bundle = spectrum(&l, phi).unwrap();
        prop_assert!(bundle.lambdas[0] >= -1e-9 && bundle.lambdas[0].abs() <= 1e-9);
        prop_assert!(bundle.lambdas.iter().all(|&x| x >= -1e-9));
        let u1 = bundle.u.column(0);
        prop_assert!(u1.iter().all(|x| (x - u1[0]).abs() <= 1e-8));
        prop_assert!(bundle.lambdas[1] > 1e-9);
    }

    #[test]
    fn dirichlet_form_positive_off_constants(chain in chain_with_rewards(20), xs in vectors(20, 100)) {
        let phi = chain.stationary();
        let n = chain.size();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        for x in xs {
            let mut x = x[..n].to_vec();
            let mean: f64 = x.iter().zip(phi).map(|(a, b)| a * b).sum();
            x.iter_mut().for_each(|v| *v -= mean);
            prop_assume!(norm2(&x) > 1e-6);
            prop_assert!(matrix_laplacian_pairing(&x, &x, &l, phi) > 0.0);
        }
    }

    #[test]
    fn kernel_form_matches_matrix_form(chain in chain_with_rewards(20), fs in vectors(20, 100), gs in vectors(20, 100)) {
        let phi = chain.stationary();
        let n = chain.size();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        for (f, g) in fs.iter().zip(&gs) {
            let (f, g) = (&f[..n], &g[..n]);
            let kernel = tilde_laplacian_pairing(f, g, chain.kernel(), phi);
            prop_assert!((kernel - matrix_laplacian_pairing(f, g, &l, phi)).abs() <= 1e-10);
            let plain: f64 = (0..n).map(|s| f[s] * phi[s] * g[s]).sum();
            prop_assert!((tilde_inner(f, g, phi) - plain).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_lemma_every_k(chain in chain_with_rewards(20)) {
        let phi = chain.stationary();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        let bundle = spectrum(&l, phi).unwrap();
        let value = chain.solve_poisson().unwrap();
        let rbar = weighted_norm(&value.r_bar, phi).unwrap();
        for k in 1..chain.size() {
            let err = approximation_error(&value.v, &bundle.basis(k), phi).unwrap();
            let bound_sq = rbar * rbar / (bundle.lambdas[1] * bundle.lambdas[k]);
            prop_assert!(err * err <= bound_sq + 1e-12, "k={} {} > {}", k, err * err, bound_sq);
            let tb = truncation_bound(&value.r_bar, phi, bundle.lambdas[1], bundle.lambdas[k]).unwrap();
            prop_assert!((tb * tb - bound_sq).abs() <= 1e-12 * bound_sq.max(1.0));
        }
    }

    #[test]
    fn full_bound_on_perturbed_features(
        chain in chain_with_rewards(15),
        noise in prop::collection::vec(-1.0f64..1.0, 15 * 15),
        scale in prop::sample::select(vec![1e-4, 1e-2, 0.3, 3.0]),
        k_frac in 0.0f64..1.0,
    ) {
        let phi = chain.stationary();
        let n = chain.size();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        let bundle = spectrum(&l, phi).unwrap();
        let value = chain.solve_poisson().unwrap();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let x = DenseMatrix::from_fn(n, k, |s, j| bundle.u[(s, j)] + scale * noise[s * 15 + j]);
        let psi_hat = phi_orthonormalize(&x, phi).unwrap();
        let epsilon = gdo_residual(&psi_hat, &l, phi, &bundle.lambdas).unwrap();
        prop_assert!(epsilon >= 0.0);
        let rep = Representation { psi_hat, k, epsilon, optimizer_trace: Vec::new() };
        // make_report re-checks every inequality and errors on a violation.
        let report = make_report(&chain, &bundle, &rep, &value, k).unwrap();
        prop_assert!(report.err_learned_basis + 1e-12 >= report.err_exact_basis - report.projector_distance * report.value_norm);
    }

    #[test]
    fn graph_drawing_lemma(
        n in 3usize..=30,
        spectrum_seed in prop::collection::vec(0.01f64..2.0, 30),
        rot in prop::collection::vec(-1.0f64..1.0, 900),
        noise in prop::collection::vec(-1.0f64..1.0, 150),
        k_frac in 0.0f64..1.0,
        scale in prop::sample::select(vec![1e-3, 1e-1, 1.0]),
    ) {
        let mut lambdas: Vec<f64> = spectrum_seed[..n].to_vec();
        lambdas[0] = 0.0;
        lambdas.sort_by(f64::total_cmp);
        let q = sym_eig(&DenseMatrix::new(n, n, rot[..n * n].to_vec()).unwrap().symmetric_part(), SYMMETRY_TOL)
            .unwrap()
            .vectors;
        let a = q.scale_cols(&lambdas).matmul(&q.transpose()).unwrap().symmetric_part();
        let k = (1 + ((n - 1) as f64 * k_frac) as usize).min(5).min(n - 1);
        let gap = lambdas[k] - lambdas[k - 1];
        prop_assume!(gap > 1e-9);
        let ones = vec![1.0; n];
        let psi = q.leading_columns(k);
        let perturbed = DenseMatrix::from_fn(n, k, |s, j| psi[(s, j)] + scale * noise[(s * 5 + j) % 150]);
        let psi_tilde = phi_orthonormalize(&perturbed, &ones).unwrap();
        let trace = psi_tilde.tr_matmul(&a.matmul(&psi_tilde).unwrap()).unwrap().trace();
        let eps = (trace - lambdas[..k].iter().sum::<f64>()).max(0.0);
        let dist = projector_distance(&psi, &psi_tilde, &ones).unwrap();
        prop_assert!(dist < (2.0 * eps / gap).sqrt(), "{} !< {}", dist, (2.0 * eps / gap).sqrt());
    }

    #[test]
    fn quadratic_bound(
        n in 3usize..=20,
        spectrum_seed in prop::collection::vec(0.0f64..2.0, 20),
        rot in prop::collection::vec(-1.0f64..1.0, 400),
        v in prop::collection::vec(-1.0f64..1.0, 20),
        k_frac in 0.0f64..1.0,
    ) {
        let mut lambdas = spectrum_seed[..n].to_vec();
        lambdas.sort_by(f64::total_cmp);
        let q = sym_eig(&DenseMatrix::new(n, n, rot[..n * n].to_vec()).unwrap().symmetric_part(), SYMMETRY_TOL)
            .unwrap()
            .vectors;
        let a = q.scale_cols(&lambdas).matmul(&q.transpose()).unwrap().symmetric_part();
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        prop_assume!(lambdas[k] > 1e-6);
        let v = &v[..n];
        let basis = q.leading_columns(k);
        let vk = basis.matvec(&basis.vecmat(v).unwrap()).unwrap();
        let quad = |x: &[f64]| x.iter().zip(a.matvec(x).unwrap()).map(|(p, q)| p * q).sum::<f64>();
        let resid: f64 = v.iter().zip(&vk).map(|(p, q)| (p - q).powi(2)).sum();
        prop_assert!(resid <= (quad(v) - quad(&vk)) / lambdas[k] + 1e-10);
    }

    #[test]
    fn analytic_gradient_matches_differences(
        chain in chain_with_rewards(15),
        raw in prop::collection::vec(-2.0f64..2.0, 60),
        k in 1usize..=4,
        beta in 0.5f64..10.0,
    ) {
        let n = chain.size();
        let l = build_laplacian(chain.kernel(), chain.stationary()).unwrap();
        let x = DenseMatrix::from_fn(n, k, |s, j| raw[(s * 4 + j) % 60]);
        let grad = gdo_gradient(&x, &chain, &l, beta).unwrap();
        let h = 1e-5;
        let mut fd = DenseMatrix::zeros(n, k);
        for s in 0..n {
            for j in 0..k {
                let mut plus = x.clone();
                plus[(s, j)] += h;
                let mut minus = x.clone();
                minus[(s, j)] -= h;
                fd[(s, j)] = (gdo_loss(&plus, &chain, &l, beta).unwrap() - gdo_loss(&minus, &chain, &l, beta).unwrap()) / (2.0 * h);
            }
        }
        let rel = fd.sub(&grad).unwrap().frobenius_norm() / grad.frobenius_norm().max(1e-12);
        prop_assert!(rel <= 1e-6, "{}", rel);
    }

    #[test]
    fn residual_is_nonnegative(chain in chain_with_rewards(15), raw in prop::collection::vec(-1.0f64..1.0, 225), k_frac in 0.0f64..1.0) {
        let n = chain.size();
        let phi = chain.stationary();
        let l = build_laplacian(chain.kernel(), phi).unwrap();
        let bundle = spectrum(&l, phi).unwrap();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let x = DenseMatrix::from_fn(n, k, |s, j| raw[s * 15 + j]);
        if let Ok(psi) = phi_orthonormalize(&x, phi) {
            prop_assert!(gdo_residual(&psi, &l, phi, &bundle.lambdas).unwrap() >= 0.0);
        }
    }
}

fn connected_graph(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (2..=max).prop_flat_map(|n| {
        (prop::collection::vec(0..n, n), prop::collection::vec(prop::bool::weighted(0.3), n * n)).prop_map(
            move |(parents, extra)| {
                let mut w = DenseMatrix::zeros(n, n);
                // Random tree: vertex i attaches to some earlier vertex.
                for i in 1..n {
                    let j = parents[i] % i;
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        if extra[i * n + j] {
                            w[(i, j)] = 1.0;
                            w[(j, i)] = 1.0;
                        }
                    }
                }
                w
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cheeger_sandwich(w in connected_graph(12)) {
        let h = cheeger_constant(&w).unwrap();
        let (p, phi) = random_walk(&w).unwrap();
        let bundle = spectrum(&build_laplacian(&p, &phi).unwrap(), &phi).unwrap();
        let lambda2 = bundle.lambdas[1];
        prop_assert!(h * h / 2.0 <= lambda2 + 1e-12, "h={} λ₂={}", h, lambda2);
        prop_assert!(lambda2 <= 2.0 * h + 1e-12, "h={} λ₂={}", h, lambda2);
    }

    #[test]
    fn disconnected_components_show_as_zero_modes(a in connected_graph(6), b in connected_graph(6)) {
        let (na, nb) = (a.rows(), b.rows());
        let w = DenseMatrix::from_fn(na + nb, na + nb, |i, j| match (i < na, j < na) {
            (true, true) => a[(i, j)],
            (false, false) => b[(i - na, j - na)],
            _ => 0.0,
        });
        let (p, _) = random_walk(&w).unwrap();
        // Any mixture of the component walks is stationary; use degree weights.
        let d = w.row_sums();
        let total: f64 = d.iter().sum();
        let phi: Vec<f64> = d.iter().map(|x| x / total).collect();
        let bundle = spectrum(&build_laplacian(&p, &phi).unwrap(), &phi).unwrap();
        prop_assert_eq!(bundle.lambdas.iter().filter(|x| x.abs() < 1e-9).count(), 2);
    }

    #[test]
    fn grid_cells_build_ergodic_chains(rows in 2usize..=6, cols in 2usize..=6, seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let grid = build_grid(rows, cols).unwrap();
        let max = grid.open_edges().len() + 1 - rows * cols;
        let w = (max as f64 * frac) as usize;
        let env = carve_walls(&grid, w, seed).unwrap();
        prop_assert_eq!(&env, &carve_walls(&grid, w, seed).unwrap());
        if w < max {
            let next = carve_walls(&grid, w + 1, seed).unwrap();
            prop_assert!(env.removed_edges().is_subset(next.removed_edges()));
        }
        let chain = to_chain(&env, &Policy::Uniform).unwrap();
        for s in 0..chain.size() {
            prop_assert!((chain.kernel().row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(check_ergodic(chain.kernel(), None).unwrap());
        let value = chain.solve_poisson().unwrap();
        prop_assert!(value.poisson_residual(chain.kernel()) <= 1e-8);
        prop_assert!(value.normalization_defect() <= 1e-10);
    }
}
