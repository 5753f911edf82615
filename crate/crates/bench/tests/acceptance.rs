//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Runs the full 15×15 wall sweep (250 cells), so expect a couple of
//! minutes on a single core.

use std::process::ExitCode;
use std::time::Instant;

use laprep_bench::config::SweepConfig;
use laprep_bench::stats::{group_means, spearman};
use laprep_bench::sweep::run_wall_sweep;
use laprep_bench::verify::{
    check_cheeger, check_gradient, check_graph_drawing, check_kernel_pairing, check_monte_carlo, check_poisson,
    check_sin_theta, two_state_deviation, two_state_pipeline, PropertyResult, VerifyOptions,
};
use laprep_core::bounds::{approximation_error, Bound};
use laprep_core::chain::{ErgodicChain, ValueSolution};
use laprep_core::gridworld::{build_grid, carve_walls, to_chain, Policy};
use laprep_core::numlin::weighted_norm;
use laprep_core::spectral::{build_laplacian, spectrum, SpectralBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 15;

struct Cell {
    w: usize,
    seed: u64,
    chain: ErgodicChain,
    bundle: SpectralBundle,
    value: ValueSolution,
}

fn build_cell(w: usize, seed: u64) -> Result<Cell, String> {
    let grid = build_grid(SIDE, SIDE).map_err(|e| e.to_string())?;
    let env = carve_walls(&grid, w, seed).map_err(|e| e.to_string())?;
    let chain = to_chain(&env, &Policy::Uniform).map_err(|e| e.to_string())?;
    let l = build_laplacian(chain.kernel(), chain.stationary()).map_err(|e| e.to_string())?;
    let bundle = spectrum(&l, chain.stationary()).map_err(|e| e.to_string())?;
    let value = chain.solve_poisson().map_err(|e| e.to_string())?;
    Ok(Cell {
        w,
        seed,
        chain,
        bundle,
        value,
    })
}

/// Distinct `(w, seed)` cells drawn from the sweep grid.
fn random_cells(count: usize, stream: u64) -> Vec<(usize, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    rng.set_stream(stream);
    let mut cells = Vec::new();
    while cells.len() < count {
        let cell = (rng.random_range(1..=50), rng.random_range(0..5));
        if !cells.contains(&cell) {
            cells.push(cell);
        }
    }
    cells
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn from_property(results: &[PropertyResult]) -> Outcome {
    let passed = results.iter().all(|r| r.passed);
    let detail = results
        .iter()
        .map(|r| format!("{} trials={} margin={:+.3e} {}", r.name, r.trials, r.margin, r.detail))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(passed, detail)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let full = VerifyOptions::default();
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();

    let config = SweepConfig::wall_sweep();
    let sweep = run_wall_sweep(&config);
    let records = &sweep.records;
    let sweep_secs = started.elapsed().as_secs_f64();
    let cells_expected = config.walls.to_vec().len() * config.seeds.len();
    let complete = sweep.errors.is_empty() && records.len() == cells_expected;
    let failures = format!(
        "{} records, {} failed cells{}",
        records.len(),
        sweep.errors.len(),
        sweep.errors.first().map(|e| format!(" (first: {})", e.error)).unwrap_or_default()
    );

    // 1. Bound validity over the sweep.
    {
        let finite: Vec<_> = records.iter().filter(|r| r.total_bound.is_finite()).collect();
        let worst = finite
            .iter()
            .map(|r| match r.total_bound {
                Bound::Finite(t) => t - r.err_gdo,
                Bound::Vacuous => f64::INFINITY,
            })
            .fold(f64::INFINITY, f64::min);
        let violations = finite.iter().filter(|r| r.err_gdo > r.total_bound.value().unwrap() + 1e-9).count();
        lines.push((
            1,
            "bound validity",
            outcome(
                complete && violations == 0,
                format!(
                    "{failures}; {} with finite total_bound, {violations} violations, min slack {worst:.3e}",
                    finite.len()
                ),
            ),
        ));
    }

    let mut poisson: Vec<(String, f64, f64)> = sweep
        .diagnostics
        .iter()
        .map(|d| (format!("sweep w={} seed={}", d.w, d.seed), d.poisson_residual, d.normalization_defect))
        .collect();
    let record_cell = |c: &Cell, poisson: &mut Vec<(String, f64, f64)>| {
        poisson.push((
            format!("extra w={} seed={}", c.w, c.seed),
            c.value.poisson_residual(c.chain.kernel()),
            c.value.normalization_defect(),
        ));
    };

    // 2. Truncation bound on the sweep and on extra k.
    {
        let r_bar = |w: usize, seed: u64| {
            sweep
                .diagnostics
                .iter()
                .find(|d| d.w == w && d.seed == seed)
                .map(|d| d.r_bar_norm)
                .unwrap_or(f64::NAN)
        };
        let mut violations = 0;
        let mut checked = 0;
        let mut worst = f64::INFINITY;
        for r in records {
            let rb = r_bar(r.w, r.seed);
            let bound = rb * rb / (r.lambda2 * r.lambda_k1);
            let slack = bound - r.err_exact * r.err_exact;
            worst = worst.min(slack);
            checked += 1;
            if !(slack >= -1e-12) {
                violations += 1;
            }
        }
        let mut extra_errors = Vec::new();
        for (w, seed) in random_cells(10, 1) {
            match build_cell(w, seed) {
                Ok(cell) => {
                    record_cell(&cell, &mut poisson);
                    let phi = cell.chain.stationary();
                    let rb = weighted_norm(&cell.value.r_bar, phi).unwrap();
                    for k in [1, 5, 10, 20, 40] {
                        let err = approximation_error(&cell.value.v, &cell.bundle.basis(k), phi).unwrap();
                        let bound = rb * rb / (cell.bundle.lambdas[1] * cell.bundle.lambda_after(k));
                        let slack = bound - err * err;
                        worst = worst.min(slack);
                        checked += 1;
                        if !(slack >= -1e-12) {
                            violations += 1;
                        }
                    }
                }
                Err(e) => extra_errors.push(format!("w={w} seed={seed}: {e}")),
            }
        }
        lines.push((
            2,
            "truncation bound",
            outcome(
                complete && violations == 0 && extra_errors.is_empty(),
                format!(
                    "{checked} (cell, k) pairs, {violations} violations, min slack {worst:.3e}{}",
                    extra_errors.first().map(|e| format!("; error {e}")).unwrap_or_default()
                ),
            ),
        ));
    }

    // 3 and 4. Trends against the number of walls.
    let by_w = |f: fn(&laprep_bench::record::SweepRecord) -> f64| group_means(records.iter().map(|r| (r.w, f(r))));
    let rho_against_w = |means: &[(usize, f64)]| {
        let ws: Vec<f64> = means.iter().map(|(w, _)| *w as f64).collect();
        let ys: Vec<f64> = means.iter().map(|(_, y)| *y).collect();
        spearman(&ws, &ys).unwrap_or(f64::NAN)
    };
    {
        let lambda2 = by_w(|r| r.lambda2);
        let rho = rho_against_w(&lambda2);
        let at = |w: usize| lambda2.iter().find(|(x, _)| *x == w).map(|(_, y)| *y).unwrap_or(f64::NAN);
        let (first, last) = (at(1), at(50));
        lines.push((
            3,
            "connectivity trend",
            outcome(
                complete && rho <= -0.9 && last < first,
                format!("spearman(w, mean lambda2) = {rho:.4}; mean lambda2 w=1 {first:.4e}, w=50 {last:.4e}"),
            ),
        ));
    }
    {
        let rho_exact = rho_against_w(&by_w(|r| r.err_exact));
        let rho_gdo = rho_against_w(&by_w(|r| r.err_gdo));
        let n = records.len().max(1) as f64;
        let mean_exact = records.iter().map(|r| r.err_exact).sum::<f64>() / n;
        let mean_gdo = records.iter().map(|r| r.err_gdo).sum::<f64>() / n;
        lines.push((
            4,
            "error trend",
            outcome(
                complete && rho_exact >= 0.8 && rho_gdo >= 0.8 && mean_gdo >= mean_exact,
                format!(
                    "spearman err_exact {rho_exact:.4}, err_gdo {rho_gdo:.4}; mean err_gdo {mean_gdo:.6e} vs mean err_exact {mean_exact:.6e}"
                ),
            ),
        ));
    }

    // 5. Nested spans give non-increasing exact errors in k.
    {
        let mut worst_rise = f64::NEG_INFINITY;
        let mut problems = Vec::new();
        for (w, seed) in random_cells(5, 2) {
            match build_cell(w, seed) {
                Ok(cell) => {
                    record_cell(&cell, &mut poisson);
                    let phi = cell.chain.stationary();
                    let errs: Vec<f64> = (1..=60)
                        .map(|k| approximation_error(&cell.value.v, &cell.bundle.basis(k), phi).unwrap())
                        .collect();
                    for (k, pair) in errs.windows(2).enumerate() {
                        let rise = pair[1] - pair[0];
                        worst_rise = worst_rise.max(rise);
                        if rise > 1e-10 {
                            problems.push(format!("w={w} seed={seed} k={}->{}: +{rise:.3e}", k + 1, k + 2));
                        }
                    }
                }
                Err(e) => problems.push(format!("w={w} seed={seed}: {e}")),
            }
        }
        lines.push((
            5,
            "k monotonicity",
            outcome(
                problems.is_empty(),
                format!(
                    "5 cells x k=1..60, largest increase {worst_rise:.3e}{}",
                    problems.first().map(|p| format!("; {p}")).unwrap_or_default()
                ),
            ),
        ));
    }

    // 12 runs here so its chain joins the Poisson census.
    let two_state = two_state_pipeline();

    // 6. Poisson solutions of every chain built above, plus random chains.
    {
        let random = check_poisson(&full);
        let worst_res = poisson.iter().map(|p| p.1).fold(0.0, f64::max);
        let worst_norm = poisson.iter().map(|p| p.2).fold(0.0, f64::max);
        let bad: Vec<&String> = poisson
            .iter()
            .filter(|(_, res, norm)| !(*res <= 1e-8 && *norm <= 1e-10))
            .map(|p| &p.0)
            .collect();
        let two_ok = match &two_state {
            Ok(out) => {
                let v = &out.v;
                let residual = (v[0] - 0.5 - 0.5 * (v[0] + v[1])).abs().max((v[1] + 0.5 - 0.5 * (v[0] + v[1])).abs());
                residual <= 1e-8 && (0.5 * v[0] + 0.5 * v[1]).abs() <= 1e-10
            }
            Err(_) => false,
        };
        lines.push((
            6,
            "poisson solver",
            outcome(
                complete && bad.is_empty() && random.passed && two_ok,
                format!(
                    "{} grid chains: max residual {worst_res:.3e}, max |phi'v| {worst_norm:.3e}{}; {} random chains {}; two-state {}",
                    poisson.len(),
                    bad.first().map(|b| format!(", failing {b}")).unwrap_or_default(),
                    random.trials,
                    if random.passed { "ok" } else { &random.detail },
                    if two_ok { "ok" } else { "failed" }
                ),
            ),
        ));
    }

    lines.push((7, "graph drawing lemma", from_property(&[check_graph_drawing(&full)])));
    lines.push((8, "kernel pairing", from_property(&[check_kernel_pairing(&full)])));
    lines.push((9, "cheeger sandwich", from_property(&[check_cheeger(&full)])));
    lines.push((10, "sin-theta identity", from_property(&[check_sin_theta(&full)])));
    lines.push((11, "gdo gradient", from_property(&[check_gradient(&full), check_monte_carlo(&full)])));

    lines.push((
        12,
        "two-state example",
        match two_state {
            Ok(out) => {
                let d = two_state_deviation(&out);
                outcome(
                    d <= 1e-12,
                    format!(
                        "max deviation {d:.3e}: phi={:?} rho={} v={:?} lambda={:?} err_exact={} trunc_bound={}",
                        out.phi, out.rho, out.v, out.lambdas, out.err_exact, out.trunc_bound
                    ),
                )
            }
            Err(e) => outcome(false, e),
        },
    ));

    let mut failed = 0;
    for (id, name, o) in &lines {
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<20} {}  {}",
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "{} criteria, {failed} failed (sweep {sweep_secs:.1}s, total {:.1}s)",
        lines.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
