//! Wall and k sweeps over gridworld cells.

use std::time::Instant;

use laprep_core::bounds::make_report;
use laprep_core::gdo::learn_representation;
use laprep_core::gridworld::{build_grid, carve_walls, to_chain, Policy};
use laprep_core::numlin::weighted_norm;
use laprep_core::spectral::{build_laplacian, spectrum};
use rayon::prelude::*;

use crate::config::SweepConfig;
use crate::record::{CellError, SweepRecord};

/// Poisson-solution diagnostics for one `(w, seed)` chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub w: usize,
    pub seed: u64,
    pub poisson_residual: f64,
    pub normalization_defect: f64,
    /// `‖r̄‖_Φ`.
    pub r_bar_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub errors: Vec<CellError>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

struct CellOutput {
    records: Vec<SweepRecord>,
    errors: Vec<CellError>,
    diagnostics: Option<ChainDiagnostics>,
}

fn elapsed_ms(start: Instant, timings: bool) -> u64 {
    if timings {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// One `(w, seed)` cell: the chain and spectrum are shared by every `k`.
fn run_cell(config: &SweepConfig, w: usize, seed: u64, ks: &[usize]) -> CellOutput {
    let start = Instant::now();
    let fail_all = |error: String| CellOutput {
        records: Vec::new(),
        errors: ks
            .iter()
            .map(|&k| CellError {
                w,
                seed,
                k,
                error: error.clone(),
            })
            .collect(),
        diagnostics: None,
    };
    let prepared = (|| -> Result<_, String> {
        let grid = build_grid(config.n, config.m).map_err(|e| e.to_string())?;
        let env = carve_walls(&grid, w, seed).map_err(|e| e.to_string())?;
        let chain = to_chain(&env, &Policy::Uniform).map_err(|e| e.to_string())?;
        let l = build_laplacian(chain.kernel(), chain.stationary()).map_err(|e| e.to_string())?;
        let bundle = spectrum(&l, chain.stationary()).map_err(|e| e.to_string())?;
        let value = chain.solve_poisson().map_err(|e| e.to_string())?;
        Ok((chain, l, bundle, value))
    })();
    let (chain, l, bundle, value) = match prepared {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let setup_ms = elapsed_ms(start, config.timings);
    let diagnostics = ChainDiagnostics {
        w,
        seed,
        poisson_residual: value.poisson_residual(chain.kernel()),
        normalization_defect: value.normalization_defect(),
        r_bar_norm: weighted_norm(&value.r_bar, chain.stationary()).unwrap_or(f64::NAN),
    };

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for &k in ks {
        let started = Instant::now();
        let outcome = learn_representation(&chain, &l, &bundle, &config.gdo.for_cell(k, seed))
            .map_err(|e| e.to_string())
            .and_then(|rep| make_report(&chain, &bundle, &rep, &value, k).map_err(|e| e.to_string()));
        match outcome {
            Ok(report) => {
                let ms = setup_ms + elapsed_ms(started, config.timings);
                records.push(SweepRecord::from_report(config.n, config.m, w, seed, &report, ms));
            }
            Err(error) => errors.push(CellError { w, seed, k, error }),
        }
    }
    CellOutput {
        records,
        errors,
        diagnostics: Some(diagnostics),
    }
}

fn run_cells(config: &SweepConfig, ks: &[usize]) -> SweepOutcome {
    let cells: Vec<(usize, u64)> = config
        .walls
        .to_vec()
        .into_iter()
        .flat_map(|w| config.seeds.iter().map(move |&s| (w, s)))
        .collect();
    let work = || -> Vec<CellOutput> { cells.par_iter().map(|&(w, s)| run_cell(config, w, s, ks)).collect() };
    let outputs = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    };
    let mut outcome = SweepOutcome::default();
    for out in outputs {
        outcome.records.extend(out.records);
        outcome.errors.extend(out.errors);
        outcome.diagnostics.extend(out.diagnostics);
    }
    outcome.records.sort_by_key(|r| r.key());
    outcome.errors.sort_by_key(|e| (e.w, e.seed, e.k));
    outcome.diagnostics.sort_by_key(|d| (d.w, d.seed));
    outcome
}

/// Every `(w, seed)` cell at every `k` in `config.k_values`.
pub fn run_wall_sweep(config: &SweepConfig) -> SweepOutcome {
    run_cells(config, &config.k_values.to_vec())
}

pub const DEFAULT_K_RANGE: std::ops::RangeInclusive<usize> = 1..=60;

/// Same cells, reporting along `k`. An empty `k_values` list means `1..=60`
/// (capped at the number of states).
pub fn run_k_sweep(config: &SweepConfig) -> SweepOutcome {
    let mut ks = config.k_values.to_vec();
    if ks.is_empty() {
        ks = DEFAULT_K_RANGE.filter(|&k| k <= config.n * config.m).collect();
    }
    run_cells(config, &ks)
}

/// Header comments recording how a sweep was produced.
pub fn run_comments(config: &SweepConfig) -> Vec<String> {
    vec![format!(
        "gdo beta={} step_size={} iterations={} mode={:?}",
        config.gdo.beta, config.gdo.step_size, config.gdo.iterations, config.gdo.mode
    )]
}
