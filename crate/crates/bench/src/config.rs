//! Sweep configuration, read from TOML.

use std::path::{Path, PathBuf};

use laprep_core::gdo::{GdoConfig, GdoMode};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// A list of counts, written either explicitly or as an inclusive range
/// `{ from = 1, to = 50 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    List(Vec<usize>),
    Range { from: usize, to: usize },
}

impl Counts {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Counts::List(v) => v.clone(),
            Counts::Range { from, to } => (*from..=*to).collect(),
        }
    }
}

/// Optimizer settings shared by every cell. `k` and the seed come from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdoSettings {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mode")]
    pub mode: GdoMode,
}

pub const DEFAULT_BETA: f64 = 5.0;
pub const DEFAULT_STEP: f64 = 0.05;
pub const DEFAULT_ITERATIONS: usize = 300;

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}
fn default_mode() -> GdoMode {
    GdoMode::FullGradient
}

impl Default for GdoSettings {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            step_size: DEFAULT_STEP,
            iterations: DEFAULT_ITERATIONS,
            mode: GdoMode::FullGradient,
        }
    }
}

impl GdoSettings {
    pub fn for_cell(&self, k: usize, seed: u64) -> GdoConfig {
        GdoConfig {
            k,
            beta: self.beta,
            step_size: self.step_size,
            iterations: self.iterations,
            seed,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    pub walls: Counts,
    pub seeds: Vec<u64>,
    #[serde(default = "default_k_values")]
    pub k_values: Counts,
    #[serde(default)]
    pub gdo: GdoSettings,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Record wall-clock `runtime_ms`; when off the column is 0.
    #[serde(default)]
    pub timings: bool,
}

fn default_k_values() -> Counts {
    Counts::List(vec![20])
}

impl SweepConfig {
    /// The standard wall sweep: 15×15, w = 1..=50, five seeds, k = 20.
    pub fn wall_sweep() -> Self {
        Self {
            n: 15,
            m: 15,
            walls: Counts::Range { from: 1, to: 50 },
            seeds: (0..5).collect(),
            k_values: Counts::List(vec![20]),
            gdo: GdoSettings::default(),
            output_path: None,
            workers: None,
            timings: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let config: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let cells = self.n * self.m;
        if self.n == 0 || self.m == 0 || cells < 2 {
            return Err(BenchError::Config(format!("grid {}x{} is too small", self.n, self.m)));
        }
        let open = self.n * (self.m - 1) + self.m * (self.n - 1);
        let max_walls = open + 1 - cells;
        if let Some(w) = self.walls.to_vec().into_iter().find(|&w| w > max_walls) {
            return Err(BenchError::Config(format!(
                "w = {w} exceeds the {max_walls} removable edges of a {}x{} grid",
                self.n, self.m
            )));
        }
        if self.walls.to_vec().is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config("walls and seeds must be non-empty".into()));
        }
        let ks = self.k_values.to_vec();
        if ks.iter().any(|&k| k == 0 || k > cells) {
            return Err(BenchError::Config(format!("k_values must lie in 1..={cells}")));
        }
        if self.workers == Some(0) {
            return Err(BenchError::Config("workers must be positive".into()));
        }
        self.gdo
            .for_cell(1, 0)
            .validate(cells)
            .map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(())
    }
}
