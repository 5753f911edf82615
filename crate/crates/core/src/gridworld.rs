//! Deterministic gridworlds with removable edges ("walls") and their
//! policy-induced Markov chains.
//!
//! A wall is a removed edge between two 4-adjacent cells; every cell stays a
//! state. Walls are carved by drawing a uniform spanning tree with Wilson's
//! algorithm and then removing non-tree edges, so the grid stays connected.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, ErgodicChain};
use crate::numlin::DenseMatrix;

/// `(row, col)`.
pub type Cell = (usize, usize);

/// Unordered pair of adjacent cells, stored with the smaller cell first.
pub type Edge = (Cell, Cell);

pub const ENV_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid size {rows}x{cols}: both sides must be at least 2")]
    InvalidSize { rows: usize, cols: usize },
    #[error("cannot remove {requested} walls: at most {max} edges can go while staying connected")]
    TooManyWalls { requested: usize, max: usize },
    #[error("grid graph is disconnected")]
    Disconnected,
    #[error("edge {0:?} does not join two adjacent in-bounds cells")]
    InvalidEdge(Edge),
    #[error("goal {0:?} lies outside the grid")]
    InvalidGoal(Cell),
    #[error("policy table has {found} rows, expected {expected}")]
    PolicyShape { expected: usize, found: usize },
    #[error("policy row {0} is not a probability distribution")]
    PolicyNotDistribution(usize),
    #[error("unsupported environment format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
}

/// Behaviour policy used to collapse the MDP into a Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Uniform,
    /// One row per state (row-major cell order), probabilities in
    /// [`Action::ALL`] order.
    Table(Vec<[f64; 4]>),
}

/// Gridworld description. Serializes to the environment JSON format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EnvFile", into = "EnvFile")]
pub struct GridEnv {
    rows: usize,
    cols: usize,
    goal: Cell,
    removed_edges: BTreeSet<Edge>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    format_version: u32,
    n: usize,
    m: usize,
    goal: Cell,
    removed_edges: Vec<Edge>,
    seed: u64,
}

impl From<GridEnv> for EnvFile {
    fn from(env: GridEnv) -> Self {
        EnvFile {
            format_version: ENV_FORMAT_VERSION,
            n: env.rows,
            m: env.cols,
            goal: env.goal,
            removed_edges: env.removed_edges.into_iter().collect(),
            seed: env.seed,
        }
    }
}

impl TryFrom<EnvFile> for GridEnv {
    type Error = GridError;

    fn try_from(f: EnvFile) -> Result<Self, GridError> {
        if f.format_version != ENV_FORMAT_VERSION {
            return Err(GridError::FormatVersion(f.format_version));
        }
        GridEnv::with_walls(f.n, f.m, f.goal, f.removed_edges, f.seed)
    }
}

fn normalize_edge(a: Cell, b: Cell) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Open grid with the goal in the bottom-right corner.
pub fn build_grid(rows: usize, cols: usize) -> Result<GridEnv, GridError> {
    if rows < 2 || cols < 2 {
        return Err(GridError::InvalidSize { rows, cols });
    }
    Ok(GridEnv {
        rows,
        cols,
        goal: (rows - 1, cols - 1),
        removed_edges: BTreeSet::new(),
        seed: 0,
    })
}

impl GridEnv {
    /// Validating constructor for an arbitrary wall set.
    pub fn with_walls(
        rows: usize,
        cols: usize,
        goal: Cell,
        walls: impl IntoIterator<Item = Edge>,
        seed: u64,
    ) -> Result<Self, GridError> {
        let mut env = build_grid(rows, cols)?;
        if goal.0 >= rows || goal.1 >= cols {
            return Err(GridError::InvalidGoal(goal));
        }
        env.goal = goal;
        env.seed = seed;
        for (a, b) in walls {
            let e = normalize_edge(a, b);
            if !env.is_adjacent_pair(e) {
                return Err(GridError::InvalidEdge(e));
            }
            env.removed_edges.insert(e);
        }
        if !env.is_connected() {
            return Err(GridError::Disconnected);
        }
        Ok(env)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn removed_edges(&self) -> &BTreeSet<Edge> {
        &self.removed_edges
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, (r, c): Cell) -> usize {
        r * self.cols + c
    }

    pub fn cell(&self, idx: usize) -> Cell {
        (idx / self.cols, idx % self.cols)
    }

    fn in_bounds(&self, (r, c): Cell) -> bool {
        r < self.rows && c < self.cols
    }

    fn is_adjacent_pair(&self, (a, b): Edge) -> bool {
        self.in_bounds(a) && self.in_bounds(b) && a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
    }

    /// Every 4-adjacency edge of the full grid, sorted.
    pub fn adjacency_edges(&self) -> Vec<Edge> {
        let mut edges = Vec::with_capacity(self.rows * (self.cols - 1) + self.cols * (self.rows - 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    edges.push(((r, c), (r, c + 1)));
                }
                if r + 1 < self.rows {
                    edges.push(((r, c), (r + 1, c)));
                }
            }
        }
        edges.sort();
        edges
    }

    /// Adjacency edges not blocked by a wall, sorted.
    pub fn open_edges(&self) -> Vec<Edge> {
        self.adjacency_edges()
            .into_iter()
            .filter(|e| !self.removed_edges.contains(e))
            .collect()
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_cells()];
        for (a, b) in self.open_edges() {
            let (ia, ib) = (self.index(a), self.index(b));
            nb[ia].push(ib);
            nb[ib].push(ia);
        }
        nb
    }

    /// BFS over open edges.
    pub fn is_connected(&self) -> bool {
        let nb = self.neighbours();
        let mut seen = vec![false; self.num_cells()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &nb[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.num_cells()
    }

    /// Deterministic move; walls and borders leave the agent in place.
    pub fn step(&self, cell: Cell, action: Action) -> Cell {
        let (r, c) = cell;
        let target = match action {
            Action::Up if r > 0 => (r - 1, c),
            Action::Down if r + 1 < self.rows => (r + 1, c),
            Action::Left if c > 0 => (r, c - 1),
            Action::Right if c + 1 < self.cols => (r, c + 1),
            _ => return cell,
        };
        if self.removed_edges.contains(&normalize_edge(cell, target)) {
            cell
        } else {
            target
        }
    }
}

/// Uniform spanning tree of the open-edge graph via Wilson's loop-erased
/// random walks. Returns tree edges (normalized).
pub fn wilson_spanning_tree(env: &GridEnv, rng: &mut impl Rng) -> Result<BTreeSet<Edge>, GridError> {
    if !env.is_connected() {
        return Err(GridError::Disconnected);
    }
    let nb = env.neighbours();
    let n = env.num_cells();
    let mut in_tree = vec![false; n];
    let mut next = vec![usize::MAX; n];
    in_tree[rng.random_range(0..n)] = true;
    for start in 0..n {
        let mut u = start;
        while !in_tree[u] {
            next[u] = nb[u][rng.random_range(0..nb[u].len())];
            u = next[u];
        }
        u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u];
        }
    }
    Ok((0..n)
        .filter(|&u| next[u] != usize::MAX)
        .map(|u| normalize_edge(env.cell(u), env.cell(next[u])))
        .collect())
}

/// Removes `walls` open edges chosen uniformly among those outside a uniform
/// random spanning tree.
///
/// For a fixed seed the tree and the edge ordering do not depend on `walls`,
/// so the wall set for `w` is a subset of the wall set for `w + 1`.
pub fn carve_walls(env: &GridEnv, walls: usize, seed: u64) -> Result<GridEnv, GridError> {
    let open = env.open_edges();
    let max = open.len() + 1 - env.num_cells();
    if walls > max {
        return Err(GridError::TooManyWalls {
            requested: walls,
            max,
        });
    }
    let mut out = env.clone();
    out.seed = seed;
    if walls == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = wilson_spanning_tree(env, &mut rng)?;
    let mut candidates: Vec<Edge> = open.into_iter().filter(|e| !tree.contains(e)).collect();
    candidates.shuffle(&mut rng);
    out.removed_edges.extend(candidates.into_iter().take(walls));
    debug_assert!(out.is_connected());
    Ok(out)
}

/// Markov chain induced by `policy`, with the goal row teleporting uniformly.
///
/// `r(s)` is the policy-expected transition reward: `+1` for a move that
/// lands on the goal, `−1` otherwise. The goal state's teleport earns `−1`.
pub fn to_chain(env: &GridEnv, policy: &Policy) -> Result<ErgodicChain, GridError> {
    if !env.is_connected() {
        return Err(GridError::Disconnected);
    }
    let n = env.num_cells();
    if let Policy::Table(rows) = policy {
        if rows.len() != n {
            return Err(GridError::PolicyShape {
                expected: n,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(GridError::PolicyNotDistribution(i));
            }
        }
    }
    let goal = env.index(env.goal);
    let mut p = DenseMatrix::zeros(n, n);
    let mut r = vec![0.0; n];
    for s in 0..n {
        if s == goal {
            p.row_mut(s).fill(1.0 / n as f64);
            r[s] = -1.0;
            continue;
        }
        let probs = match policy {
            Policy::Uniform => [0.25; 4],
            Policy::Table(rows) => rows[s],
        };
        for (a, &pa) in Action::ALL.iter().zip(&probs) {
            if pa == 0.0 {
                continue;
            }
            let t = env.index(env.step(env.cell(s), *a));
            p[(s, t)] += pa;
            r[s] += pa * if t == goal { 1.0 } else { -1.0 };
        }
    }
    let labels = (0..n).map(|i| env.cell(i)).collect();
    Ok(ErgodicChain::new(p, r, labels)?)
}
