//! Finite Markov chains with lattice jump labels: the exact oracle world.
//!
//! Convention: a forward kernel `K[i][j] = P_i(X_n = j, …)` is indexed by
//! start state then end state. The transfer operator of the base, acting on
//! functions of the state and taken with respect to π, is
//! `P = D_π⁻¹ Kᵀ D_π`; every operator exported by this module (`Q_{n,ℓ}`,
//! `T_n`, `R_n`, `U_k`) uses that transfer convention, so that
//! `π · (Q_{n,ℓ} 1) = P_π(S_n = ℓ)`.

mod dist;
mod operators;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dist::{pairwise_sum, LatticeDist, DEFAULT_CELL_BUDGET};
pub use operators::{
    exact_distribution, exact_return_tail, marginal_at, operator_q, operator_tr, operator_u_check,
    renewal_kernels, simple_walk_return_tail, sup_norm, to_transfer, ExactDistribution, ExactReturnTail,
    LatticeKernel, RenewalKernels, TrOperators, UCheck,
};

use crate::error::{Error, Result};
use crate::extension::{ExtensionSystem, Step};
use crate::lattice::{Cell, Symbol};
use crate::rng::{RngSpec, StreamRng};
use crate::stats::CovarianceMatrix;

const ROW_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub to: usize,
    pub prob: f64,
    pub jump: Cell,
}

/// Serializable description of a chain: for each state, its outgoing
/// labelled transitions. Several edges may join the same pair of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSpec {
    pub states: Vec<Vec<Edge>>,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    2
}

#[derive(Clone, Debug)]
pub struct MarkovExtension {
    edges: Vec<Vec<Edge>>,
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    dim: usize,
    period: usize,
    row_cdf: Vec<Vec<f64>>,
    extent: (Cell, Cell),
}

impl MarkovExtension {
    /// Matrix form: one jump label per (from, to) pair.
    pub fn new(transition: Vec<Vec<f64>>, jumps: Vec<Vec<Cell>>, dim: usize) -> Result<Self> {
        let n = transition.len();
        if jumps.len() != n || transition.iter().any(|r| r.len() != n) || jumps.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidChain("transition and jump tables must be n × n".into()));
        }
        let edges = transition
            .iter()
            .zip(&jumps)
            .map(|(row, jrow)| {
                row.iter()
                    .zip(jrow)
                    .enumerate()
                    .map(|(to, (&prob, &jump))| Edge { to, prob, jump })
                    .collect()
            })
            .collect();
        Self::from_edges(edges, dim)
    }

    pub fn from_edges(edges: Vec<Vec<Edge>>, dim: usize) -> Result<Self> {
        let n = edges.len();
        if n == 0 {
            return Err(Error::InvalidChain("no states".into()));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidChain(format!("dimension {dim} not in {{1, 2}}")));
        }
        let mut transition = vec![vec![0.0; n]; n];
        for (i, row) in edges.iter().enumerate() {
            for e in row {
                if e.to >= n {
                    return Err(Error::InvalidChain(format!("state {i} has an edge to missing state {}", e.to)));
                }
                if !(0.0..=1.0).contains(&e.prob) {
                    return Err(Error::InvalidChain(format!("state {i} has probability {} outside [0, 1]", e.prob)));
                }
                if dim == 1 && e.jump.y != 0 {
                    return Err(Error::InvalidChain("one-dimensional chain with a y jump".into()));
                }
                transition[i][e.to] += e.prob;
            }
            let s: f64 = row.iter().map(|e| e.prob).sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidChain(format!("row {i} sums to {s}")));
            }
        }
        let edges: Vec<Vec<Edge>> = edges
            .into_iter()
            .map(|row| row.into_iter().filter(|e| e.prob > 0.0).collect())
            .collect();
        let row_cdf = edges
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|e| {
                        acc += e.prob;
                        acc
                    })
                    .collect()
            })
            .collect();
        let mut lo = Cell::ZERO;
        let mut hi = Cell::ZERO;
        for e in edges.iter().flatten() {
            lo = Cell::new(lo.x.min(e.jump.x), lo.y.min(e.jump.y));
            hi = Cell::new(hi.x.max(e.jump.x), hi.y.max(e.jump.y));
        }

        check_irreducible(&edges)?;
        let stationary = stationary_distribution(&transition)?;
        let mut chain = MarkovExtension {
            edges,
            transition,
            stationary,
            dim,
            period: 1,
            row_cdf,
            extent: (lo, hi),
        };
        chain.check_stationary()?;
        chain.check_cycle_lattice()?;
        chain.period = chain.return_period()?;
        Ok(chain)
    }

    pub fn from_spec(spec: &MarkovSpec) -> Result<Self> {
        Self::from_edges(spec.states.clone(), spec.dim)
    }

    pub fn spec(&self) -> MarkovSpec {
        MarkovSpec {
            states: self.edges.clone(),
            dim: self.dim,
        }
    }

    /// Single-state walk with the given (jump, probability) steps.
    pub fn one_state_walk(steps: &[(Cell, f64)]) -> Result<Self> {
        let row = steps.iter().map(|&(jump, prob)| Edge { to: 0, prob, jump }).collect();
        Self::from_edges(vec![row], 2)
    }

    /// The planar simple random walk: one state, jumps ±e₁, ±e₂ with
    /// probability 1/4 each. Its returns to 0 happen at even times only.
    pub fn simple_random_walk() -> Self {
        Self::one_state_walk(&[
            (Cell::new(1, 0), 0.25),
            (Cell::new(-1, 0), 0.25),
            (Cell::new(0, 1), 0.25),
            (Cell::new(0, -1), 0.25),
        ])
        .expect("simple random walk is a valid chain")
    }

    /// Stays put with probability `hold`, otherwise a simple-random-walk
    /// step. Aperiodic for `hold > 0`.
    pub fn lazy_walk(hold: f64) -> Result<Self> {
        let q = (1.0 - hold) / 4.0;
        Self::one_state_walk(&[
            (Cell::ZERO, hold),
            (Cell::new(1, 0), q),
            (Cell::new(-1, 0), q),
            (Cell::new(0, 1), q),
            (Cell::new(0, -1), q),
        ])
    }

    /// Random centred chain on `n_states` states with nearest-neighbour
    /// jumps, redrawn until valid and aperiodic. Deterministic in `seed`.
    ///
    /// Transition weights are symmetric (`W_ij = W_ji`) and jumps
    /// antisymmetric (`J_ji = −J_ij`, self-loops split into `±d_i`), so the
    /// chain is reversible and its stationary drift vanishes.
    pub fn random(n_states: usize, seed: u64) -> Self {
        let moves = [
            Cell::ZERO,
            Cell::new(1, 0),
            Cell::new(-1, 0),
            Cell::new(0, 1),
            Cell::new(0, -1),
        ];
        let mut rng = RngSpec::new(seed, 0).rng();
        for _ in 0..10_000 {
            let mut w = vec![vec![0.0; n_states]; n_states];
            let mut jump = vec![vec![Cell::ZERO; n_states]; n_states];
            for i in 0..n_states {
                for j in i..n_states {
                    let x = 0.1 + rng.gen::<f64>();
                    w[i][j] = x;
                    w[j][i] = x;
                    let lo = usize::from(i == j);
                    let m = moves[rng.gen_range(lo..moves.len())];
                    jump[i][j] = m;
                    jump[j][i] = Cell::ZERO - m;
                }
            }
            let edges: Vec<Vec<Edge>> = (0..n_states)
                .map(|i| {
                    let total: f64 = w[i].iter().sum();
                    let mut row = Vec::new();
                    for j in 0..n_states {
                        let p = w[i][j] / total;
                        if i == j {
                            row.push(Edge { to: i, prob: p / 2.0, jump: jump[i][i] });
                            row.push(Edge { to: i, prob: p / 2.0, jump: Cell::ZERO - jump[i][i] });
                        } else {
                            row.push(Edge { to: j, prob: p, jump: jump[i][j] });
                        }
                    }
                    let rest: f64 = row[1..].iter().map(|e| e.prob).sum();
                    row[0].prob = 1.0 - rest;
                    row
                })
                .collect();
            if let Ok(chain) = Self::from_edges(edges, 2) {
                if chain.period() == 1 {
                    return chain;
                }
            }
        }
        panic!("no valid random chain on {n_states} states in 10000 draws");
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn edges(&self, state: usize) -> &[Edge] {
        &self.edges[state]
    }

    /// gcd of the times `n` at which `P_π(S_n = 0) > 0`.
    pub fn period(&self) -> usize {
        self.period
    }

    /// Componentwise min and max jump (each including 0).
    pub fn jump_extent(&self) -> (Cell, Cell) {
        self.extent
    }

    /// Mean jump under the stationary chain.
    pub fn drift(&self) -> [f64; 2] {
        let mut d = [0.0; 2];
        for (i, row) in self.edges.iter().enumerate() {
            for e in row {
                d[0] += self.stationary[i] * e.prob * e.jump.x as f64;
                d[1] += self.stationary[i] * e.prob * e.jump.y as f64;
            }
        }
        d
    }

    /// Exact asymptotic covariance `lim Cov_π(S_n)/n`, by the Green–Kubo
    /// sum `Γ₀ + Σ_{k≥1}(Γ_k + Γ_kᵀ)` evaluated with the fundamental matrix
    /// `(I − P + 1π)⁻¹`.
    pub fn exact_sigma(&self) -> Result<CovarianceMatrix> {
        let drift = self.drift();
        if drift.iter().any(|d| d.abs() > 1e-12) {
            return Err(Error::NonzeroDrift { drift, stderr: [0.0; 2] });
        }
        let k = self.n_states();
        let pi = &self.stationary;
        let z = DMatrix::from_fn(k, k, |i, j| f64::from(u8::from(i == j)) - self.transition[i][j] + pi[j]);
        let z = z
            .try_inverse()
            .ok_or_else(|| Error::InvalidChain("fundamental matrix is singular".into()))?;
        let mean_jump = |c: usize| {
            DVector::from_fn(k, |i, _| {
                self.edges[i].iter().map(|e| e.prob * e.jump.as_f64()[c]).sum::<f64>()
            })
        };
        let h = [&z * mean_jump(0), &z * mean_jump(1)];
        let mut m = [[0.0; 2]; 2];
        for (i, row) in self.edges.iter().enumerate() {
            for e in row {
                let j = e.jump.as_f64();
                for a in 0..2 {
                    for b in 0..2 {
                        m[a][b] += pi[i] * e.prob * (j[a] * j[b] + j[a] * h[b][e.to] + j[b] * h[a][e.to]);
                    }
                }
            }
        }
        m[0][1] = 0.5 * (m[0][1] + m[1][0]);
        m[1][0] = m[0][1];
        CovarianceMatrix::new(m)
    }

    fn check_stationary(&self) -> Result<()> {
        let n = self.n_states();
        for j in 0..n {
            let pj: f64 = (0..n).map(|i| self.stationary[i] * self.transition[i][j]).sum();
            if (pj - self.stationary[j]).abs() > ROW_TOL {
                return Err(Error::InvalidChain(format!(
                    "stationary vector off by {:.2e} at state {j}",
                    pj - self.stationary[j]
                )));
            }
        }
        Ok(())
    }

    /// The cocycle sums along closed loops of the transition graph must
    /// generate Z^d, otherwise the extension lives on a sublattice or a
    /// bounded set.
    fn check_cycle_lattice(&self) -> Result<()> {
        let n = self.n_states();
        let mut potential: Vec<Option<Cell>> = vec![None; n];
        potential[0] = Some(Cell::ZERO);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let h = potential[i].unwrap();
            for e in &self.edges[i] {
                if potential[e.to].is_none() {
                    potential[e.to] = Some(h + e.jump);
                    queue.push_back(e.to);
                }
            }
        }
        let mut gens = Vec::new();
        for (i, row) in self.edges.iter().enumerate() {
            for e in row {
                let c = potential[i].unwrap() + e.jump - potential[e.to].unwrap();
                if !c.is_zero() {
                    gens.push(c);
                }
            }
        }
        let index = match self.dim {
            1 => gens.iter().fold(0, |g, c| gcd(g, c.x.abs())),
            _ => {
                let mut g = 0;
                for (a, u) in gens.iter().enumerate() {
                    for w in &gens[a + 1..] {
                        g = gcd(g, (u.x * w.y - u.y * w.x).abs());
                    }
                }
                g
            }
        };
        if index != 1 {
            return Err(Error::InvalidChain(format!(
                "loop displacements generate a sublattice of index {index} in Z^{}",
                self.dim
            )));
        }
        Ok(())
    }

    fn return_period(&self) -> Result<usize> {
        let horizon = 4 * self.n_states() + 16;
        let mut dist = LatticeDist::at_origin(&self.stationary);
        let mut g = 0usize;
        for n in 1..=horizon {
            dist = dist.step(self, usize::MAX)?;
            if dist.mass_at(Cell::ZERO) > 0.0 {
                g = gcd(g as i64, n as i64) as usize;
            }
        }
        if g == 0 {
            return Err(Error::InvalidChain(format!("no return to the zero level within {horizon} steps")));
        }
        Ok(g)
    }

    fn sample_edge(&self, state: usize, u: f64) -> &Edge {
        let cdf = &self.row_cdf[state];
        let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        &self.edges[state][k]
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_irreducible(edges: &[Vec<Edge>]) -> Result<()> {
    let n = edges.len();
    let reach = |rev: bool| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for (a, row) in edges.iter().enumerate() {
                for e in row {
                    let (from, to) = if rev { (e.to, a) } else { (a, e.to) };
                    if from == i && !seen[to] {
                        seen[to] = true;
                        queue.push_back(to);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    if reach(false) && reach(true) {
        Ok(())
    } else {
        Err(Error::InvalidChain("transition graph is not irreducible".into()))
    }
}

/// Solve `π (P - I) = 0`, `Σπ = 1` by Gaussian elimination with partial
/// pivoting, then polish with a few power iterations.
fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // Rows of A are the equations Σ_i π_i (P_ij - δ_ij) = 0, last one replaced by Σπ = 1.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| p[i][j] - if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidChain("singular stationary system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..n).map(|i| b[i] / a[i][i]).collect();
    for _ in 0..4 {
        let next: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * p[i][j]).sum()).collect();
        let s: f64 = next.iter().sum();
        pi = next.into_iter().map(|x| x / s).collect();
    }
    if pi.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidChain("stationary vector is not positive".into()));
    }
    Ok(pi)
}

/// A base point of the simulated chain. The point carries its own random
/// stream, so `step` is a deterministic function of the point (the stream
/// plays the role of the future of a shift-space point).
#[derive(Clone, Debug)]
pub struct MarkovPoint {
    pub state: usize,
    rng: StreamRng,
}

impl MarkovPoint {
    pub fn new(state: usize, rng: StreamRng) -> Self {
        MarkovPoint { state, rng }
    }
}

impl ExtensionSystem for MarkovExtension {
    type Point = MarkovPoint;

    fn step(&self, x: &MarkovPoint) -> Result<Step<MarkovPoint>> {
        let mut rng = x.rng.clone();
        let edge = self.sample_edge(x.state, rng.gen());
        Ok(Step {
            next: MarkovPoint { state: edge.to, rng },
            jump: edge.jump,
            symbol: Symbol::new(x.state as u32, edge.jump),
            grazing: false,
        })
    }

    fn sample(&self, rng: &mut StreamRng) -> MarkovPoint {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut state = self.n_states() - 1;
        for (i, p) in self.stationary.iter().enumerate() {
            acc += p;
            if u < acc {
                state = i;
                break;
            }
        }
        MarkovPoint { state, rng: rng.clone() }
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[cfg(test)]
mod tests;
