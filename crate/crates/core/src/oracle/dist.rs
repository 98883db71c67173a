//! Dense bounding-box distributions over (state, ℓ) and their exact propagation.

use super::MarkovExtension;
use crate::error::{Error, Result};
use crate::lattice::Cell;

/// Default limit on `n_states × box area` of a propagated distribution.
pub const DEFAULT_CELL_BUDGET: usize = 4_000_000;

/// Signed masses on `{0..n_states} × box`, where the box is the rectangle
/// `origin + [0, width) × [0, height)` of Z². Layout is `[state][y][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDist {
    n_states: usize,
    origin: Cell,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LatticeDist {
    pub fn zeros(n_states: usize, origin: Cell, width: usize, height: usize) -> Self {
        LatticeDist {
            n_states,
            origin,
            width,
            height,
            data: vec![0.0; n_states * width * height],
        }
    }

    /// Unit mass at `(state, 0)`.
    pub fn point(n_states: usize, state: usize) -> Self {
        let mut d = Self::zeros(n_states, Cell::ZERO, 1, 1);
        d.data[state] = 1.0;
        d
    }

    /// Masses `weights[state]` at ℓ = 0.
    pub fn at_origin(weights: &[f64]) -> Self {
        let mut d = Self::zeros(weights.len(), Cell::ZERO, 1, 1);
        d.data.copy_from_slice(weights);
        d
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn origin(&self) -> Cell {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn index(&self, state: usize, cell: Cell) -> Option<usize> {
        let dx = cell.x - self.origin.x;
        let dy = cell.y - self.origin.y;
        if dx < 0 || dy < 0 || dx as usize >= self.width || dy as usize >= self.height {
            return None;
        }
        Some((state * self.height + dy as usize) * self.width + dx as usize)
    }

    pub fn get(&self, state: usize, cell: Cell) -> f64 {
        self.index(state, cell).map_or(0.0, |i| self.data[i])
    }

    pub fn add(&mut self, state: usize, cell: Cell, mass: f64) {
        let i = self.index(state, cell).expect("cell outside box");
        self.data[i] += mass;
    }

    /// Mass at `cell` summed over states.
    pub fn mass_at(&self, cell: Cell) -> f64 {
        (0..self.n_states).map(|s| self.get(s, cell)).sum()
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    pub fn state_totals(&self) -> Vec<f64> {
        let area = self.width * self.height;
        self.data.chunks(area).map(pairwise_sum).collect()
    }

    /// Per-state masses at `cell`, which are then set to zero.
    pub fn take_at(&mut self, cell: Cell) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| match self.index(s, cell) {
                Some(i) => std::mem::take(&mut self.data[i]),
                None => 0.0,
            })
            .collect()
    }

    /// Multiplies the masses of state `s` by `w[s]`.
    pub fn scale_states(&mut self, w: &[f64]) {
        let area = self.width * self.height;
        for (chunk, c) in self.data.chunks_mut(area).zip(w) {
            chunk.iter_mut().for_each(|m| *m *= c);
        }
    }

    /// Iterate `(state, cell, mass)` over nonzero entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Cell, f64)> + '_ {
        let (w, h) = (self.width, self.height);
        self.data.iter().enumerate().filter(|(_, m)| **m != 0.0).map(move |(i, &m)| {
            let state = i / (w * h);
            let rest = i % (w * h);
            let cell = self.origin + Cell::new((rest % w) as i64, (rest / w) as i64);
            (state, cell, m)
        })
    }

    /// One exact step of the extended chain: mass at `(i, ℓ)` moves to
    /// `(j, ℓ + J_ij)` with weight `P_ij`.
    pub fn step(&self, chain: &MarkovExtension, budget: usize) -> Result<LatticeDist> {
        let (lo, hi) = chain.jump_extent();
        let width = self.width + (hi.x - lo.x) as usize;
        let height = self.height + (hi.y - lo.y) as usize;
        let needed = self.n_states * width * height;
        if needed > budget {
            return Err(Error::MemoryBound { needed, budget });
        }
        let mut next = LatticeDist::zeros(self.n_states, self.origin + lo, width, height);
        let src_area = self.width * self.height;
        let dst_area = width * height;
        for i in 0..self.n_states {
            let src = &self.data[i * src_area..(i + 1) * src_area];
            for edge in chain.edges(i) {
                let dx = (edge.jump.x - lo.x) as usize;
                let dy = (edge.jump.y - lo.y) as usize;
                let dst = &mut next.data[edge.to * dst_area..(edge.to + 1) * dst_area];
                for (y, src_row) in src.chunks_exact(self.width).enumerate() {
                    let start = (y + dy) * width + dx;
                    let dst_row = &mut dst[start..start + self.width];
                    for (d, s) in dst_row.iter_mut().zip(src_row) {
                        *d += edge.prob * s;
                    }
                }
            }
        }
        Ok(next)
    }

    /// `Σ_{a,b} self(s, a) · other(s', b)` over pairs with `a + b = target`,
    /// contracted over states by `pair(s, s')`.
    pub fn convolve_at<F>(&self, other: &LatticeDist, target: Cell, pair: F) -> f64
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut total = 0.0;
        for s in 0..self.n_states {
            for s2 in 0..other.n_states {
                let w = pair(s, s2);
                if w == 0.0 {
                    continue;
                }
                let mut acc = Vec::with_capacity(self.height);
                for y in 0..self.height {
                    let cy = self.origin.y + y as i64;
                    let mut row = 0.0;
                    for x in 0..self.width {
                        let a = self.data[(s * self.height + y) * self.width + x];
                        if a == 0.0 {
                            continue;
                        }
                        let cx = self.origin.x + x as i64;
                        row += a * other.get(s2, target - Cell::new(cx, cy));
                    }
                    acc.push(row);
                }
                total += w * pairwise_sum(&acc);
            }
        }
        total
    }
}

/// Pairwise (cascade) summation in a fixed tree, so the result depends only
/// on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
