//! The Z^d-extension layer: `f(x, ℓ) = (f̄x, ℓ + ψ(x))` over any base system.

use std::collections::HashSet;

use crate::error::Result;
use crate::lattice::{Cell, Symbol};
use crate::rng::StreamRng;

/// One application of the base map together with everything the extension
/// needs from it.
#[derive(Clone, Debug)]
pub struct Step<P> {
    pub next: P,
    /// ψ(x): the lattice displacement emitted by this step.
    pub jump: Cell,
    /// Itinerary letter of the point the step started from.
    pub symbol: Symbol,
    /// The step passed within the grazing tolerance of a tangency.
    pub grazing: bool,
}

/// A probability-preserving base `(X̄, f̄, μ̄)` with a lattice cocycle ψ.
///
/// `step` must be deterministic in its argument and the set of jumps it can
/// emit must be finite. `sample` draws from the invariant probability μ̄.
pub trait ExtensionSystem: Sync {
    type Point: Clone + Send + Sync;

    fn step(&self, x: &Self::Point) -> Result<Step<Self::Point>>;

    fn sample(&self, rng: &mut StreamRng) -> Self::Point;

    /// Dimension of the lattice fiber (1 or 2).
    fn dim(&self) -> usize {
        2
    }
}

/// An orbit segment `x, f̄x, …, f̄ⁿx` with its cocycle sums.
///
/// `sums[j] = S_j(x)`, `symbols[j]` is the itinerary letter of `f̄ʲx`.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord<P> {
    pub points: Vec<P>,
    pub sums: Vec<Cell>,
    pub symbols: Vec<Symbol>,
    pub grazing_count: usize,
}

impl<P: Clone> TrajectoryRecord<P> {
    pub fn new() -> Self {
        TrajectoryRecord {
            points: Vec::new(),
            sums: Vec::new(),
            symbols: Vec::new(),
            grazing_count: 0,
        }
    }

    /// Number of steps recorded.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Refill in place with the orbit of `x`, reusing allocations.
    pub fn fill<S>(&mut self, system: &S, x: P, n: usize) -> Result<()>
    where
        S: ExtensionSystem<Point = P>,
    {
        self.points.clear();
        self.sums.clear();
        self.symbols.clear();
        self.grazing_count = 0;
        self.points.reserve(n + 1);
        self.sums.reserve(n + 1);
        self.symbols.reserve(n);

        let mut sum = Cell::ZERO;
        self.sums.push(sum);
        self.points.push(x);
        for j in 0..n {
            let step = system.step(&self.points[j])?;
            sum += step.jump;
            self.sums.push(sum);
            self.symbols.push(step.symbol);
            self.grazing_count += usize::from(step.grazing);
            self.points.push(step.next);
        }
        Ok(())
    }

    /// `S_{b}(f̄ᵃ x) = S_{a+b}(x) - S_a(x)`.
    pub fn increment(&self, a: usize, b: usize) -> Cell {
        self.sums[a + b] - self.sums[a]
    }

    /// First return of `(x, 0)` to the zero cell within the recorded segment.
    pub fn first_return(&self) -> ReturnTime {
        match self.sums.iter().skip(1).position(|s| s.is_zero()) {
            Some(i) => ReturnTime::Returned(i + 1),
            None => ReturnTime::ExceededCap(self.len()),
        }
    }
}

impl<P: Clone> Default for TrajectoryRecord<P> {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of a capped first-return search. Censoring is a value, not an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReturnTime {
    Returned(usize),
    /// No return up to and including the cap.
    ExceededCap(usize),
}

impl ReturnTime {
    pub fn value(self) -> Option<usize> {
        match self {
            ReturnTime::Returned(n) => Some(n),
            ReturnTime::ExceededCap(_) => None,
        }
    }

    /// `1_{φ > n}`, well defined as long as `n` does not exceed the cap.
    pub fn exceeds(self, n: usize) -> bool {
        match self {
            ReturnTime::Returned(t) => t > n,
            ReturnTime::ExceededCap(cap) => {
                debug_assert!(n <= cap);
                true
            }
        }
    }
}

pub fn birkhoff_sum<S: ExtensionSystem>(
    system: &S,
    x: &S::Point,
    n: usize,
) -> Result<TrajectoryRecord<S::Point>> {
    let mut rec = TrajectoryRecord::new();
    rec.fill(system, x.clone(), n)?;
    Ok(rec)
}

/// `φ(x) = min{1 ≤ n ≤ cap : S_n(x) = 0}`, stepping only as far as needed.
pub fn first_return_time<S: ExtensionSystem>(system: &S, x: &S::Point, cap: usize) -> Result<ReturnTime> {
    let mut point = x.clone();
    let mut sum = Cell::ZERO;
    for n in 1..=cap {
        let step = system.step(&point)?;
        sum += step.jump;
        if sum.is_zero() {
            return Ok(ReturnTime::Returned(n));
        }
        point = step.next;
    }
    Ok(ReturnTime::ExceededCap(cap))
}

/// Evaluates `Σ_{j=0}^{n} 1_{φ>n-j}(f̄ʲx) · 1_{S_j(x)=0}` term by term from a
/// single record and reports whether it equals 1.
///
/// `φ(f̄ʲx) > n - j` iff `S_m(x) ≠ S_j(x)` for every `m ∈ (j, n]`, which is
/// read off by sweeping the record backwards.
pub fn renewal_pathwise_sum<P: Clone>(record: &TrajectoryRecord<P>, n: usize) -> usize {
    assert!(n <= record.len(), "record shorter than n");
    let mut later: HashSet<Cell> = HashSet::with_capacity(n + 1);
    let mut total = 0;
    for j in (0..=n).rev() {
        let s_j = record.sums[j];
        let no_return = !later.contains(&s_j);
        if no_return && s_j.is_zero() {
            total += 1;
        }
        later.insert(s_j);
    }
    total
}

pub fn renewal_pathwise_check<P: Clone>(record: &TrajectoryRecord<P>, n: usize) -> bool {
    renewal_pathwise_sum(record, n) == 1
}
