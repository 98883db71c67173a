//! Exact integer lattice arithmetic for the Z² fiber.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A lattice point ℓ ∈ Z². One-dimensional extensions keep `y == 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Cell {
    pub x: i64,
    pub y: i64,
}

impl Cell {
    pub const ZERO: Cell = Cell { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Cell { x, y }
    }

    pub fn l1(self) -> i64 {
        self.x.abs() + self.y.abs()
    }

    pub fn linf(self) -> i64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn is_zero(self) -> bool {
        self == Cell::ZERO
    }

    pub fn as_f64(self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }

    /// All cells with `|ℓ|₁ == m`, in a fixed order.
    pub fn shell(m: i64) -> impl Iterator<Item = Cell> {
        let range = if m == 0 { 0..1 } else { 0..4 * m };
        range.map(move |i| {
            if m == 0 {
                return Cell::ZERO;
            }
            let side = i / m;
            let t = i % m;
            match side {
                0 => Cell::new(m - t, t),
                1 => Cell::new(-t, m - t),
                2 => Cell::new(-m + t, -t),
                _ => Cell::new(t, -m + t),
            }
        })
    }
}

impl From<[i64; 2]> for Cell {
    fn from(v: [i64; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [i64; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Cell {
    type Output = Cell;
    fn add(self, o: Cell) -> Cell {
        Cell::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Cell {
    type Output = Cell;
    fn sub(self, o: Cell) -> Cell {
        Cell::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Cell {
    type Output = Cell;
    fn neg(self) -> Cell {
        Cell::new(-self.x, -self.y)
    }
}

impl AddAssign for Cell {
    fn add_assign(&mut self, o: Cell) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Cell {
    fn sub_assign(&mut self, o: Cell) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// One letter of an itinerary: the site visited (scatterer index for the
/// billiard, state for a Markov chain) and the lattice jump emitted there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub site: u32,
    pub jump: Cell,
}

impl Symbol {
    pub fn new(site: u32, jump: Cell) -> Self {
        Symbol { site, jump }
    }
}
