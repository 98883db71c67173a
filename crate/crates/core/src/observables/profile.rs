use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Cell;

/// Shells summed explicitly for power-law profiles before the integral
/// tail bound takes over.
const POWER_LAW_SHELLS: i64 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellWeight {
    pub cell: Cell,
    pub weight: f64,
}

/// How an observable is spread over the lattice: `u(x, ℓ) = w(ℓ) g_ℓ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CellWeightProfile {
    Finite { weights: Vec<CellWeight> },
    /// `w(ℓ) = amplitude · ρ^{‖ℓ‖₁}`.
    Geometric { amplitude: f64, rho: f64 },
    /// `w(ℓ) = amplitude / (1 + ‖ℓ‖₁)^exponent`.
    PowerLaw { amplitude: f64, exponent: f64 },
}

/// A certified value of `Σ_ℓ |w(ℓ)|`: the true sum lies in `[value, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightSum {
    pub value: f64,
    pub upper: f64,
    /// `closed_form`, `enumerated` or `partial_sum_with_tail_bound`.
    pub method: &'static str,
}

impl WeightSum {
    pub fn is_finite(&self) -> bool {
        self.upper.is_finite()
    }

    fn divergent() -> Self {
        WeightSum {
            value: f64::INFINITY,
            upper: f64::INFINITY,
            method: "divergent",
        }
    }
}

/// `Σ_{ℓ∈Z²} ρ^{‖ℓ‖₁} = ((1+ρ)/(1−ρ))²`.
pub fn geometric_lattice_sum(rho: f64) -> f64 {
    ((1.0 + rho) / (1.0 - rho)).powi(2)
}

/// `Σ_{‖ℓ‖₁>L} ρ^{‖ℓ‖₁} = 4 Σ_{m>L} m ρ^m = 4ρ^{L+1}((L+1) − Lρ)/(1−ρ)²`.
pub fn geometric_lattice_tail(rho: f64, radius: usize) -> f64 {
    let l = radius as f64;
    4.0 * rho.powf(l + 1.0) * ((l + 1.0) - l * rho) / (1.0 - rho).powi(2)
}

/// Number of cells with `‖ℓ‖₁ = m`.
fn shell_size(m: i64) -> f64 {
    if m == 0 {
        1.0
    } else {
        4.0 * m as f64
    }
}

impl CellWeightProfile {
    pub fn single(cell: Cell, weight: f64) -> Self {
        CellWeightProfile::Finite {
            weights: vec![CellWeight { cell, weight }],
        }
    }

    pub fn zero() -> Self {
        CellWeightProfile::Finite { weights: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            CellWeightProfile::Finite { weights } => {
                let mut seen = std::collections::BTreeSet::new();
                for w in weights {
                    if !w.weight.is_finite() {
                        return bad(format!("weight at {} is not finite", w.cell));
                    }
                    if !seen.insert(w.cell) {
                        return bad(format!("cell {} listed twice", w.cell));
                    }
                }
            }
            CellWeightProfile::Geometric { amplitude, rho } => {
                if !amplitude.is_finite() || !(*rho > 0.0 && *rho < 1.0) {
                    return bad(format!("geometric profile needs finite amplitude and rho in (0, 1), got {rho}"));
                }
            }
            CellWeightProfile::PowerLaw { amplitude, exponent } => {
                if !amplitude.is_finite() || !(*exponent > 0.0) {
                    return bad(format!("power-law profile needs finite amplitude and exponent > 0, got {exponent}"));
                }
            }
        }
        Ok(())
    }

    pub fn weight(&self, cell: Cell) -> f64 {
        match self {
            CellWeightProfile::Finite { weights } => {
                weights.iter().find(|w| w.cell == cell).map_or(0.0, |w| w.weight)
            }
            CellWeightProfile::Geometric { amplitude, rho } => amplitude * rho.powi(cell.l1() as i32),
            CellWeightProfile::PowerLaw { amplitude, exponent } => {
                amplitude / (1.0 + cell.l1() as f64).powf(*exponent)
            }
        }
    }

    /// `Σ_{‖ℓ‖₁ = m} |w(ℓ)|`.
    pub fn shell_abs_sum(&self, m: i64) -> f64 {
        match self {
            CellWeightProfile::Finite { weights } => {
                weights.iter().filter(|w| w.cell.l1() == m).map(|w| w.weight.abs()).sum()
            }
            _ => shell_size(m) * self.weight(Cell::new(m, 0)).abs(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            CellWeightProfile::Finite { weights } => weights.iter().map(|w| w.weight.abs()).fold(0.0, f64::max),
            _ => self.weight(Cell::ZERO).abs(),
        }
    }

    /// Largest `‖ℓ‖₁` with nonzero weight, if finite.
    pub fn support_radius(&self) -> Option<usize> {
        match self {
            CellWeightProfile::Finite { weights } => Some(
                weights.iter().filter(|w| w.weight != 0.0).map(|w| w.cell.l1() as usize).max().unwrap_or(0),
            ),
            _ => None,
        }
    }

    /// Certified `Σ_ℓ |w(ℓ)|`.
    pub fn abs_sum(&self) -> WeightSum {
        match self {
            CellWeightProfile::Finite { weights } => {
                let s = weights.iter().map(|w| w.weight.abs()).sum();
                WeightSum { value: s, upper: s, method: "enumerated" }
            }
            CellWeightProfile::Geometric { amplitude, rho } => {
                let s = amplitude.abs() * geometric_lattice_sum(*rho);
                WeightSum { value: s, upper: s, method: "closed_form" }
            }
            CellWeightProfile::PowerLaw { amplitude, exponent } => {
                if *amplitude == 0.0 {
                    return WeightSum { value: 0.0, upper: 0.0, method: "closed_form" };
                }
                // The m-th shell contributes 4m/(1+m)^s, so the series
                // converges iff s > 2.
                if *exponent <= 2.0 {
                    return WeightSum::divergent();
                }
                let partial: f64 = (0..=POWER_LAW_SHELLS).map(|m| self.shell_abs_sum(m)).sum();
                WeightSum {
                    value: partial,
                    upper: partial + self.abs_tail(POWER_LAW_SHELLS as usize),
                    method: "partial_sum_with_tail_bound",
                }
            }
        }
    }

    /// `Σ_ℓ w(ℓ)` with an absolute error bound.
    pub fn signed_sum(&self) -> (f64, f64) {
        match self {
            CellWeightProfile::Finite { weights } => (weights.iter().map(|w| w.weight).sum(), 0.0),
            _ => {
                let s = self.abs_sum();
                (s.value * self.weight(Cell::ZERO).signum(), s.upper - s.value)
            }
        }
    }

    /// Upper bound on `Σ_{‖ℓ‖₁ > radius} |w(ℓ)|`.
    pub fn abs_tail(&self, radius: usize) -> f64 {
        match self {
            CellWeightProfile::Finite { weights } => weights
                .iter()
                .filter(|w| w.cell.l1() as usize > radius)
                .map(|w| w.weight.abs())
                .sum(),
            CellWeightProfile::Geometric { amplitude, rho } => amplitude.abs() * geometric_lattice_tail(*rho, radius),
            CellWeightProfile::PowerLaw { amplitude, exponent } => {
                if *exponent <= 2.0 {
                    return f64::INFINITY;
                }
                // Σ_{m>M} 4m/(1+m)^s ≤ 4∫_M^∞ (1+t)^{1−s} dt.
                4.0 * amplitude.abs() * (1.0 + radius as f64).powf(2.0 - exponent) / (exponent - 2.0)
            }
        }
    }

    /// Smallest radius whose tail is at most `rel_tol` of the total.
    pub fn truncation_radius(&self, rel_tol: f64) -> Result<usize> {
        if let Some(r) = self.support_radius() {
            return Ok(r);
        }
        let total = self.abs_sum();
        if !total.is_finite() {
            return Err(Error::HypothesisFailed {
                hypothesis: "HYP1",
                detail: "cell weights are not summable, no truncation radius exists".into(),
            });
        }
        let target = rel_tol * total.value;
        let mut r = 0;
        while self.abs_tail(r) > target {
            r += 1;
            if r > 1_000_000 {
                return Err(Error::InvalidArgument("truncation radius above 10^6".into()));
            }
        }
        Ok(r)
    }

    /// Cells with `‖ℓ‖₁ ≤ radius` and nonzero weight, in a fixed order.
    pub fn support(&self, radius: usize) -> Vec<(Cell, f64)> {
        match self {
            CellWeightProfile::Finite { weights } => weights
                .iter()
                .filter(|w| w.weight != 0.0 && w.cell.l1() as usize <= radius)
                .map(|w| (w.cell, w.weight))
                .collect(),
            _ => (0..=radius as i64)
                .flat_map(Cell::shell)
                .map(|c| (c, self.weight(c)))
                .filter(|(_, w)| *w != 0.0)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct summation over every cell of a large diamond.
    fn brute_sum(profile: &CellWeightProfile, radius: i64) -> f64 {
        let mut s = 0.0;
        for x in -radius..=radius {
            for y in -radius..=radius {
                let c = Cell::new(x, y);
                if c.l1() <= radius {
                    s += profile.weight(c).abs();
                }
            }
        }
        s
    }

    #[test]
    fn geometric_closed_form_matches_enumeration() {
        for rho in [0.3, 0.5, 0.8] {
            let p = CellWeightProfile::Geometric { amplitude: 1.0, rho };
            let brute = brute_sum(&p, 200);
            assert!((p.abs_sum().value - brute).abs() < 1e-10, "rho={rho}");
        }
    }

    #[test]
    fn ten_shells_plus_tail_is_closed_form() {
        for rho in [0.3, 0.5, 0.8] {
            let p = CellWeightProfile::Geometric { amplitude: 2.0, rho };
            let partial: f64 = (0..=10).map(|m| p.shell_abs_sum(m)).sum();
            assert!((partial + p.abs_tail(10) - p.abs_sum().value).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_square_profile_diverges() {
        let p = CellWeightProfile::PowerLaw { amplitude: 1.0, exponent: 2.0 };
        // Partial sums grow like 4 ln M.
        let partial = |m: i64| (0..=m).map(|k| p.shell_abs_sum(k)).sum::<f64>();
        let (a, b) = (partial(1_000), partial(100_000));
        assert!(((b - a) / (100.0f64).ln() - 4.0).abs() < 0.01);
        assert!(!p.abs_sum().is_finite());
        assert!(p.truncation_radius(1e-4).is_err());
    }

    #[test]
    fn steeper_power_law_is_bracketed() {
        let p = CellWeightProfile::PowerLaw { amplitude: 1.0, exponent: 3.5 };
        let s = p.abs_sum();
        let brute = brute_sum(&p, 1500);
        assert!(s.value >= brute - 1e-9 && brute <= s.upper);
        assert!(s.upper - s.value < 1e-4);
    }

    #[test]
    fn truncation_radius_meets_tolerance() {
        let p = CellWeightProfile::Geometric { amplitude: 1.0, rho: 0.25 };
        let r = p.truncation_radius(1e-4).unwrap();
        assert!(p.abs_tail(r) <= 1e-4 * p.abs_sum().value);
        assert!(p.abs_tail(r - 1) > 1e-4 * p.abs_sum().value);
        let support = p.support(r);
        let direct: f64 = support.iter().map(|(_, w)| w).sum();
        assert!((direct + p.abs_tail(r) - p.abs_sum().value).abs() < 1e-12);
    }

    #[test]
    fn finite_profiles() {
        let p = CellWeightProfile::single(Cell::ZERO, 1.0);
        assert_eq!(p.abs_sum().value, 1.0);
        assert_eq!(p.truncation_radius(1e-4).unwrap(), 0);
        assert_eq!(CellWeightProfile::zero().signed_sum(), (0.0, 0.0));
        let dup = CellWeightProfile::Finite {
            weights: vec![CellWeight { cell: Cell::ZERO, weight: 1.0 }; 2],
        };
        assert!(dup.validate().is_err());
        assert!(CellWeightProfile::Geometric { amplitude: 1.0, rho: 1.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn geometric_tail_formula(rho in 0.05f64..0.9, l in 0usize..40) {
            let p = CellWeightProfile::Geometric { amplitude: 1.0, rho };
            let head: f64 = (0..=l as i64).map(|m| p.shell_abs_sum(m)).sum();
            prop_assert!((head + geometric_lattice_tail(rho, l) - geometric_lattice_sum(rho)).abs() < 1e-9);
        }
    }
}
