//! Separation time, the dynamical metric `d_ϑ` and the continuity
//! quantities defined through it, on the billiard.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CylinderFunction;
use crate::billiard::{time_reversal, BilliardTable, PhasePoint};
use crate::error::{Error, Result};
use crate::lattice::Symbol;
use crate::rng::{RngSpec, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationParams {
    pub theta: f64,
    pub cap: usize,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams { theta: 0.5, cap: 32 }
    }
}

impl SeparationParams {
    pub fn new(theta: f64, cap: usize) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
        }
        Ok(SeparationParams { theta, cap })
    }
}

/// Walks forward and backward from a point one collision at a time.
struct Itinerary<'a> {
    table: &'a BilliardTable,
    fwd: PhasePoint,
    back: PhasePoint,
}

impl<'a> Itinerary<'a> {
    fn new(table: &'a BilliardTable, x: &PhasePoint) -> Self {
        Itinerary {
            table,
            fwd: *x,
            back: time_reversal(x),
        }
    }

    /// Symbol of `f̄ʲx` for the next `j = 0, 1, …`.
    fn next_forward(&mut self, j: i64) -> Result<Symbol> {
        let rec = self.table.billiard_map(&self.fwd)?;
        if rec.grazing {
            return Err(Error::Grazing { step: j + 1, cos_phi: rec.next.phi.cos() });
        }
        let s = Symbol::new(self.fwd.scatterer as u32, rec.psi);
        self.fwd = rec.next;
        Ok(s)
    }

    /// Symbol of `f̄⁻ᵐx` for the next `m = 1, 2, …`.
    fn next_backward(&mut self, m: i64) -> Result<Symbol> {
        let rec = self.table.billiard_map(&self.back)?;
        if rec.grazing {
            return Err(Error::Grazing { step: -m, cos_phi: rec.next.phi.cos() });
        }
        self.back = rec.next;
        Ok(Symbol::new(rec.next.scatterer as u32, -rec.psi))
    }
}

/// Largest `k ≤ cap`, `k ≥ 1`, such that the itineraries of `x` and `y`
/// agree on `[-k, k]`; 0 if there is none. `cap` stands for "at least cap".
pub fn separation_time(table: &BilliardTable, x: &PhasePoint, y: &PhasePoint, cap: usize) -> Result<usize> {
    if x == y {
        return Ok(cap);
    }
    let mut a = Itinerary::new(table, x);
    let mut b = Itinerary::new(table, y);
    if a.next_forward(0)? != b.next_forward(0)? {
        return Ok(0);
    }
    for k in 1..=cap {
        let j = k as i64;
        if a.next_forward(j)? != b.next_forward(j)? || a.next_backward(j)? != b.next_backward(j)? {
            return Ok(k - 1);
        }
    }
    Ok(cap)
}

/// `ϑ^{s(x,y)}`, and 0 for `x = y`.
pub fn d_theta(table: &BilliardTable, x: &PhasePoint, y: &PhasePoint, params: &SeparationParams) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let s = separation_time(table, x, y, params.cap)?;
    Ok(params.theta.powi(s as i32))
}

/// A function on the billiard phase space, either given by an itinerary
/// table or as an opaque closure.
#[derive(Clone, Copy)]
pub enum LocalFunction<'a> {
    Cylinder(&'a CylinderFunction),
    BlackBox(&'a (dyn Fn(&PhasePoint) -> f64 + Sync)),
}

impl LocalFunction<'_> {
    pub fn eval(&self, table: &BilliardTable, x: &PhasePoint) -> Result<f64> {
        match self {
            LocalFunction::Cylinder(g) => {
                let window = table.itinerary(x, g.depth(), g.depth())?;
                Ok(g.eval(&window))
            }
            LocalFunction::BlackBox(f) => Ok(f(x)),
        }
    }
}

/// Nearby point: same scatterer, angles moved by about `10^-e` with a
/// random exponent, so separation times spread over many scales.
fn perturb(x: &PhasePoint, rng: &mut StreamRng) -> PhasePoint {
    let scale = 10f64.powf(-rng.gen_range(0.5..10.0));
    let dtheta = scale * (2.0 * rng.gen::<f64>() - 1.0);
    let dphi = scale * (2.0 * rng.gen::<f64>() - 1.0);
    let phi = (x.phi + dphi).clamp(-FRAC_PI_2 + 1e-6, FRAC_PI_2 - 1e-6);
    PhasePoint::new(x.scatterer, x.theta + dtheta, phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `max |g(x) − g(y)| / d_ϑ(x, y)` over the sampled pairs, a lower
    /// bound on `L_ϑ(g)`.
    pub lower: f64,
    /// `2·sup|g|/ϑ^k` for cylinder functions of depth k.
    pub upper: Option<f64>,
    pub pairs: usize,
    /// Pairs dropped because a grazing collision made `s` undefined.
    pub excluded: usize,
}

pub fn lipschitz_estimate(
    table: &BilliardTable,
    g: LocalFunction<'_>,
    params: &SeparationParams,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let mut rng = RngSpec::new(seed, 0).rng();
    let mut lower: f64 = 0.0;
    let mut excluded = 0;
    for _ in 0..n_pairs {
        let x = table.sample_mu_bar(&mut rng);
        let y = if rng.gen_bool(0.25) {
            table.sample_mu_bar(&mut rng)
        } else {
            perturb(&x, &mut rng)
        };
        let pair = (|| -> Result<f64> {
            let d = d_theta(table, &x, &y, params)?;
            if d == 0.0 {
                return Ok(0.0);
            }
            Ok((g.eval(table, &x)? - g.eval(table, &y)?).abs() / d)
        })();
        match pair {
            Ok(r) => lower = lower.max(r),
            Err(Error::Grazing { .. }) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    let upper = match g {
        LocalFunction::Cylinder(c) => Some(c.lipschitz_upper(params.theta)),
        LocalFunction::BlackBox(_) => None,
    };
    Ok(LipschitzReport {
        lower,
        upper,
        pairs: n_pairs,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub value: f64,
    /// Exact for cylinder functions; otherwise a sampled lower bound.
    pub exact: bool,
    pub probes_matched: usize,
}

/// `ω_{-k_back}^{k_fwd}(g, x)`: the oscillation of `g` over points sharing
/// the itinerary of `x` on `[-k_back, k_fwd]`.
pub fn continuity_modulus(
    table: &BilliardTable,
    g: LocalFunction<'_>,
    x: &PhasePoint,
    k_back: usize,
    k_fwd: usize,
    n_probe: usize,
    seed: u64,
) -> Result<ModulusReport> {
    if let LocalFunction::Cylinder(c) = g {
        let half = c.depth().max(k_back).max(k_fwd);
        let window = table.itinerary(x, half, half)?;
        return Ok(ModulusReport {
            value: c.modulus(&window, k_back, k_fwd),
            exact: true,
            probes_matched: 0,
        });
    }
    let target = table.itinerary(x, k_back, k_fwd)?;
    let gx = g.eval(table, x)?;
    let mut rng = RngSpec::new(seed, 0).rng();
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for _ in 0..n_probe {
        let y = perturb(x, &mut rng);
        match table.itinerary(&y, k_back, k_fwd) {
            Ok(w) if w == target => {
                matched += 1;
                worst = worst.max((gx - g.eval(table, &y)?).abs());
            }
            Ok(_) | Err(Error::Grazing { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ModulusReport {
        value: worst,
        exact: false,
        probes_matched: matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> BilliardTable {
        BilliardTable::default_table().unwrap()
    }

    fn pairs(n: usize, seed: u64) -> Vec<(PhasePoint, PhasePoint)> {
        let t = table();
        let mut rng = RngSpec::new(seed, 0).rng();
        (0..n)
            .map(|_| {
                let x = t.sample_mu_bar(&mut rng);
                let y = perturb(&x, &mut rng);
                (x, y)
            })
            .collect()
    }

    #[test]
    fn identical_points() {
        let t = table();
        let x = PhasePoint::new(0, 0.3, 0.1);
        assert_eq!(separation_time(&t, &x, &x, 32).unwrap(), 32);
        assert_eq!(d_theta(&t, &x, &x, &SeparationParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn different_scatterers_separate_at_once() {
        let t = table();
        let x = PhasePoint::new(0, 0.3, 0.1);
        let y = PhasePoint::new(1, 0.3, 0.1);
        assert_eq!(separation_time(&t, &x, &y, 32).unwrap(), 0);
        assert_eq!(d_theta(&t, &x, &y, &SeparationParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn metric_values() {
        let p = SeparationParams::new(0.5, 32).unwrap();
        assert_eq!(p.theta.powi(3), 0.125);
        assert!(SeparationParams::new(1.0, 3).is_err());
    }

    #[test]
    fn separation_is_symmetric_and_agrees_with_itineraries() {
        let t = table();
        let mut spread = [0usize; 4];
        for (x, y) in pairs(10_000, 5) {
            let (Ok(a), Ok(b)) = (separation_time(&t, &x, &y, 12), separation_time(&t, &y, &x, 12)) else {
                continue;
            };
            assert_eq!(a, b);
            spread[a.min(3)] += 1;
        }
        assert!(spread.iter().all(|&c| c > 0), "{spread:?}");
        for (x, y) in pairs(200, 6) {
            let Ok(s) = separation_time(&t, &x, &y, 8) else { continue };
            let (Ok(wx), Ok(wy)) = (t.itinerary(&x, 9, 9), t.itinerary(&y, 9, 9)) else {
                continue;
            };
            let agree = |k: usize| wx[9 - k..=9 + k] == wy[9 - k..=9 + k];
            if s >= 1 {
                assert!(agree(s));
            }
            if s < 8 {
                assert!(!agree(s + 1));
            }
        }
    }

    #[test]
    fn ultrametric_on_triples() {
        let t = table();
        let p = SeparationParams::new(0.5, 16).unwrap();
        let mut rng = RngSpec::new(17, 0).rng();
        let mut checked = 0;
        for _ in 0..10_000 {
            let x = t.sample_mu_bar(&mut rng);
            let y = perturb(&x, &mut rng);
            let z = perturb(&y, &mut rng);
            let (Ok(xy), Ok(yz), Ok(xz)) = (d_theta(&t, &x, &y, &p), d_theta(&t, &y, &z, &p), d_theta(&t, &x, &z, &p))
            else {
                continue;
            };
            assert!(xz <= xy.max(yz), "{xz} > max({xy}, {yz})");
            checked += 1;
        }
        assert!(checked > 9_900);
    }

    #[test]
    fn lipschitz_bounds() {
        let t = table();
        let p = SeparationParams::default();
        let c = CylinderFunction::constant(3.0);
        assert_eq!(lipschitz_estimate(&t, LocalFunction::Cylinder(&c), &p, 200, 1).unwrap().lower, 0.0);

        let ind = CylinderFunction::site_indicator(0);
        let r = lipschitz_estimate(&t, LocalFunction::Cylinder(&ind), &p, 2000, 2).unwrap();
        assert!(r.lower >= 1.0);
        assert!(r.lower <= r.upper.unwrap());

        let g = CylinderFunction::from_sites(1, &[(&[0, 1, 0], 1.0), (&[1, 0, 1], -1.0)], 0.25, false).unwrap();
        let r = lipschitz_estimate(&t, LocalFunction::Cylinder(&g), &p, 3000, 3).unwrap();
        assert!(r.lower <= r.upper.unwrap() && r.upper.unwrap() == 4.0);
    }

    #[test]
    fn modulus_of_cylinders_and_constants() {
        let t = table();
        let g = CylinderFunction::from_sites(1, &[(&[0, 1, 0], 1.0), (&[1, 0, 1], -1.0)], 0.25, false).unwrap();
        let x = PhasePoint::new(0, 1.0, 0.2);
        let full = continuity_modulus(&t, LocalFunction::Cylinder(&g), &x, 1, 1, 0, 0).unwrap();
        assert!(full.exact && full.value == 0.0);
        let coarse = continuity_modulus(&t, LocalFunction::Cylinder(&g), &x, 0, 0, 0, 0).unwrap();
        assert!(coarse.value <= g.oscillation());

        let f = |_: &PhasePoint| 7.0;
        let flat = continuity_modulus(&t, LocalFunction::BlackBox(&f), &x, 0, 0, 100, 1).unwrap();
        assert_eq!(flat.value, 0.0);
        assert!(!flat.exact);

        // The same cylinder probed as a black box never exceeds the exact value.
        let boxed = |y: &PhasePoint| LocalFunction::Cylinder(&g).eval(&t, y).unwrap_or(0.25);
        let sampled = continuity_modulus(&t, LocalFunction::BlackBox(&boxed), &x, 0, 0, 400, 2).unwrap();
        assert!(sampled.probes_matched > 0);
        assert!(sampled.value <= coarse.value + 1e-12);
    }
}
