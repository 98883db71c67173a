//! The Z²-periodic Lorentz gas with disc scatterers.
//!
//! A reflected vector on the quotient cell is a [`PhasePoint`]
//! `(scatterer, θ, φ)`: the base point is `c_i + r_i(cos θ, sin θ)`, `θ` is
//! measured from the x axis, and the outgoing direction makes angle `φ` with
//! the outward normal, so the velocity is `(cos(θ+φ), sin(θ+φ))`.

mod geometry;
mod table;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use geometry::{ray_circle_entry, reflect, Vec2};
pub use table::{BilliardTable, ScattererSpec, ValidationOptions, EPS_SEP};

use crate::error::{Error, Result};
use crate::extension::{ExtensionSystem, Step};
use crate::lattice::{Cell, Symbol};
use crate::rng::StreamRng;
use table::Geometry;

/// Tangency tolerance on `|cos φ|` of a collision.
pub const EPS_GRAZE: f64 = 1e-8;

/// Launch positions are moved this far along the outgoing direction.
const PUSH_OFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub scatterer: usize,
    pub theta: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(scatterer: usize, theta: f64, phi: f64) -> Self {
        PhasePoint { scatterer, theta, phi }
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.theta + self.phi)
    }

    /// Base point in the plane for the copy of the scatterer in `cell`.
    pub fn position(&self, table: &BilliardTable, cell: Cell) -> Vec2 {
        let s = &table.scatterers()[self.scatterer];
        s.center_vec() + Vec2::new(cell.x as f64, cell.y as f64) + self.normal() * s.radius
    }
}

/// A point `(x̄, ℓ)` of the extension `X̄ × Z²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPhasePoint {
    pub base: PhasePoint,
    pub cell: Cell,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionRecord {
    pub next: PhasePoint,
    /// Cell of the hit disc minus cell of the launching disc.
    pub psi: Cell,
    pub flight: f64,
    /// `|cos φ'| < EPS_GRAZE`; the record is still returned.
    pub grazing: bool,
}

pub(crate) fn launch(geometry: &Geometry, x: &PhasePoint) -> (Vec2, Vec2) {
    let s = &geometry.scatterers[x.scatterer];
    let dir = x.direction();
    let pos = s.center_vec() + x.normal() * s.radius + dir * PUSH_OFF;
    (pos, dir)
}

pub(crate) fn sample_point<R: Rng>(geometry: &Geometry, rng: &mut R) -> PhasePoint {
    let u: f64 = rng.gen();
    let scatterer = geometry
        .perimeter_cdf
        .iter()
        .position(|&c| u < c)
        .unwrap_or(geometry.scatterers.len() - 1);
    let theta = TAU * rng.gen::<f64>();
    // density cos φ / 2 on (-π/2, π/2)
    let phi = (2.0 * rng.gen::<f64>() - 1.0).asin();
    PhasePoint::new(scatterer, theta, phi)
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl BilliardTable {
    /// Follow the ray from `position` along the unit `direction` to the first
    /// disc, reflect there and report the outgoing phase point on the hit
    /// disc. `source` names the disc the ray leaves from (skipped, and its
    /// cell is the origin for ψ); without it ψ is measured from the cell
    /// containing `position`.
    pub fn next_collision(
        &self,
        position: Vec2,
        direction: Vec2,
        source: Option<(usize, Cell)>,
    ) -> Result<CollisionRecord> {
        let origin_cell = match source {
            Some((_, c)) => c,
            None => Cell::new(position.x.floor() as i64, position.y.floor() as i64),
        };
        let hit = match self.geometry.cast(position, direction, source, self.horizon_bound()) {
            Some(hit) => hit,
            None => {
                self.invalidate();
                return Err(Error::NoCollisionWithinBound {
                    bound: self.horizon_bound(),
                    x: position.x,
                    y: position.y,
                    dx: direction.x,
                    dy: direction.y,
                });
            }
        };
        let s = &self.scatterers()[hit.scatterer];
        let center = s.center_vec() + Vec2::new(hit.cell.x as f64, hit.cell.y as f64);
        let point = position + direction * hit.t;
        let normal = (point - center).normalized();
        let out = reflect(direction, normal);
        let cos_phi = out.dot(normal);
        let phi = normal.cross(out).atan2(cos_phi);
        Ok(CollisionRecord {
            next: PhasePoint::new(hit.scatterer, wrap_angle(normal.angle()), phi),
            psi: hit.cell - origin_cell,
            flight: hit.t,
            grazing: cos_phi.abs() < EPS_GRAZE,
        })
    }

    /// `f̄` on the quotient cell, with `ψ(x)`.
    pub fn billiard_map(&self, x: &PhasePoint) -> Result<CollisionRecord> {
        let (pos, dir) = launch(&self.geometry, x);
        let mut rec = self.next_collision(pos, dir, Some((x.scatterer, Cell::ZERO)))?;
        rec.flight += PUSH_OFF;
        Ok(rec)
    }

    /// `f(x, ℓ) = (f̄x, ℓ + ψ(x))`.
    pub fn lorentz_map(&self, x: &ExtendedPhasePoint) -> Result<ExtendedPhasePoint> {
        let rec = self.billiard_map(&x.base)?;
        Ok(ExtendedPhasePoint {
            base: rec.next,
            cell: x.cell + rec.psi,
        })
    }

    /// Draw from μ̄: scatterer ∝ perimeter, θ uniform, φ with density ∝ cos φ.
    pub fn sample_mu_bar<R: Rng>(&self, rng: &mut R) -> PhasePoint {
        sample_point(&self.geometry, rng)
    }

    /// Symbols `(scatterer, ψ)` of the collisions `j = -k_back ..= k_fwd`
    /// along the orbit of `x`; entry `k_back` is `x` itself. The backward part
    /// is read off the forward orbit of the time-reversed point, using
    /// `f̄⁻ᵐ = R f̄ᵐ R` and `ψ(f̄⁻¹y) = -ψ(Ry)`.
    pub fn itinerary(&self, x: &PhasePoint, k_back: usize, k_fwd: usize) -> Result<Vec<Symbol>> {
        let mut symbols = Vec::with_capacity(k_back + k_fwd + 1);

        let mut back = Vec::with_capacity(k_back);
        let mut y = time_reversal(x);
        for m in 1..=k_back {
            let rec = self.billiard_map(&y)?;
            if rec.grazing {
                return Err(grazing_error(-(m as i64), &rec));
            }
            back.push(Symbol::new(rec.next.scatterer as u32, -rec.psi));
            y = rec.next;
        }
        symbols.extend(back.into_iter().rev());

        let mut z = *x;
        for j in 0..=k_fwd {
            let rec = self.billiard_map(&z)?;
            if rec.grazing {
                return Err(grazing_error(j as i64 + 1, &rec));
            }
            symbols.push(Symbol::new(z.scatterer as u32, rec.psi));
            z = rec.next;
        }
        Ok(symbols)
    }
}

fn grazing_error(step: i64, rec: &CollisionRecord) -> Error {
    Error::Grazing {
        step,
        cos_phi: rec.next.phi.cos(),
    }
}

/// Velocity reversal re-expressed as an outgoing vector: `φ ↦ -φ`.
pub fn time_reversal(x: &PhasePoint) -> PhasePoint {
    PhasePoint::new(x.scatterer, x.theta, -x.phi)
}

/// Reflection angle of a sample in `(-π/2, π/2)`.
pub fn phi_cdf(phi: f64) -> f64 {
    ((1.0 + phi.clamp(-PI / 2.0, PI / 2.0).sin()) / 2.0).clamp(0.0, 1.0)
}

impl ExtensionSystem for BilliardTable {
    type Point = PhasePoint;

    fn step(&self, x: &PhasePoint) -> Result<Step<PhasePoint>> {
        let rec = self.billiard_map(x)?;
        Ok(Step {
            next: rec.next,
            jump: rec.psi,
            symbol: Symbol::new(x.scatterer as u32, rec.psi),
            grazing: rec.grazing,
        })
    }

    fn sample(&self, rng: &mut StreamRng) -> PhasePoint {
        self.sample_mu_bar(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::birkhoff_sum;
    use crate::rng::RngSpec;

    fn table() -> BilliardTable {
        BilliardTable::validate(
            BilliardTable::default_scatterers(),
            &ValidationOptions {
                n_rays: 20_000,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn head_on_collision() {
        let t = table();
        let rec = t
            .next_collision(Vec2::new(0.45, 0.0), Vec2::new(1.0, 0.0), Some((0, Cell::ZERO)))
            .unwrap();
        assert_eq!(rec.psi, Cell::new(1, 0));
        assert_eq!(rec.next.scatterer, 0);
        assert!((rec.flight - 0.1).abs() < 1e-15);
        assert!((rec.next.theta - PI).abs() < 1e-12);
        assert!(rec.next.phi.abs() < 1e-12);
    }

    #[test]
    fn billiard_map_on_symmetry_axis() {
        let t = table();
        let rec = t.billiard_map(&PhasePoint::new(0, 0.0, 0.0)).unwrap();
        assert_eq!(rec.psi, Cell::new(1, 0));
        assert_eq!(rec.next.scatterer, 0);
        assert!((rec.next.theta - PI).abs() < 1e-12);
        assert!(rec.next.phi.abs() < 1e-12);
        assert!((rec.flight - 0.1).abs() < 1e-11);
    }

    #[test]
    fn lorentz_map_shifts_cells() {
        let t = table();
        let x = ExtendedPhasePoint {
            base: PhasePoint::new(0, 0.0, 0.0),
            cell: Cell::ZERO,
        };
        assert_eq!(t.lorentz_map(&x).unwrap().cell, Cell::new(1, 0));

        let mut rng = RngSpec::new(11, 0).rng();
        for _ in 0..200 {
            let base = t.sample_mu_bar(&mut rng);
            let k = Cell::new(rng.gen_range(-5..5), rng.gen_range(-5..5));
            let at0 = t.lorentz_map(&ExtendedPhasePoint { base, cell: Cell::ZERO }).unwrap();
            let atk = t.lorentz_map(&ExtendedPhasePoint { base, cell: k }).unwrap();
            assert_eq!(atk.base, at0.base);
            assert_eq!(atk.cell, at0.cell + k);
        }
    }

    #[test]
    fn iterated_lorentz_cell_is_birkhoff_sum() {
        let t = table();
        let mut rng = RngSpec::new(12, 0).rng();
        for _ in 0..20 {
            let base = t.sample_mu_bar(&mut rng);
            let rec = birkhoff_sum(&t, &base, 50).unwrap();
            let mut x = ExtendedPhasePoint { base, cell: Cell::ZERO };
            for _ in 0..50 {
                x = t.lorentz_map(&x).unwrap();
            }
            assert_eq!(x.cell, rec.sums[50]);
            assert_eq!(x.base, rec.points[50]);
        }
    }

    #[test]
    fn time_reversal_is_an_involution() {
        let x = PhasePoint::new(1, 2.5, -0.7);
        assert_eq!(time_reversal(&time_reversal(&x)), x);
        let y = PhasePoint::new(0, 1.0, 0.0);
        assert_eq!(time_reversal(&y).phi, 0.0);
    }

    #[test]
    fn reversal_conjugates_map_to_inverse() {
        let t = table();
        let mut rng = RngSpec::new(13, 0).rng();
        let mut checked = 0;
        for _ in 0..2000 {
            let x = t.sample_mu_bar(&mut rng);
            let fx = t.billiard_map(&x).unwrap();
            if x.phi.cos() < 0.01 || fx.next.phi.cos() < 0.01 {
                continue;
            }
            let back = t.billiard_map(&time_reversal(&fx.next)).unwrap();
            let y = time_reversal(&back.next);
            assert_eq!(y.scatterer, x.scatterer);
            assert_eq!(back.psi, -fx.psi);
            let dtheta = (y.theta - x.theta + PI).rem_euclid(TAU) - PI;
            assert!(dtheta.abs() < 1e-9 && (y.phi - x.phi).abs() < 1e-9);
            checked += 1;
        }
        assert!(checked > 1500);
    }

    #[test]
    fn outgoing_directions_are_unit_and_flights_positive() {
        let t = table();
        let mut rng = RngSpec::new(14, 0).rng();
        for _ in 0..5000 {
            let x = t.sample_mu_bar(&mut rng);
            let rec = t.billiard_map(&x).unwrap();
            assert!(rec.flight > 0.0 && rec.flight <= t.horizon_bound());
            assert!((rec.next.direction().norm() - 1.0).abs() < 1e-12);
            assert!(rec.next.phi.abs() < PI / 2.0);
            assert!(rec.psi.linf() <= t.max_psi());
        }
    }

    #[test]
    fn itinerary_windows_nest() {
        let t = table();
        let mut rng = RngSpec::new(15, 0).rng();
        for _ in 0..200 {
            let x = t.sample_mu_bar(&mut rng);
            let short = t.itinerary(&x, 2, 3).unwrap();
            let long = t.itinerary(&x, 5, 7).unwrap();
            assert_eq!(&long[3..3 + short.len()], &short[..]);
            let zero = t.itinerary(&x, 0, 0).unwrap();
            let rec = t.billiard_map(&x).unwrap();
            assert_eq!(zero, vec![Symbol::new(x.scatterer as u32, rec.psi)]);
        }
    }

    #[test]
    fn backward_itinerary_matches_forward_orbit() {
        let t = table();
        let mut rng = RngSpec::new(16, 0).rng();
        for _ in 0..200 {
            let x0 = t.sample_mu_bar(&mut rng);
            let rec = birkhoff_sum(&t, &x0, 9).unwrap();
            let from_middle = t.itinerary(&rec.points[4], 4, 4).unwrap();
            assert_eq!(&from_middle[..], &rec.symbols[0..9]);
        }
    }
}
