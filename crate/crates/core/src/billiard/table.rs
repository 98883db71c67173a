//! Scatterer configurations and their validation (disjointness, finite horizon).

use std::f64::consts::TAU;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::geometry::{ray_circle_entry, Vec2};
use crate::error::{Error, Result};
use crate::lattice::Cell;
use crate::rng::RngSpec;

/// Strict-disjointness margin between closed discs.
pub const EPS_SEP: f64 = 1e-9;

/// Search distance used while sampling free flights, before any horizon
/// bound is known.
const FLIGHT_SEARCH: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

impl ScattererSpec {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        ScattererSpec { center, radius }
    }

    pub fn perimeter(&self) -> f64 {
        TAU * self.radius
    }

    pub(crate) fn center_vec(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    fn check(&self, index: usize) -> Result<()> {
        let [cx, cy] = self.center;
        if !(0.0..1.0).contains(&cx) || !(0.0..1.0).contains(&cy) {
            return Err(Error::InvalidTable(format!(
                "scatterer {index}: center ({cx}, {cy}) outside [0,1)²"
            )));
        }
        if !(self.radius > 0.0 && self.radius < 0.5) {
            return Err(Error::InvalidTable(format!(
                "scatterer {index}: radius {} outside (0, 1/2)",
                self.radius
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationOptions {
    /// Largest |p|, |q| of the lattice directions checked for corridors.
    pub n_dirs: i64,
    /// Number of sampled free flights.
    pub n_rays: usize,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            n_dirs: 8,
            n_rays: 100_000,
            seed: 0x5eed,
        }
    }
}

/// A disc translate that may intersect the unit square `[0,1]²`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Candidate {
    pub scatterer: usize,
    pub offset: Cell,
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Hit {
    pub scatterer: usize,
    pub cell: Cell,
    pub t: f64,
}

/// Scatterers plus the per-cell candidate lists used for ray casting.
#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    pub scatterers: Vec<ScattererSpec>,
    pub candidates: Vec<Candidate>,
    /// Cumulative perimeter fractions, for μ̄ sampling.
    pub perimeter_cdf: Vec<f64>,
    pub total_perimeter: f64,
}

impl Geometry {
    pub fn new(scatterers: Vec<ScattererSpec>) -> Result<Self> {
        if scatterers.is_empty() {
            return Err(Error::InvalidTable("no scatterers".into()));
        }
        for (i, s) in scatterers.iter().enumerate() {
            s.check(i)?;
        }
        let mut candidates = Vec::new();
        for (i, s) in scatterers.iter().enumerate() {
            for ox in -1..=1 {
                for oy in -1..=1 {
                    let c = s.center_vec() + Vec2::new(ox as f64, oy as f64);
                    let dx = (0.0f64 - c.x).max(c.x - 1.0).max(0.0);
                    let dy = (0.0f64 - c.y).max(c.y - 1.0).max(0.0);
                    if dx.hypot(dy) <= s.radius + 1e-9 {
                        candidates.push(Candidate {
                            scatterer: i,
                            offset: Cell::new(ox, oy),
                            center: c,
                            radius: s.radius,
                        });
                    }
                }
            }
        }
        let total_perimeter: f64 = scatterers.iter().map(ScattererSpec::perimeter).sum();
        let mut acc = 0.0;
        let mut perimeter_cdf: Vec<f64> = scatterers
            .iter()
            .map(|s| {
                acc += s.perimeter();
                acc / total_perimeter
            })
            .collect();
        *perimeter_cdf.last_mut().unwrap() = 1.0;
        Ok(Geometry {
            scatterers,
            candidates,
            perimeter_cdf,
            total_perimeter,
        })
    }

    /// Earliest disc entry along `origin + t·dir`, `0 < t ≤ bound`, walking the
    /// unit cells crossed by the ray. `skip` excludes the launching disc.
    pub fn cast(&self, origin: Vec2, dir: Vec2, skip: Option<(usize, Cell)>, bound: f64) -> Option<Hit> {
        let mut cx = origin.x.floor() as i64;
        let mut cy = origin.y.floor() as i64;
        let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
        let delta_x = if dir.x != 0.0 { 1.0 / dir.x.abs() } else { f64::INFINITY };
        let delta_y = if dir.y != 0.0 { 1.0 / dir.y.abs() } else { f64::INFINITY };
        let mut t_max_x = if dir.x > 0.0 {
            ((cx + 1) as f64 - origin.x) * delta_x
        } else if dir.x < 0.0 {
            (origin.x - cx as f64) * delta_x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dir.y > 0.0 {
            ((cy + 1) as f64 - origin.y) * delta_y
        } else if dir.y < 0.0 {
            (origin.y - cy as f64) * delta_y
        } else {
            f64::INFINITY
        };

        let mut best: Option<Hit> = None;
        loop {
            let base = Vec2::new(cx as f64, cy as f64);
            for cand in &self.candidates {
                let cell = Cell::new(cx + cand.offset.x, cy + cand.offset.y);
                if skip == Some((cand.scatterer, cell)) {
                    continue;
                }
                if let Some(t) = ray_circle_entry(origin, dir, base + cand.center, cand.radius) {
                    if best.map_or(true, |b| t < b.t) {
                        best = Some(Hit {
                            scatterer: cand.scatterer,
                            cell,
                            t,
                        });
                    }
                }
            }
            let t_exit = t_max_x.min(t_max_y);
            if let Some(hit) = best {
                if hit.t <= t_exit {
                    return (hit.t <= bound).then_some(hit);
                }
            }
            if t_exit >= bound {
                return None;
            }
            if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += delta_x;
            } else {
                cy += step_y;
                t_max_y += delta_y;
            }
        }
    }

    /// Exact pairwise disjointness over all translates at lattice distance ≤ 1.
    pub fn check_disjoint(&self) -> Result<()> {
        let n = self.scatterers.len();
        for i in 0..n {
            for j in i..n {
                let (a, b) = (&self.scatterers[i], &self.scatterers[j]);
                for ox in -1..=1i64 {
                    for oy in -1..=1i64 {
                        if i == j && ox == 0 && oy == 0 {
                            continue;
                        }
                        let d = (b.center_vec() + Vec2::new(ox as f64, oy as f64) - a.center_vec()).norm();
                        let gap = d - (a.radius + b.radius);
                        if gap <= EPS_SEP {
                            return Err(Error::Overlap {
                                first: i,
                                second: j,
                                offset: Cell::new(ox, oy),
                                gap,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns the first lattice direction `(p, q)`, `gcd(p,q) = 1`,
    /// `|p|,|q| ≤ n_dirs`, along which some infinite strip misses every disc.
    ///
    /// Lines parallel to `(p, q)` are labelled by their offset along the unit
    /// normal; lattice translates project onto multiples of `1/|(p,q)|`, so
    /// each disc family covers one arc of a circle of that circumference and
    /// the direction is blocked iff the arcs cover the circle.
    pub fn find_corridor(&self, n_dirs: i64) -> Option<(i64, i64)> {
        for p in 0..=n_dirs {
            for q in -n_dirs..=n_dirs {
                if (p == 0 && q != 1) || gcd(p, q.abs()) != 1 {
                    continue;
                }
                if !self.direction_blocked(p, q) {
                    return Some((p, q));
                }
            }
        }
        None
    }

    fn direction_blocked(&self, p: i64, q: i64) -> bool {
        let len = ((p * p + q * q) as f64).sqrt();
        let period = 1.0 / len;
        let normal = Vec2::new(-q as f64, p as f64) * (1.0 / len);
        let mut arcs: Vec<(f64, f64)> = Vec::with_capacity(self.scatterers.len());
        for s in &self.scatterers {
            if 2.0 * s.radius >= period {
                return true;
            }
            let mid = s.center_vec().dot(normal).rem_euclid(period);
            let start = (mid - s.radius).rem_euclid(period);
            arcs.push((start, start + 2.0 * s.radius));
        }
        arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Sweep once around the circle starting at the first arc.
        let origin = arcs[0].0;
        let mut reach = arcs[0].1;
        for &(start, end) in &arcs[1..] {
            if start > reach + 1e-12 {
                return false;
            }
            reach = reach.max(end);
        }
        reach + 1e-12 >= origin + period
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A validated periodic scatterer configuration.
///
/// The only constructor is [`BilliardTable::validate`], so holding a table
/// means disjointness and the corridor/flight checks have passed.
#[derive(Debug)]
pub struct BilliardTable {
    pub(crate) geometry: Geometry,
    horizon_bound: f64,
    max_psi: i64,
    valid: AtomicBool,
}

impl Clone for BilliardTable {
    fn clone(&self) -> Self {
        BilliardTable {
            geometry: self.geometry.clone(),
            horizon_bound: self.horizon_bound,
            max_psi: self.max_psi,
            valid: AtomicBool::new(self.is_valid()),
        }
    }
}

impl BilliardTable {
    /// Two-disc finite-horizon table used throughout the tests and shipped
    /// configs: a large disc at the lattice points and a small one at the
    /// cell centres.
    pub fn default_scatterers() -> Vec<ScattererSpec> {
        vec![
            ScattererSpec::new([0.0, 0.0], 0.45),
            ScattererSpec::new([0.5, 0.5], 0.2),
        ]
    }

    pub fn default_table() -> Result<Self> {
        Self::validate(Self::default_scatterers(), &ValidationOptions::default())
    }

    /// Check disjointness exactly, look for corridors among lattice
    /// directions, then sample free flights from μ̄. The horizon bound is the
    /// longest sampled flight inflated by 10%.
    pub fn validate(scatterers: Vec<ScattererSpec>, opts: &ValidationOptions) -> Result<Self> {
        let geometry = Geometry::new(scatterers)?;
        geometry.check_disjoint()?;
        if let Some((p, q)) = geometry.find_corridor(opts.n_dirs) {
            return Err(Error::Corridor { p, q });
        }
        if geometry.scatterers.len() < 2 {
            return Err(Error::InvalidTable("at least two scatterers are required".into()));
        }
        let mut rng = RngSpec::new(opts.seed, 0).rng();
        let mut longest: f64 = 0.0;
        for _ in 0..opts.n_rays {
            let x = super::sample_point(&geometry, &mut rng);
            let (pos, dir) = super::launch(&geometry, &x);
            match geometry.cast(pos, dir, Some((x.scatterer, Cell::ZERO)), FLIGHT_SEARCH) {
                Some(hit) => longest = longest.max(hit.t),
                None => {
                    return Err(Error::NoCollisionWithinBound {
                        bound: FLIGHT_SEARCH,
                        x: pos.x,
                        y: pos.y,
                        dx: dir.x,
                        dy: dir.y,
                    })
                }
            }
        }
        let horizon_bound = 1.1 * longest.max(f64::MIN_POSITIVE);
        Ok(BilliardTable {
            geometry,
            horizon_bound,
            max_psi: horizon_bound.ceil() as i64 + 1,
            valid: AtomicBool::new(true),
        })
    }

    pub fn scatterers(&self) -> &[ScattererSpec] {
        &self.geometry.scatterers
    }

    pub fn horizon_bound(&self) -> f64 {
        self.horizon_bound
    }

    /// Bound on `‖ψ‖_∞`: a flight of length at most the horizon bound, from
    /// a disc in cell 0 to a disc reaching at most one cell further.
    pub fn max_psi(&self) -> i64 {
        self.max_psi
    }

    pub fn total_perimeter(&self) -> f64 {
        self.geometry.total_perimeter
    }

    /// Area of the fundamental cell not covered by scatterers.
    pub fn free_area(&self) -> f64 {
        1.0 - self
            .scatterers()
            .iter()
            .map(|s| std::f64::consts::PI * s.radius * s.radius)
            .sum::<f64>()
    }

    /// A runtime flight longer than the horizon bound marks the table invalid.
    pub fn is_valid(&self) -> bool {
        self.valid.load(Ordering::Relaxed)
    }

    pub(crate) fn invalidate(&self) {
        self.valid.store(false, Ordering::Relaxed);
    }
}
