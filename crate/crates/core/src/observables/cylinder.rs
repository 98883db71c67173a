use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cell, Symbol};

/// Which part of an itinerary letter a table looks at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKey {
    /// Scatterer (or Markov state) only.
    #[default]
    Site,
    /// Scatterer and lattice jump.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    /// Sites at positions `-depth..=depth`.
    pub sites: Vec<u32>,
    /// Jumps at the same positions; required for `key = full`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<Cell>>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub depth: usize,
    #[serde(default)]
    pub key: SymbolKey,
    #[serde(default)]
    pub entries: Vec<TableEntry>,
    /// Value on windows missing from `entries`.
    #[serde(default)]
    pub default: f64,
    /// `entries` list every window that can occur, so `default` is never
    /// attained.
    #[serde(default)]
    pub exhaustive: bool,
}

/// A function of the itinerary window `j = -depth..=depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CylinderSpec", into = "CylinderSpec")]
pub struct CylinderFunction {
    depth: usize,
    key: SymbolKey,
    table: BTreeMap<Vec<Symbol>, f64>,
    default: f64,
    exhaustive: bool,
}

impl CylinderFunction {
    pub fn constant(c: f64) -> Self {
        CylinderFunction {
            depth: 0,
            key: SymbolKey::Site,
            table: BTreeMap::new(),
            default: c,
            exhaustive: false,
        }
    }

    /// `1` when the current collision is on scatterer (state) `site`.
    pub fn site_indicator(site: u32) -> Self {
        let mut table = BTreeMap::new();
        table.insert(vec![Symbol::new(site, Cell::ZERO)], 1.0);
        CylinderFunction {
            depth: 0,
            key: SymbolKey::Site,
            table,
            default: 0.0,
            exhaustive: false,
        }
    }

    /// Site-keyed table from `(sites, value)` pairs.
    pub fn from_sites(depth: usize, entries: &[(&[u32], f64)], default: f64, exhaustive: bool) -> Result<Self> {
        Self::try_from(CylinderSpec {
            depth,
            key: SymbolKey::Site,
            entries: entries
                .iter()
                .map(|(s, v)| TableEntry {
                    sites: s.to_vec(),
                    jumps: None,
                    value: *v,
                })
                .collect(),
            default,
            exhaustive,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn key(&self) -> SymbolKey {
        self.key
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[Symbol], f64)> {
        self.table.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn is_constant(&self) -> bool {
        self.table.is_empty() || (self.exhaustive && self.values().all(|v| v == self.default))
    }

    fn project(&self, s: Symbol) -> Symbol {
        match self.key {
            SymbolKey::Site => Symbol::new(s.site, Cell::ZERO),
            SymbolKey::Full => s,
        }
    }

    /// Value on an itinerary window of odd length `2m+1 ≥ 2·depth+1`,
    /// centred at the point.
    pub fn eval(&self, window: &[Symbol]) -> f64 {
        if self.table.is_empty() {
            return self.default;
        }
        let mid = window.len() / 2;
        debug_assert!(window.len() % 2 == 1 && mid >= self.depth);
        let key: Vec<Symbol> = window[mid - self.depth..=mid + self.depth]
            .iter()
            .map(|&s| self.project(s))
            .collect();
        self.table.get(&key).copied().unwrap_or(self.default)
    }

    /// Values the function can take.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let default = (!self.exhaustive || self.table.is_empty()).then_some(self.default);
        self.table.values().copied().chain(default)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        hi - lo
    }

    /// Exact `sup |g(x) − g(y)|` over `y` sharing `x`'s itinerary on
    /// positions `-k_back..=k_fwd`, where `window` is `x`'s window of
    /// half-width at least `depth`. Every table window is assumed to be
    /// realizable.
    pub fn modulus(&self, window: &[Symbol], k_back: usize, k_fwd: usize) -> f64 {
        if k_back >= self.depth && k_fwd >= self.depth {
            return 0.0;
        }
        let gx = self.eval(window);
        let mid = window.len() / 2;
        let d = self.depth as i64;
        let fixed: Vec<(usize, Symbol)> = (-d..=d)
            .filter(|&j| j >= -(k_back as i64) && j <= k_fwd as i64)
            .map(|j| ((j + d) as usize, self.project(window[(mid as i64 + j) as usize])))
            .collect();
        let mut worst: f64 = 0.0;
        for (key, v) in &self.table {
            if fixed.iter().all(|(i, s)| key[*i] == *s) {
                worst = worst.max((gx - v).abs());
            }
        }
        if !self.exhaustive {
            worst = worst.max((gx - self.default).abs());
        }
        worst
    }

    /// Inf (`upper = false`) or sup over the atoms of the depth-`k`
    /// coarsening. Identity when `k ≥ depth`.
    pub fn coarsen(&self, k: usize, upper: bool) -> CylinderFunction {
        if k >= self.depth {
            return self.clone();
        }
        let pick = |a: f64, b: f64| if upper { a.max(b) } else { a.min(b) };
        let cut = self.depth - k;
        let mut table: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
        for (key, &v) in &self.table {
            let inner = key[cut..key.len() - cut].to_vec();
            table
                .entry(inner)
                .and_modify(|w| *w = pick(*w, v))
                .or_insert(if self.exhaustive { v } else { pick(v, self.default) });
        }
        CylinderFunction {
            depth: k,
            key: self.key,
            table,
            default: self.default,
            exhaustive: self.exhaustive,
        }
    }

    /// `2·sup|g| / ϑ^depth`, an upper bound on `L_ϑ(g)`.
    pub fn lipschitz_upper(&self, theta: f64) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        2.0 * self.sup_norm() / theta.powi(self.depth as i32)
    }

    pub fn spec(&self) -> CylinderSpec {
        self.clone().into()
    }
}

impl TryFrom<CylinderSpec> for CylinderFunction {
    type Error = Error;

    fn try_from(spec: CylinderSpec) -> Result<Self> {
        let len = 2 * spec.depth + 1;
        if !spec.default.is_finite() {
            return Err(Error::InvalidArgument("cylinder default must be finite".into()));
        }
        let mut table = BTreeMap::new();
        for (n, e) in spec.entries.iter().enumerate() {
            if e.sites.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "entry {n}: window has {} sites, depth {} needs {len}",
                    e.sites.len(),
                    spec.depth
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::InvalidArgument(format!("entry {n}: value is not finite")));
            }
            let jumps = match (spec.key, &e.jumps) {
                (SymbolKey::Site, None) => vec![Cell::ZERO; len],
                (SymbolKey::Full, Some(j)) if j.len() == len => j.clone(),
                (SymbolKey::Site, Some(_)) => {
                    return Err(Error::InvalidArgument(format!("entry {n}: jumps given for a site-keyed table")))
                }
                _ => return Err(Error::InvalidArgument(format!("entry {n}: full key needs {len} jumps"))),
            };
            let key: Vec<Symbol> = e.sites.iter().zip(jumps).map(|(&s, j)| Symbol::new(s, j)).collect();
            if table.insert(key, e.value).is_some() {
                return Err(Error::InvalidArgument(format!("entry {n}: duplicate window")));
            }
        }
        Ok(CylinderFunction {
            depth: spec.depth,
            key: spec.key,
            table,
            default: spec.default,
            exhaustive: spec.exhaustive,
        })
    }
}

impl From<CylinderFunction> for CylinderSpec {
    fn from(g: CylinderFunction) -> Self {
        let entries = g
            .table
            .into_iter()
            .map(|(key, value)| TableEntry {
                sites: key.iter().map(|s| s.site).collect(),
                jumps: (g.key == SymbolKey::Full).then(|| key.iter().map(|s| s.jump).collect()),
                value,
            })
            .collect();
        CylinderSpec {
            depth: g.depth,
            key: g.key,
            entries,
            default: g.default,
            exhaustive: g.exhaustive,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(sites: &[u32]) -> Vec<Symbol> {
        sites.iter().map(|&s| Symbol::new(s, Cell::new(s as i64, 1))).collect()
    }

    /// Two sites, depth 2, every window listed: g = number of 1s among the
    /// five sites, plus 10 when the outer two agree.
    fn fixture() -> CylinderFunction {
        let mut entries = Vec::new();
        for bits in 0u32..32 {
            let sites: Vec<u32> = (0..5).map(|i| (bits >> (4 - i)) & 1).collect();
            let ones = sites.iter().sum::<u32>() as f64;
            let bonus = if sites[0] == sites[4] { 10.0 } else { 0.0 };
            entries.push((sites, ones + bonus));
        }
        let refs: Vec<(&[u32], f64)> = entries.iter().map(|(s, v)| (s.as_slice(), *v)).collect();
        CylinderFunction::from_sites(2, &refs, 0.0, true).unwrap()
    }

    #[test]
    fn evaluation_and_norms() {
        let g = fixture();
        assert_eq!(g.eval(&w(&[1, 0, 1, 0, 1])), 13.0);
        assert_eq!(g.eval(&w(&[9, 1, 0, 1, 0, 1, 9])), 13.0);
        assert_eq!(g.sup_norm(), 15.0);
        assert_eq!(g.oscillation(), 14.0);
        let ind = CylinderFunction::site_indicator(1);
        assert_eq!(ind.eval(&w(&[1])), 1.0);
        assert_eq!(ind.eval(&w(&[0])), 0.0);
        assert_eq!(ind.sup_norm(), 1.0);
        assert!(CylinderFunction::constant(2.0).is_constant());
    }

    #[test]
    fn coarsened_fixture_by_hand() {
        let g = fixture();
        let lo = g.coarsen(1, false);
        let hi = g.coarsen(1, true);
        // Inner window 0,1,0: outer pairs give 1+{0,1,1,2} plus 10 when equal,
        // so values {11, 2, 2, 13}.
        assert_eq!(lo.eval(&w(&[0, 1, 0])), 2.0);
        assert_eq!(hi.eval(&w(&[0, 1, 0])), 13.0);
        // Inner 1,1,1: 3 + {10, 1, 1, 12}.
        assert_eq!(lo.eval(&w(&[1, 1, 1])), 4.0);
        assert_eq!(hi.eval(&w(&[1, 1, 1])), 15.0);
        assert_eq!(g.coarsen(2, true), g);
        // Gap bounded by twice the modulus on every full window.
        for (key, _) in g.entries() {
            let gap = hi.eval(key) - lo.eval(key);
            assert!(gap <= 2.0 * g.modulus(key, 1, 1) + 1e-12);
            assert!(lo.eval(key) <= g.eval(key) && g.eval(key) <= hi.eval(key));
        }
    }

    #[test]
    fn modulus_by_hand() {
        let g = fixture();
        let x = w(&[0, 1, 0, 1, 1]);
        assert_eq!(g.modulus(&x, 2, 2), 0.0);
        // Window [-1, 1] = 1,0,1 fixed; g(x) = 3; alternatives 0,1,0,1,* →
        // {12, 3, 3, 14}: worst |3 − 14| = 11.
        assert_eq!(g.eval(&x), 3.0);
        assert_eq!(g.modulus(&x, 1, 1), 11.0);
        assert!(g.modulus(&x, 1, 1) <= g.oscillation());
        assert_eq!(CylinderFunction::constant(4.0).modulus(&w(&[3]), 0, 0), 0.0);
    }

    #[test]
    fn nonexhaustive_tables_include_default() {
        let g = CylinderFunction::from_sites(1, &[(&[0, 0, 0], 5.0)], 1.0, false).unwrap();
        let hi = g.coarsen(0, true);
        let lo = g.coarsen(0, false);
        assert_eq!(hi.eval(&w(&[0])), 5.0);
        assert_eq!(lo.eval(&w(&[0])), 1.0);
        assert_eq!(hi.eval(&w(&[1])), 1.0);
        assert_eq!(g.lipschitz_upper(0.5), 2.0 * 5.0 / 0.5);
    }

    #[test]
    fn bad_specs() {
        assert!(CylinderFunction::from_sites(1, &[(&[0, 0], 1.0)], 0.0, false).is_err());
        assert!(CylinderFunction::from_sites(0, &[(&[0], 1.0), (&[0], 2.0)], 0.0, false).is_err());
        let full = CylinderSpec {
            depth: 0,
            key: SymbolKey::Full,
            entries: vec![TableEntry { sites: vec![0], jumps: None, value: 1.0 }],
            default: 0.0,
            exhaustive: false,
        };
        assert!(CylinderFunction::try_from(full).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let g = fixture();
        assert_eq!(CylinderFunction::try_from(g.spec()).unwrap(), g);
    }
}
