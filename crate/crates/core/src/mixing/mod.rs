//! Correlation integrals `∫ u · v∘fⁿ dμ` and the 1/n mixing-rate verdict,
//! return-time tails, and the error scan of the local expansion.

mod exact;
mod scan;
mod tail;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::Serialize;

pub use exact::{exact_correlation, prop_error_scan_exact, state_values, weighted_marginal_at};
pub use scan::{prop_error_scan, scan_verdict, PropScan, ScanRow, ScanVerdict};
pub use tail::{return_tail_empirical, ReturnTailEstimate};

use crate::error::{Error, Result};
use crate::extension::{ExtensionSystem, TrajectoryRecord};
use crate::lattice::{Cell, Symbol};
use crate::observables::{hypothesis_check, HypothesisReport, Observable};
use crate::stats::{run_ensemble, EnsembleSummary, EstimateWithCI, Outcome, SigmaEstimate};

/// Relative modelling margin of the mixing verdict.
pub const MODEL_MARGIN: f64 = 0.1;
/// Standard errors allowed by the verdicts.
pub const VERDICT_SIGMAS: f64 = 3.0;

/// `Σ_ℓ u(x, ℓ) · v(y, ℓ + s)` over the truncated support of `u`.
///
/// For factorized observables this is `g_u(x) g_v(y) C(s)` with
/// `C(s) = Σ_ℓ w_u(ℓ) w_v(ℓ + s)`, memoized across threads.
pub(crate) struct CrossWeights<'a> {
    u: &'a Observable,
    v: &'a Observable,
    support: Vec<(Cell, f64)>,
    factorized: bool,
    cache: RwLock<HashMap<Cell, f64>>,
}

impl<'a> CrossWeights<'a> {
    pub(crate) fn new(u: &'a Observable, v: &'a Observable) -> Self {
        CrossWeights {
            u,
            v,
            support: u.support(),
            factorized: u.is_factorized() && v.is_factorized(),
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn kernel(&self, s: Cell) -> f64 {
        if let Some(c) = self.cache.read().unwrap().get(&s) {
            return *c;
        }
        let c: f64 = self.support.iter().map(|&(l, w)| w * self.v.weight(l + s)).sum();
        self.cache.write().unwrap().insert(s, c);
        c
    }

    pub(crate) fn value(&self, s: Cell, wx: &[Symbol], wy: &[Symbol]) -> f64 {
        if self.factorized {
            let gu = self.u.shared_local().eval(wx);
            if gu == 0.0 {
                return 0.0;
            }
            let gv = self.v.shared_local().eval(wy);
            if gv == 0.0 {
                return 0.0;
            }
            return gu * gv * self.kernel(s);
        }
        self.support
            .iter()
            .map(|&(l, w)| {
                let a = w * self.u.local(l).eval(wx);
                if a == 0.0 {
                    0.0
                } else {
                    a * self.v.eval(l + s, wy)
                }
            })
            .sum()
    }

    /// Bound on `|I_n − I_n^trunc|` for every n.
    pub(crate) fn truncation_bound(&self) -> f64 {
        self.u.truncation().tail * self.v.profile().max_abs() * self.u.norms().sup_local * self.v.norms().sup_local
    }
}

/// One common-random-number ensemble of correlation integrals for several
/// observable pairs over a grid of times.
#[derive(Clone, Debug)]
pub struct CorrelationCurves {
    n_grid: Vec<usize>,
    n_pairs: usize,
    summary: EnsembleSummary,
    truncation: Vec<f64>,
}

impl CorrelationCurves {
    pub fn n_grid(&self) -> &[usize] {
        &self.n_grid
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn summary(&self) -> &EnsembleSummary {
        &self.summary
    }

    /// Index of statistic `(pair, n_grid[i])` in the summary.
    pub fn index(&self, pair: usize, i: usize) -> usize {
        pair * self.n_grid.len() + i
    }

    /// Monte Carlo estimate of the truncated integral (sampling error only).
    pub fn estimate(&self, pair: usize, i: usize) -> EstimateWithCI {
        let mut e = self.summary.estimate(self.index(pair, i));
        e.censored = Some(self.summary.excluded());
        e
    }

    /// Bound on the cell-truncation error of pair `pair`.
    pub fn truncation(&self, pair: usize) -> f64 {
        self.truncation[pair]
    }
}

/// Estimates `I_n = ∫ u · v∘fⁿ dμ = E_μ̄[Σ_ℓ u(x, ℓ) v(f̄ⁿx, ℓ + S_n(x))]` for
/// every pair and every `n` in `n_grid`, all from the same `n_samples`
/// trajectories.
///
/// Observables are evaluated at `x = f̄^D x₀` with `D` the largest depth, so
/// that the itinerary window of `x` is available. Trajectories with a grazing
/// collision are excluded when `D > 0`.
pub fn correlation_curves<S: ExtensionSystem>(
    system: &S,
    pairs: &[(&Observable, &Observable)],
    n_grid: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<CorrelationCurves> {
    if pairs.is_empty() || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidArgument("need at least one pair and times n ≥ 1".into()));
    }
    let depth = pairs.iter().map(|(u, v)| u.depth().max(v.depth())).max().unwrap_or(0);
    let horizon = n_grid.iter().copied().max().unwrap_or(0);
    let cross: Vec<CrossWeights> = pairs.iter().map(|(u, v)| CrossWeights::new(u, v)).collect();
    let len = n_grid.len();
    let summary = run_ensemble(n_samples, seed, pairs.len() * len, TrajectoryRecord::new, |rec, s| {
        let x0 = system.sample(s.rng);
        rec.fill(system, x0, horizon + 2 * depth + 1)?;
        s.grazing = rec.grazing_count > 0;
        if s.grazing && depth > 0 {
            return Ok(Outcome::Excluded);
        }
        let wx = &rec.symbols[..=2 * depth];
        for (i, &n) in n_grid.iter().enumerate() {
            let wy = &rec.symbols[n..=n + 2 * depth];
            let shift = rec.increment(depth, n);
            for (p, c) in cross.iter().enumerate() {
                s.out[p * len + i] = c.value(shift, wx, wy);
            }
        }
        Ok(Outcome::Included)
    })?;
    Ok(CorrelationCurves {
        n_grid: n_grid.to_vec(),
        n_pairs: pairs.len(),
        summary,
        truncation: cross.iter().map(CrossWeights::truncation_bound).collect(),
    })
}

/// `∫ u · v∘fⁿ dμ` with the truncation bound added to the standard error.
pub fn correlation_integral<S: ExtensionSystem>(
    system: &S,
    u: &Observable,
    v: &Observable,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    hypothesis_check(u.spec(), v.spec())?.into_result()?;
    let curves = correlation_curves(system, &[(u, v)], &[n], n_samples, seed)?;
    let mut e = curves.estimate(0, 0);
    e.stderr += curves.truncation(0);
    Ok(e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingRow {
    pub n: usize,
    pub i_hat: EstimateWithCI,
    /// `Φ_B(0) ∫u dμ ∫v dμ`.
    pub target: f64,
    /// `n · i_hat.value`.
    pub n_i_hat: f64,
    pub n_i_stderr: f64,
    /// `√((n·se(Î))² + se(target)²)`.
    pub combined_stderr: f64,
    /// `n ×` the truncation bound.
    pub truncation: f64,
    /// `3·combined + 0.1·|target| + truncation`.
    pub tolerance: f64,
    pub verdict: bool,
}

/// Paired comparison of `n·Î_n` at two grid points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlateauCheck {
    pub n_a: usize,
    pub n_b: usize,
    /// `n_b·Î_{n_b} − n_a·Î_{n_a}`.
    pub difference: EstimateWithCI,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingReport {
    pub rows: Vec<MixingRow>,
    pub plateau: Vec<PlateauCheck>,
    pub density_at_zero: EstimateWithCI,
    pub integral_u: EstimateWithCI,
    pub integral_v: EstimateWithCI,
    pub target: EstimateWithCI,
    pub excluded: usize,
    pub rows_pass: bool,
    pub plateau_pass: bool,
    pub verdict: bool,
}

/// Turns pair `pair` of a correlation ensemble into mixing rows. The target
/// error combines the standard errors of `Φ̂_B(0)` and both integrals.
pub fn mixing_report_from(
    curves: &CorrelationCurves,
    pair: usize,
    u: &Observable,
    v: &Observable,
    sigma: &SigmaEstimate,
) -> Result<MixingReport> {
    let phi = sigma.density_at_zero()?;
    let (a, b) = (u.integral(), v.integral());
    let value = phi.value * a.value * b.value;
    let var = if u.spec() == v.spec() {
        (a.value * b.value * phi.stderr).powi(2) + (2.0 * phi.value * a.value * a.stderr).powi(2)
    } else {
        (a.value * b.value * phi.stderr).powi(2)
            + (phi.value * b.value * a.stderr).powi(2)
            + (phi.value * a.value * b.stderr).powi(2)
    };
    let target = EstimateWithCI::new(value, var.sqrt(), phi.n_samples);
    let trunc = curves.truncation(pair);

    let rows: Vec<MixingRow> = curves
        .n_grid()
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let i_hat = curves.estimate(pair, i);
            let nf = n as f64;
            let n_i_stderr = nf * i_hat.stderr;
            let combined_stderr = n_i_stderr.hypot(target.stderr);
            let truncation = nf * trunc;
            let tolerance = VERDICT_SIGMAS * combined_stderr + MODEL_MARGIN * value.abs() + truncation;
            let n_i_hat = nf * i_hat.value;
            MixingRow {
                n,
                i_hat,
                target: value,
                n_i_hat,
                n_i_stderr,
                combined_stderr,
                truncation,
                tolerance,
                verdict: (n_i_hat - value).abs() <= tolerance,
            }
        })
        .collect();

    let mut plateau = Vec::new();
    let grid = curves.n_grid();
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let mut coeffs = vec![0.0; curves.summary().n_stats()];
            coeffs[curves.index(pair, i)] = -(grid[i] as f64);
            coeffs[curves.index(pair, j)] = grid[j] as f64;
            let difference = curves.summary().linear(&coeffs);
            let slack = (grid[i] + grid[j]) as f64 * trunc;
            plateau.push(PlateauCheck {
                n_a: grid[i],
                n_b: grid[j],
                difference,
                consistent: difference.value.abs() <= VERDICT_SIGMAS * difference.stderr + slack,
            });
        }
    }
    let rows_pass = rows.iter().all(|r| r.verdict);
    let plateau_pass = plateau.iter().all(|p| p.consistent);
    Ok(MixingReport {
        rows,
        plateau,
        density_at_zero: phi,
        integral_u: a,
        integral_v: b,
        target,
        excluded: curves.summary().excluded(),
        rows_pass,
        plateau_pass,
        verdict: rows_pass && plateau_pass,
    })
}

/// `n·Î_n` against `Φ_B(0) ∫u ∫v` over `n_grid`, with common random numbers
/// across `n`. The verdict needs every row within 3 combined standard errors
/// plus a 10% margin, and `n·Î_n` consistent between every pair of grid
/// points within 3 paired standard errors.
pub fn mixing_rate_report<S: ExtensionSystem>(
    system: &S,
    u: &Observable,
    v: &Observable,
    n_grid: &[usize],
    n_samples: usize,
    sigma: &SigmaEstimate,
    seed: u64,
) -> Result<(HypothesisReport, MixingReport)> {
    let hyp = hypothesis_check(u.spec(), v.spec())?.into_result()?;
    let curves = correlation_curves(system, &[(u, v)], n_grid, n_samples, seed)?;
    Ok((hyp, mixing_report_from(&curves, 0, u, v, sigma)?))
}

#[cfg(test)]
mod tests;
