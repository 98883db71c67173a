//! Monte Carlo estimators: covariance of the cocycle, Gaussian LLT density,
//! empirical cell probabilities and the LLT comparison table.

mod covariance;
mod ensemble;
mod ks;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use covariance::{gaussian_density, CovarianceMatrix};
pub use ensemble::{batch_stderr, run_ensemble, EnsembleSummary, EstimateWithCI, Outcome, Sample, BLOCK, N_BATCHES};
pub use ks::{kolmogorov_q, ks_test, KsResult};

use crate::error::{Error, Result};
use crate::extension::ExtensionSystem;
use crate::lattice::Cell;
use crate::oracle::{marginal_at, MarkovExtension};
use crate::rng::RngSpec;

/// Runs `n` steps from `x`, calling `visit(j, S_j)` for `j = 1..=n`.
/// Returns whether any step grazed.
pub fn walk<S, F>(system: &S, x: S::Point, n: usize, mut visit: F) -> Result<bool>
where
    S: ExtensionSystem,
    F: FnMut(usize, Cell),
{
    let mut point = x;
    let mut sum = Cell::ZERO;
    let mut grazing = false;
    for j in 1..=n {
        let step = system.step(&point)?;
        sum += step.jump;
        grazing |= step.grazing;
        visit(j, sum);
        point = step.next;
    }
    Ok(grazing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: CovarianceMatrix,
    pub stderr: [[f64; 2]; 2],
    /// `mean(S_n)/n`, with its standard error.
    pub drift: [f64; 2],
    pub drift_stderr: [f64; 2],
    /// Batch-means standard error of `det Σ̂`.
    pub det_stderr: f64,
    pub n_sigma: usize,
    pub n_samples: usize,
    pub grazing: usize,
}

impl SigmaEstimate {
    /// A covariance known exactly.
    pub fn exact(sigma: CovarianceMatrix) -> Self {
        SigmaEstimate {
            sigma,
            stderr: [[0.0; 2]; 2],
            drift: [0.0; 2],
            drift_stderr: [0.0; 2],
            det_stderr: 0.0,
            n_sigma: 0,
            n_samples: 0,
            grazing: 0,
        }
    }

    /// `Φ_B(0) = 1/(2π√det Σ̂)` with its delta-method standard error.
    pub fn density_at_zero(&self) -> Result<EstimateWithCI> {
        let phi = self.sigma.density_at_zero()?;
        let se = phi * self.det_stderr / (2.0 * self.sigma.det());
        Ok(EstimateWithCI::new(phi, se, self.n_samples))
    }
}

/// `Σ̂ = Cov(S_n / √n)` over `n_samples` trajectories from μ̄, with
/// batch-means standard errors and a centring check on the drift.
pub fn estimate_sigma<S: ExtensionSystem>(
    system: &S,
    n_sigma: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SigmaEstimate> {
    if n_sigma == 0 || n_samples < 100 {
        return Err(Error::InvalidArgument("estimate_sigma needs n_sigma ≥ 1 and N ≥ 100".into()));
    }
    let scale = 1.0 / (n_sigma as f64).sqrt();
    let summary = run_ensemble(n_samples, seed, 5, || (), |_, s| {
        let x = system.sample(s.rng);
        let mut end = Cell::ZERO;
        s.grazing = walk(system, x, n_sigma, |_, sum| end = sum)?;
        let [a, b] = end.as_f64();
        let (a, b) = (a * scale, b * scale);
        s.out.copy_from_slice(&[a, b, a * a, a * b, b * b]);
        Ok(Outcome::Included)
    })?;
    let entry = |i: usize, j: usize| {
        let idx = [[2, 3], [3, 4]][i][j];
        summary.batch_functional(move |m| m[idx] - m[i] * m[j])
    };
    let e = [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]];
    let values = [[e[0][0].value, e[0][1].value], [e[0][1].value, e[1][1].value]];
    let sigma = CovarianceMatrix::new(values)?;
    let drift_est = [summary.batch_estimate(0).scaled(scale), summary.batch_estimate(1).scaled(scale)];
    let drift = [drift_est[0].value, drift_est[1].value];
    let drift_stderr = [drift_est[0].stderr, drift_est[1].stderr];
    if (0..2).any(|i| drift[i].abs() > 4.0 * drift_stderr[i]) {
        return Err(Error::NonzeroDrift { drift, stderr: drift_stderr });
    }
    let det = summary.batch_functional(|m| (m[2] - m[0] * m[0]) * (m[4] - m[1] * m[1]) - (m[3] - m[0] * m[1]).powi(2));
    Ok(SigmaEstimate {
        sigma,
        det_stderr: det.stderr,
        stderr: [[e[0][0].stderr, e[0][1].stderr], [e[1][0].stderr, e[1][1].stderr]],
        drift,
        drift_stderr,
        n_sigma,
        n_samples,
        grazing: summary.grazing(),
    })
}

/// Fraction of `n_samples` μ̄-trajectories with `S_n = cell`.
pub fn empirical_cell_prob<S: ExtensionSystem>(
    system: &S,
    n: usize,
    cell: Cell,
    n_samples: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    let summary = run_ensemble(n_samples, seed, 1, || (), |_, s| {
        let x = system.sample(s.rng);
        let mut end = Cell::ZERO;
        s.grazing = walk(system, x, n, |_, sum| end = sum)?;
        s.out[0] = f64::from(u8::from(end == cell));
        Ok(Outcome::Included)
    })?;
    Ok(summary.estimate(0))
}

/// Histogram of `S_n` over `n_samples` trajectories. Counts add up to
/// `n_samples`.
pub fn empirical_cell_counts<S: ExtensionSystem>(
    system: &S,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<BTreeMap<Cell, usize>> {
    let n_blocks = n_samples.div_ceil(BLOCK);
    let parts: Vec<BTreeMap<Cell, usize>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut counts = BTreeMap::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_samples) {
                let mut rng = RngSpec::new(seed, i as u64).rng();
                let x = system.sample(&mut rng);
                let mut end = Cell::ZERO;
                walk(system, x, n, |_, sum| end = sum)?;
                *counts.entry(end).or_insert(0) += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut total = BTreeMap::new();
    for part in parts {
        for (cell, c) in part {
            *total.entry(cell).or_insert(0) += c;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LltRow {
    pub n: usize,
    pub cell: Cell,
    /// `n · p̂(S_n = ℓ)`, or `n · q_n(ℓ)` for exact rows.
    pub n_phat: f64,
    /// `Φ_B(ℓ/√n)`.
    pub phi_b: f64,
    pub ratio: f64,
    /// Standard error of `n_phat`; 0 for exact rows.
    pub stderr: f64,
    pub exact: bool,
    /// `|n·p̂ − Φ_B(ℓ/√n)| > 3 · n · stderr`.
    pub flag: bool,
}

fn llt_row(n: usize, cell: Cell, est: EstimateWithCI, sigma: &CovarianceMatrix, exact: bool) -> Result<LltRow> {
    let scale = 1.0 / (n as f64).sqrt();
    let [a, b] = cell.as_f64();
    let phi_b = gaussian_density([a * scale, b * scale], sigma)?;
    let n_phat = est.scaled(n as f64);
    Ok(LltRow {
        n,
        cell,
        n_phat: n_phat.value,
        phi_b,
        ratio: n_phat.value / phi_b,
        stderr: n_phat.stderr,
        exact,
        flag: (n_phat.value - phi_b).abs() > 3.0 * n_phat.stderr,
    })
}

/// Empirical LLT table: for each `n` and `ℓ`, `n·p̂(S_n = ℓ)` against
/// `Φ_B(ℓ/√n)`. All rows share the same trajectories.
pub fn llt_report<S: ExtensionSystem>(
    system: &S,
    n_list: &[usize],
    cells: &[Cell],
    n_samples: usize,
    sigma: &CovarianceMatrix,
    seed: u64,
) -> Result<Vec<LltRow>> {
    let horizon = n_list.iter().copied().max().unwrap_or(0);
    let m = n_list.len() * cells.len();
    let summary = run_ensemble(n_samples, seed, m, || (), |_, s| {
        let x = system.sample(s.rng);
        let out = &mut *s.out;
        s.grazing = walk(system, x, horizon, |j, sum| {
            for (a, &n) in n_list.iter().enumerate() {
                if n == j {
                    for (b, &c) in cells.iter().enumerate() {
                        if c == sum {
                            out[a * cells.len() + b] = 1.0;
                        }
                    }
                }
            }
        })?;
        Ok(Outcome::Included)
    })?;
    let mut rows = Vec::with_capacity(m);
    for (a, &n) in n_list.iter().enumerate() {
        for (b, &c) in cells.iter().enumerate() {
            rows.push(llt_row(n, c, summary.estimate(a * cells.len() + b), sigma, false)?);
        }
    }
    Ok(rows)
}

/// Exact LLT table for a Markov extension, from the convolution oracle.
pub fn llt_exact_rows(
    chain: &MarkovExtension,
    n_list: &[usize],
    cells: &[Cell],
    sigma: &CovarianceMatrix,
    budget: usize,
) -> Result<Vec<LltRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let q = marginal_at(chain, n, cells, budget)?;
        for (&c, &p) in cells.iter().zip(&q) {
            rows.push(llt_row(n, c, EstimateWithCI::exact(p), sigma, true)?);
        }
    }
    Ok(rows)
}

/// Jump covariance `E_π[ψ ψᵀ]` of a Markov extension. For chains whose
/// jumps are uncorrelated in time (one-state walks) this is the LLT
/// covariance.
pub fn jump_covariance(chain: &MarkovExtension) -> Result<CovarianceMatrix> {
    let pi = chain.stationary();
    let mut m = [[0.0; 2]; 2];
    for (i, p) in pi.iter().enumerate() {
        for e in chain.edges(i) {
            let [a, b] = e.jump.as_f64();
            let w = p * e.prob;
            m[0][0] += w * a * a;
            m[0][1] += w * a * b;
            m[1][0] += w * a * b;
            m[1][1] += w * b * b;
        }
    }
    CovarianceMatrix::new(m)
}
