use serde::{Deserialize, Serialize};

use super::VERDICT_SIGMAS;
use crate::error::{Error, Result};
use crate::extension::{ExtensionSystem, TrajectoryRecord};
use crate::lattice::Cell;
use crate::observables::CylinderFunction;
use crate::stats::{gaussian_density, run_ensemble, CovarianceMatrix, EstimateWithCI, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScanVerdict {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub n: usize,
    /// `n − 2k`.
    pub m: usize,
    /// `E_μ̄[ū · 1_{S_n = ℓ} · v̄∘f̄^k]`.
    pub estimate: EstimateWithCI,
    /// `Φ_B(ℓ/√m)/m · ∫ū ∫v̄`.
    pub reference: f64,
    /// `estimate − reference`, signed.
    pub residual: EstimateWithCI,
    /// `|residual| · m^{3/2}`.
    pub scaled: EstimateWithCI,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropScan {
    pub k: usize,
    pub cell: Cell,
    pub integral_u: EstimateWithCI,
    pub integral_v: EstimateWithCI,
    pub rows: Vec<ScanRow>,
    pub verdict: ScanVerdict,
}

/// Reads a scaled-residual sequence ordered by `n`.
///
/// INCONCLUSIVE when no residual is resolved from zero (each within 2
/// standard errors). GROWING when some scaled residual in the second half of
/// the grid exceeds, by 3 standard errors, twice the largest upper 3-sigma
/// bound in the first half. BOUNDED otherwise.
pub fn scan_verdict(rows: &[ScanRow]) -> ScanVerdict {
    let resolved = rows
        .iter()
        .any(|r| r.residual.value.abs() > 2.0 * r.residual.stderr && r.residual.value != 0.0);
    if !resolved && rows.iter().any(|r| r.residual.stderr > 0.0) {
        return ScanVerdict::Inconclusive;
    }
    let half = rows.len().div_ceil(2);
    let head = rows[..half]
        .iter()
        .map(|r| r.scaled.value + VERDICT_SIGMAS * r.scaled.stderr)
        .fold(0.0, f64::max);
    let grows = rows[half..]
        .iter()
        .any(|r| r.scaled.value - VERDICT_SIGMAS * r.scaled.stderr > 2.0 * head);
    if grows {
        ScanVerdict::Growing
    } else {
        ScanVerdict::Bounded
    }
}

pub(crate) fn scan_row(
    n: usize,
    k: usize,
    cell: Cell,
    estimate: EstimateWithCI,
    product: f64,
    residual_stderr: f64,
    sigma: &CovarianceMatrix,
) -> Result<ScanRow> {
    let m = n - 2 * k;
    let mf = m as f64;
    let [a, b] = cell.as_f64();
    let reference = gaussian_density([a / mf.sqrt(), b / mf.sqrt()], sigma)? / mf * product;
    let residual = EstimateWithCI::new(estimate.value - reference, residual_stderr, estimate.n_samples);
    let scale = mf.powf(1.5);
    Ok(ScanRow {
        n,
        m,
        estimate,
        reference,
        residual,
        scaled: EstimateWithCI::new(residual.value.abs() * scale, residual.stderr * scale, estimate.n_samples),
    })
}

pub(crate) fn check_scan_args(k: usize, n_grid: &[usize], depths: [usize; 2]) -> Result<()> {
    if n_grid.is_empty() || n_grid.iter().any(|&n| n <= 2 * k) {
        return Err(Error::InvalidArgument(format!("every n must exceed 2k = {}", 2 * k)));
    }
    if depths.iter().any(|&d| d > k) {
        return Err(Error::InvalidArgument(format!("locals must have depth at most k = {k}")));
    }
    Ok(())
}

/// Monte Carlo residual of the expansion
/// `E_μ̄[ū 1_{S_n=ℓ} v̄∘f̄^k] ≈ Φ_B(ℓ/√(n−2k))/(n−2k) ∫ū ∫v̄`
/// for depth-≤k locals, and whether `residual · (n−2k)^{3/2}` stays bounded
/// across `n_grid`. All rows and both integrals share one ensemble.
#[allow(clippy::too_many_arguments)]
pub fn prop_error_scan<S: ExtensionSystem>(
    system: &S,
    u_bar: &CylinderFunction,
    v_bar: &CylinderFunction,
    k: usize,
    n_grid: &[usize],
    cell: Cell,
    n_samples: usize,
    sigma: &CovarianceMatrix,
    seed: u64,
) -> Result<PropScan> {
    check_scan_args(k, n_grid, [u_bar.depth(), v_bar.depth()])?;
    let depth = u_bar.depth().max(v_bar.depth());
    let horizon = n_grid.iter().copied().max().unwrap_or(0).max(k + depth + 1);
    let len = n_grid.len();
    let summary = run_ensemble(n_samples, seed, len + 2, TrajectoryRecord::new, |rec, s| {
        let x0 = system.sample(s.rng);
        rec.fill(system, x0, horizon + depth)?;
        s.grazing = rec.grazing_count > 0;
        if s.grazing && depth > 0 {
            return Ok(Outcome::Excluded);
        }
        let gu = u_bar.eval(&rec.symbols[..=2 * depth]);
        let gv = v_bar.eval(&rec.symbols[..=2 * depth]);
        let gv_k = v_bar.eval(&rec.symbols[k..=k + 2 * depth]);
        s.out[0] = gu;
        s.out[1] = gv;
        if gu != 0.0 && gv_k != 0.0 {
            for (i, &n) in n_grid.iter().enumerate() {
                if rec.increment(depth, n) == cell {
                    s.out[2 + i] = gu * gv_k;
                }
            }
        }
        Ok(Outcome::Included)
    })?;
    let (iu, iv) = (summary.estimate(0), summary.estimate(1));
    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let m = (n - 2 * k) as f64;
            let [a, b] = cell.as_f64();
            let c = gaussian_density([a / m.sqrt(), b / m.sqrt()], sigma)? / m;
            // Linearized residual: paired standard error through the gradient.
            let mut grad = vec![0.0; len + 2];
            grad[0] = -c * iv.value;
            grad[1] = -c * iu.value;
            grad[2 + i] = 1.0;
            let se = summary.linear(&grad).stderr;
            scan_row(n, k, cell, summary.estimate(2 + i), iu.value * iv.value, se, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = scan_verdict(&rows);
    Ok(PropScan {
        k,
        cell,
        integral_u: iu,
        integral_v: iv,
        rows,
        verdict,
    })
}
