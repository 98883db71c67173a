use super::scan::{check_scan_args, scan_row, scan_verdict, PropScan};
use super::CrossWeights;
use crate::error::{Error, Result};
use crate::lattice::{Cell, Symbol};
use crate::observables::{CylinderFunction, Observable, SymbolKey};
use crate::oracle::{LatticeDist, LatticeKernel, MarkovExtension};
use crate::stats::{CovarianceMatrix, EstimateWithCI};

/// Values of a depth-0 site-keyed local on each Markov state.
pub fn state_values(g: &CylinderFunction, n_states: usize) -> Result<Vec<f64>> {
    if g.depth() != 0 || (g.key() == SymbolKey::Full && !g.is_constant()) {
        return Err(Error::InvalidArgument(
            "exact Markov computations need depth-0 locals keyed by state".into(),
        ));
    }
    Ok((0..n_states)
        .map(|i| g.eval(&[Symbol::new(i as u32, Cell::ZERO)]))
        .collect())
}

fn check_locals(obs: &Observable, n_states: usize) -> Result<()> {
    state_values(obs.shared_local(), n_states)?;
    for (c, _) in obs.support() {
        state_values(obs.local(c), n_states)?;
    }
    Ok(())
}

/// Exact truncated `∫ u · v∘fⁿ dμ` on a Markov extension:
/// `Σ_{i,j,s} π_i P_i(S_n = s, X_n = j) Σ_ℓ u(i, ℓ) v(j, ℓ + s)`, with the same
/// cell truncation as the Monte Carlo estimator.
pub fn exact_correlation(
    chain: &MarkovExtension,
    u: &Observable,
    v: &Observable,
    n: usize,
    budget: usize,
) -> Result<f64> {
    let k = chain.n_states();
    check_locals(u, k)?;
    check_locals(v, k)?;
    let kernel = LatticeKernel::new(chain, n, budget)?;
    let cross = CrossWeights::new(u, v);
    let sym = |i: usize| [Symbol::new(i as u32, Cell::ZERO)];
    let mut total = 0.0;
    for (i, p) in chain.stationary().iter().enumerate() {
        let row: f64 = kernel
            .row(i)
            .iter()
            .map(|(j, s, mass)| mass * cross.value(s, &sym(i), &sym(j)))
            .sum();
        total += p * row;
    }
    Ok(total)
}

/// `Σ_{paths} a(X_0) · w(X_t) · 1_{S_n = ℓ}` for each `ℓ` in `cells`, where
/// `reweight = Some((t, w))` inserts the state weight at time `t ≤ n`.
/// Uses a Chapman–Kolmogorov split so only half the horizon is stored.
pub fn weighted_marginal_at(
    chain: &MarkovExtension,
    n: usize,
    cells: &[Cell],
    start: &[f64],
    reweight: Option<(usize, &[f64])>,
    budget: usize,
) -> Result<Vec<f64>> {
    let k = chain.n_states();
    if start.len() != k || reweight.is_some_and(|(t, w)| t > n || w.len() != k) {
        return Err(Error::InvalidArgument("weights must match the states and t ≤ n".into()));
    }
    let m = (n / 2).max(reweight.map_or(0, |(t, _)| t));
    let mut head = LatticeDist::at_origin(start);
    for j in 0..=m {
        if let Some((t, w)) = reweight {
            if t == j {
                head.scale_states(w);
            }
        }
        if j < m {
            head = head.step(chain, budget)?;
        }
    }
    let tails = (0..k)
        .map(|s| {
            let mut d = LatticeDist::point(k, s);
            for _ in 0..n - m {
                d = d.step(chain, budget)?;
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cells
        .iter()
        .map(|&cell| {
            (0..k)
                .map(|s| head.convolve_at(&tails[s], cell, |a, _| if a == s { 1.0 } else { 0.0 }))
                .sum()
        })
        .collect())
}

/// Exact counterpart of [`prop_error_scan`](super::prop_error_scan) for
/// depth-0 state functions `ū, v̄`.
#[allow(clippy::too_many_arguments)]
pub fn prop_error_scan_exact(
    chain: &MarkovExtension,
    u_bar: &CylinderFunction,
    v_bar: &CylinderFunction,
    k: usize,
    n_grid: &[usize],
    cell: Cell,
    sigma: &CovarianceMatrix,
    budget: usize,
) -> Result<PropScan> {
    check_scan_args(k, n_grid, [u_bar.depth(), v_bar.depth()])?;
    let pi = chain.stationary();
    let gu = state_values(u_bar, pi.len())?;
    let gv = state_values(v_bar, pi.len())?;
    let start: Vec<f64> = pi.iter().zip(&gu).map(|(p, g)| p * g).collect();
    let iu: f64 = start.iter().sum();
    let iv: f64 = pi.iter().zip(&gv).map(|(p, g)| p * g).sum();
    let rows = n_grid
        .iter()
        .map(|&n| {
            let value = weighted_marginal_at(chain, n, &[cell], &start, Some((k, &gv)), budget)?[0];
            scan_row(n, k, cell, EstimateWithCI::exact(value), iu * iv, 0.0, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = scan_verdict(&rows);
    Ok(PropScan {
        k,
        cell,
        integral_u: EstimateWithCI::exact(iu),
        integral_v: EstimateWithCI::exact(iv),
        rows,
        verdict,
    })
}
