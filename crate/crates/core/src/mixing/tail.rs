use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extension::ExtensionSystem;
use crate::rng::RngSpec;
use crate::stats::{walk, EstimateWithCI, BLOCK};

/// Empirical first-return law of `(x, 0)` to the zero cell, every
/// trajectory run to the cap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReturnTailEstimate {
    pub cap: usize,
    pub n_samples: usize,
    /// `returns[j]` trajectories first returned at step `j`; `returns[0] = 0`.
    pub returns: Vec<usize>,
    /// Trajectories with no return up to the cap.
    pub censored: usize,
    /// Trajectories that met a grazing collision (kept: the cell sequence
    /// is still defined).
    pub grazing: usize,
}

impl ReturnTailEstimate {
    /// Trajectories with `φ > n`.
    pub fn survivors(&self, n: usize) -> usize {
        self.n_samples - self.returns[..=n.min(self.cap)].iter().sum::<usize>()
    }

    /// `P̂(φ > n)` for `n ≤ cap`.
    pub fn survival(&self, n: usize) -> EstimateWithCI {
        let mut e = EstimateWithCI::binomial(self.survivors(n), self.n_samples);
        e.censored = Some(self.censored);
        e
    }

    /// `P̂(φ = j)`.
    pub fn return_prob(&self, j: usize) -> EstimateWithCI {
        EstimateWithCI::binomial(self.returns[j], self.n_samples)
    }

    pub fn survival_curve(&self) -> Vec<EstimateWithCI> {
        (0..=self.cap).map(|n| self.survival(n)).collect()
    }
}

/// Runs `n_samples` μ̄-trajectories for `cap` steps each and records the first
/// return time of `S_n` to the zero cell.
pub fn return_tail_empirical<S: ExtensionSystem>(
    system: &S,
    cap: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ReturnTailEstimate> {
    if cap == 0 || n_samples == 0 {
        return Err(Error::InvalidArgument("return tail needs cap ≥ 1 and N ≥ 1".into()));
    }
    let n_blocks = n_samples.div_ceil(BLOCK);
    let parts: Vec<(Vec<usize>, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut returns = vec![0usize; cap + 2];
            let mut grazing = 0;
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_samples) {
                let mut rng = RngSpec::new(seed, i as u64).rng();
                let x = system.sample(&mut rng);
                let mut first = cap + 1;
                grazing += usize::from(walk(system, x, cap, |j, sum| {
                    if first > cap && sum.is_zero() {
                        first = j;
                    }
                })?);
                returns[first] += 1;
            }
            Ok((returns, grazing))
        })
        .collect::<Result<_>>()?;
    let mut returns = vec![0usize; cap + 2];
    let mut grazing = 0;
    for (r, g) in parts {
        returns.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
        grazing += g;
    }
    let censored = returns.pop().unwrap_or(0);
    Ok(ReturnTailEstimate {
        cap,
        n_samples,
        returns,
        censored,
        grazing,
    })
}
