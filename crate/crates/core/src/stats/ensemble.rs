//! Deterministic parallel Monte Carlo over replayable trajectory streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::pairwise_sum;
use crate::rng::{RngSpec, StreamRng};

/// Trajectories per work unit. Fixed, so sums never depend on the pool size.
pub const BLOCK: usize = 1024;
/// Batches for batch-mean standard errors.
pub const N_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censored: Option<usize>,
}

impl EstimateWithCI {
    pub fn new(value: f64, stderr: f64, n_samples: usize) -> Self {
        EstimateWithCI {
            value,
            stderr,
            n_samples,
            censored: None,
        }
    }

    /// An exactly known value.
    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0)
    }

    /// Fraction `hits / n` with binomial standard error.
    pub fn binomial(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
    }

    pub fn scaled(self, c: f64) -> Self {
        EstimateWithCI {
            value: c * self.value,
            stderr: c.abs() * self.stderr,
            ..self
        }
    }

    /// `|self - other|` in units of the combined standard error of two
    /// independent estimates.
    pub fn z_against(&self, other: &EstimateWithCI) -> f64 {
        (self.value - other.value).abs() / (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// What a trajectory contributed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Included,
    /// Dropped from all statistics (e.g. a grazing collision made the
    /// itinerary ill-defined).
    Excluded,
}

/// Running sums over the included trajectories for `m` statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    m: usize,
    count: usize,
    excluded: usize,
    grazing: usize,
    sum: Vec<f64>,
    /// `m × m` sums of products, row-major.
    cross: Vec<f64>,
    batch_sum: Vec<f64>,
    batch_count: Vec<usize>,
}

impl EnsembleSummary {
    fn zeros(m: usize) -> Self {
        EnsembleSummary {
            m,
            count: 0,
            excluded: 0,
            grazing: 0,
            sum: vec![0.0; m],
            cross: vec![0.0; m * m],
            batch_sum: vec![0.0; N_BATCHES * m],
            batch_count: vec![0; N_BATCHES],
        }
    }

    fn merge_all(parts: &[EnsembleSummary]) -> EnsembleSummary {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let mid = parts.len() / 2;
        let a = Self::merge_all(&parts[..mid]);
        let b = Self::merge_all(&parts[mid..]);
        let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + q).collect::<Vec<_>>();
        EnsembleSummary {
            m: a.m,
            count: a.count + b.count,
            excluded: a.excluded + b.excluded,
            grazing: a.grazing + b.grazing,
            sum: add(&a.sum, &b.sum),
            cross: add(&a.cross, &b.cross),
            batch_sum: add(&a.batch_sum, &b.batch_sum),
            batch_count: a.batch_count.iter().zip(&b.batch_count).map(|(p, q)| p + q).collect(),
        }
    }

    pub fn n_stats(&self) -> usize {
        self.m
    }

    /// Included trajectories.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Trajectories that reported at least one grazing step.
    pub fn grazing(&self) -> usize {
        self.grazing
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.mean(i)).collect()
    }

    /// Sample covariance of statistics `i` and `j` (per trajectory).
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let n = self.count as f64;
        (self.cross[i * self.m + j] - self.sum[i] * self.sum[j] / n) / (n - 1.0)
    }

    /// Mean of statistic `i` with the i.i.d. standard error.
    pub fn estimate(&self, i: usize) -> EstimateWithCI {
        self.linear(&unit(self.m, i))
    }

    /// `Σ cᵢ · mean(i)` with its standard error from the sample covariance,
    /// so paired differences between statistics of one ensemble are
    /// handled correctly.
    pub fn linear(&self, coeffs: &[f64]) -> EstimateWithCI {
        let value = coeffs.iter().enumerate().map(|(i, c)| c * self.mean(i)).sum();
        let mut var = 0.0;
        for (i, ci) in coeffs.iter().enumerate() {
            for (j, cj) in coeffs.iter().enumerate() {
                if *ci != 0.0 && *cj != 0.0 {
                    var += ci * cj * self.covariance(i, j);
                }
            }
        }
        EstimateWithCI::new(value, (var.max(0.0) / self.count as f64).sqrt(), self.count)
    }

    /// Per-batch means of statistic `i`.
    pub fn batch_means(&self, i: usize) -> Vec<f64> {
        (0..N_BATCHES)
            .filter(|&b| self.batch_count[b] > 0)
            .map(|b| self.batch_sum[b * self.m + i] / self.batch_count[b] as f64)
            .collect()
    }

    /// Mean of statistic `i` with the batch-means standard error.
    pub fn batch_estimate(&self, i: usize) -> EstimateWithCI {
        let bm = self.batch_means(i);
        EstimateWithCI::new(self.mean(i), batch_stderr(&bm), self.count)
    }

    /// Per-batch statistics `f(batch means)` of a nonlinear functional,
    /// together with `f(overall means)` and its batch-means standard error.
    pub fn batch_functional<F>(&self, f: F) -> EstimateWithCI
    where
        F: Fn(&[f64]) -> f64,
    {
        let per_batch: Vec<f64> = (0..N_BATCHES)
            .filter(|&b| self.batch_count[b] > 0)
            .map(|b| {
                let means: Vec<f64> = (0..self.m)
                    .map(|i| self.batch_sum[b * self.m + i] / self.batch_count[b] as f64)
                    .collect();
                f(&means)
            })
            .collect();
        EstimateWithCI::new(f(&self.means()), batch_stderr(&per_batch), self.count)
    }
}

fn unit(m: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[i] = 1.0;
    v
}

/// Standard error of the mean of (approximately) i.i.d. batch values.
pub fn batch_stderr(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    if values.len() < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Per-trajectory context handed to the sampling closure.
pub struct Sample<'a> {
    pub index: usize,
    pub rng: &'a mut StreamRng,
    /// Output slot, one entry per statistic, zeroed before each call.
    pub out: &'a mut [f64],
    /// Set when the trajectory met a grazing collision.
    pub grazing: bool,
}

/// Runs `n` trajectories, trajectory `i` drawing from stream
/// `RngSpec { seed, stream: i }`, and accumulates `m` statistics.
///
/// `init` builds per-block scratch state. Blocks of [`BLOCK`] trajectories
/// are processed in parallel and reduced with a fixed pairwise tree, so the
/// result is bit-identical for any number of worker threads.
pub fn run_ensemble<C, I, F>(n: usize, seed: u64, m: usize, init: I, sample: F) -> Result<EnsembleSummary>
where
    I: Fn() -> C + Sync,
    F: Fn(&mut C, &mut Sample<'_>) -> Result<Outcome> + Sync,
{
    let n_blocks = n.div_ceil(BLOCK).max(1);
    let blocks: Vec<EnsembleSummary> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut ctx = init();
            let mut acc = EnsembleSummary::zeros(m);
            let mut out = vec![0.0; m];
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(n);
            // Within a block, per-statistic sums go through a short buffer so
            // the summation tree is fixed too.
            let mut column: Vec<Vec<f64>> = vec![Vec::with_capacity(hi - lo); m];
            let mut batch_of = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                out.iter_mut().for_each(|x| *x = 0.0);
                let mut rng = RngSpec::new(seed, i as u64).rng();
                let mut s = Sample {
                    index: i,
                    rng: &mut rng,
                    out: &mut out,
                    grazing: false,
                };
                let outcome = sample(&mut ctx, &mut s)?;
                acc.grazing += usize::from(s.grazing);
                match outcome {
                    Outcome::Excluded => acc.excluded += 1,
                    Outcome::Included => {
                        acc.count += 1;
                        let batch = i * N_BATCHES / n;
                        acc.batch_count[batch] += 1;
                        batch_of.push(batch);
                        for (k, x) in out.iter().enumerate() {
                            column[k].push(*x);
                            acc.batch_sum[batch * m + k] += x;
                        }
                        for (k, x) in out.iter().enumerate() {
                            if *x != 0.0 {
                                for (l, y) in out.iter().enumerate() {
                                    acc.cross[k * m + l] += x * y;
                                }
                            }
                        }
                    }
                }
            }
            for k in 0..m {
                acc.sum[k] = pairwise_sum(&column[k]);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleSummary::merge_all(&blocks))
}
