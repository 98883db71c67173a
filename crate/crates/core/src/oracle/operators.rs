//! Exact operators of a Markov extension: Q_{n,ℓ}, T_n, R_n, U_k and the
//! renewal identities tying them together.

use nalgebra::DMatrix;

use super::{pairwise_sum, LatticeDist, MarkovExtension};
use crate::error::{Error, Result};
use crate::lattice::Cell;

const IDENTITY_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-10;

/// Induced ∞-norm (max absolute row sum).
pub fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Forward kernel `K[i][j]` to transfer convention `D_π⁻¹ Kᵀ D_π`.
pub fn to_transfer(forward: &DMatrix<f64>, pi: &[f64]) -> DMatrix<f64> {
    let n = pi.len();
    DMatrix::from_fn(n, n, |a, b| pi[b] * forward[(b, a)] / pi[a])
}

/// The n-step kernel `ℓ ↦ K_{n,ℓ}` with `K_{n,ℓ}[i][j] = P_i(S_n = ℓ, X_n = j)`,
/// stored as one distribution per start state.
#[derive(Clone, Debug)]
pub struct LatticeKernel {
    pub n: usize,
    rows: Vec<LatticeDist>,
}

impl LatticeKernel {
    pub fn new(chain: &MarkovExtension, n: usize, budget: usize) -> Result<Self> {
        let k = chain.n_states();
        if k * k > budget {
            return Err(Error::MemoryBound { needed: k * k, budget });
        }
        let rows = (0..k)
            .map(|i| {
                let mut d = LatticeDist::point(k, i);
                for _ in 0..n {
                    d = d.step(chain, budget / k)?;
                }
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LatticeKernel { n, rows })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, start: usize) -> &LatticeDist {
        &self.rows[start]
    }

    /// Cells of the bounding box (all ℓ that can carry mass are inside).
    pub fn support(&self) -> impl Iterator<Item = Cell> + '_ {
        let d = &self.rows[0];
        let o = d.origin();
        (0..d.height()).flat_map(move |y| (0..d.width()).map(move |x| o + Cell::new(x as i64, y as i64)))
    }

    pub fn forward(&self, cell: Cell) -> DMatrix<f64> {
        let k = self.n_states();
        DMatrix::from_fn(k, k, |i, j| self.rows[i].get(j, cell))
    }

    /// `Q_{n,ℓ}` in transfer convention.
    pub fn transfer(&self, cell: Cell, pi: &[f64]) -> DMatrix<f64> {
        to_transfer(&self.forward(cell), pi)
    }

    /// `Σ_ℓ K_{n,ℓ}`, the n-step transition matrix.
    pub fn total(&self) -> DMatrix<f64> {
        let k = self.n_states();
        let totals: Vec<Vec<f64>> = self.rows.iter().map(|d| d.state_totals()).collect();
        DMatrix::from_fn(k, k, |i, j| totals[i][j])
    }
}

#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub kernel: LatticeKernel,
    /// `q_n(ℓ) = P_π(S_n = ℓ)`, as a one-state distribution.
    pub marginal: LatticeDist,
}

impl ExactDistribution {
    pub fn q(&self, cell: Cell) -> f64 {
        self.marginal.get(0, cell)
    }
}

pub fn exact_distribution(chain: &MarkovExtension, n: usize, budget: usize) -> Result<ExactDistribution> {
    let kernel = LatticeKernel::new(chain, n, budget)?;
    let pi = chain.stationary();
    let d0 = kernel.row(0);
    let mut marginal = LatticeDist::zeros(1, d0.origin(), d0.width(), d0.height());
    for (i, row) in kernel.rows.iter().enumerate() {
        for (_, cell, m) in row.iter() {
            marginal.add(0, cell, pi[i] * m);
        }
    }
    let total = marginal.total();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::IdentityViolation {
            identity: "total mass of q_n",
            n,
            residual: total - 1.0,
        });
    }
    Ok(ExactDistribution { kernel, marginal })
}

pub fn operator_q(chain: &MarkovExtension, n: usize, cell: Cell, budget: usize) -> Result<DMatrix<f64>> {
    Ok(LatticeKernel::new(chain, n, budget)?.transfer(cell, chain.stationary()))
}

/// `q_n(ℓ)` for the given cells via a Chapman–Kolmogorov split at `n/2`,
/// which needs a box for half the horizon only.
pub fn marginal_at(chain: &MarkovExtension, n: usize, cells: &[Cell], budget: usize) -> Result<Vec<f64>> {
    let k = chain.n_states();
    let m = n / 2;
    let mut head = LatticeDist::at_origin(chain.stationary());
    for _ in 0..m {
        head = head.step(chain, budget)?;
    }
    let tails: Vec<LatticeDist> = if k == 1 && n - m == m {
        Vec::new()
    } else {
        (0..k)
            .map(|s| {
                let mut d = LatticeDist::point(k, s);
                for _ in 0..n - m {
                    d = d.step(chain, budget)?;
                }
                Ok(d)
            })
            .collect::<Result<_>>()?
    };
    Ok(cells
        .iter()
        .map(|&cell| {
            if tails.is_empty() {
                head.convolve_at(&head, cell, |_, _| 1.0)
            } else {
                (0..k)
                    .map(|s| head.convolve_at(&tails[s], cell, |a, _| if a == s { 1.0 } else { 0.0 }))
                    .sum()
            }
        })
        .collect())
}

/// Forward kernels `K^T_n` (return at n), `K^R_n` (first return at n) and
/// `K^U_n` (no return through n) for `n = 0..=n_max`.
#[derive(Clone, Debug)]
pub struct RenewalKernels {
    pub t: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
}

pub fn renewal_kernels(chain: &MarkovExtension, n_max: usize, budget: usize) -> Result<RenewalKernels> {
    let k = chain.n_states();
    let mut t = vec![DMatrix::zeros(k, k); n_max + 1];
    let mut r = vec![DMatrix::zeros(k, k); n_max + 1];
    let mut u = vec![DMatrix::zeros(k, k); n_max + 1];
    t[0] = DMatrix::identity(k, k);
    u[0] = DMatrix::identity(k, k);
    for i in 0..k {
        let mut full = LatticeDist::point(k, i);
        let mut taboo = LatticeDist::point(k, i);
        for n in 1..=n_max {
            full = full.step(chain, budget)?;
            taboo = taboo.step(chain, budget)?;
            let back = taboo.take_at(Cell::ZERO);
            let alive = taboo.state_totals();
            for j in 0..k {
                t[n][(i, j)] = full.get(j, Cell::ZERO);
                r[n][(i, j)] = back[j];
                u[n][(i, j)] = alive[j];
            }
        }
    }
    Ok(RenewalKernels { t, r, u })
}

#[derive(Clone, Debug)]
pub struct TrOperators {
    pub t: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    /// `max_n ‖T_n − Σ_{j=1}^n T_{n−j} R_j‖_∞`.
    pub max_residual: f64,
    pub residuals: Vec<f64>,
}

/// `T_n = Q_{n,0}` and `R_n` in transfer convention, with the induction
/// renewal identity checked for every `1 ≤ n ≤ n_max`.
pub fn operator_tr(chain: &MarkovExtension, n_max: usize, budget: usize) -> Result<TrOperators> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let pi = chain.stationary();
    let kernels = renewal_kernels(chain, n_max, budget)?;
    let t: Vec<_> = kernels.t.iter().map(|m| to_transfer(m, pi)).collect();
    let r: Vec<_> = kernels.r.iter().map(|m| to_transfer(m, pi)).collect();
    let mut residuals = vec![0.0];
    for n in 1..=n_max {
        let mut acc = DMatrix::zeros(pi.len(), pi.len());
        for j in 1..=n {
            acc += &t[n - j] * &r[j];
        }
        let res = sup_norm(&(&t[n] - acc));
        if res > IDENTITY_TOL {
            return Err(Error::IdentityViolation { identity: "T_n = sum T_{n-j} R_j", n, residual: res });
        }
        residuals.push(res);
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(TrOperators { t, r, max_residual, residuals })
}

#[derive(Clone, Debug)]
pub struct UCheck {
    pub u: Vec<DMatrix<f64>>,
    /// `sup |1 − Σ_{j=0}^n U_{n−j} Q_{j,0} 1|` for each n.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

pub fn operator_u_check(chain: &MarkovExtension, n_max: usize, budget: usize) -> Result<UCheck> {
    let pi = chain.stationary();
    let k = pi.len();
    let kernels = renewal_kernels(chain, n_max, budget)?;
    let t: Vec<_> = kernels.t.iter().map(|m| to_transfer(m, pi)).collect();
    let u: Vec<_> = kernels.u.iter().map(|m| to_transfer(m, pi)).collect();
    let one = nalgebra::DVector::from_element(k, 1.0);
    let mut residuals = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut acc = nalgebra::DVector::zeros(k);
        for j in 0..=n {
            acc += &u[n - j] * (&t[j] * &one);
        }
        let res = (acc - &one).amax();
        if res > IDENTITY_TOL {
            return Err(Error::IdentityViolation { identity: "1 = sum U_{n-j} Q_{j,0} 1", n, residual: res });
        }
        residuals.push(res);
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(UCheck { u, residuals, max_residual })
}

#[derive(Clone, Debug)]
pub struct ExactReturnTail {
    /// `tail[n] = P_π(φ > n)`, with `tail[0] = 1`.
    pub tail: Vec<f64>,
    /// `f[n] = P_π(φ = n)`, with `f[0] = 0`.
    pub f: Vec<f64>,
    /// `q[n] = P_π(S_n = 0)`.
    pub q: Vec<f64>,
    pub max_residual: f64,
}

/// First-return law of the zero level under π. The return masses come from
/// the taboo recursion; the renewal equation
/// `q_n = Σ_{j=1}^n π K^R_j K^T_{n−j} 1` (the scalar `q_n = Σ f_j q_{n−j}`
/// for one-state chains) and `tail_n = π K^U_n 1` are asserted.
pub fn exact_return_tail(chain: &MarkovExtension, n_max: usize, budget: usize) -> Result<ExactReturnTail> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let pi = nalgebra::DVector::from_column_slice(chain.stationary());
    let k = pi.len();
    let one = nalgebra::DVector::from_element(k, 1.0);
    let kernels = renewal_kernels(chain, n_max, budget)?;
    let f: Vec<f64> = kernels.r.iter().map(|m| pi.dot(&(m * &one))).collect();
    let q: Vec<f64> = kernels.t.iter().map(|m| pi.dot(&(m * &one))).collect();
    let t1: Vec<_> = kernels.t.iter().map(|m| m * &one).collect();
    let mut tail = Vec::with_capacity(n_max + 1);
    let mut max_residual: f64 = 0.0;
    let mut check = |identity: &'static str, n: usize, residual: f64| -> Result<()> {
        max_residual = max_residual.max(residual.abs());
        if residual.abs() > IDENTITY_TOL {
            return Err(Error::IdentityViolation { identity, n, residual });
        }
        Ok(())
    };
    for n in 0..=n_max {
        let tn = 1.0 - pairwise_sum(&f[..=n]);
        check("tail = pi U_n 1", n, tn - pi.dot(&(&kernels.u[n] * &one)))?;
        tail.push(tn);
        if n >= 1 {
            let renewal: f64 = (1..=n).map(|j| pi.dot(&(&kernels.r[j] * &t1[n - j]))).sum();
            check("q_n = sum pi R_j T_{n-j} 1", n, q[n] - renewal)?;
            if k == 1 {
                let scalar: f64 = (1..=n).map(|j| f[j] * q[n - j]).sum();
                check("q_n = sum f_j q_{n-j}", n, q[n] - scalar)?;
            }
        }
    }
    Ok(ExactReturnTail { tail, f, q, max_residual })
}

/// `P(φ > n)` for the planar simple random walk, `n = 0..=n_max`, from the
/// scalar renewal recursion driven by the closed form
/// `P(S_{2m} = 0) = (C(2m, m) / 4^m)²`.
pub fn simple_walk_return_tail(n_max: usize) -> Vec<f64> {
    let half = n_max / 2;
    // q[m] = P(S_{2m} = 0); returns only at even times.
    let mut q = Vec::with_capacity(half + 1);
    let mut b = 1.0f64;
    q.push(1.0);
    for m in 1..=half {
        b *= (2 * m - 1) as f64 / (2 * m) as f64;
        q.push(b * b);
    }
    let mut f = vec![0.0; half + 1];
    for m in 1..=half {
        let conv: f64 = (1..m).map(|j| f[j] * q[m - j]).sum();
        f[m] = q[m] - conv;
    }
    let mut tail = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    for n in 0..=n_max {
        if n % 2 == 0 && n > 0 {
            acc += f[n / 2];
        }
        tail.push(1.0 - acc);
    }
    tail
}
