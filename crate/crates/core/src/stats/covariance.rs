use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-12;
const DET_MIN: f64 = 1e-14;

/// A symmetric positive definite 2×2 covariance (lattice² per step).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct CovarianceMatrix {
    m: [[f64; 2]; 2],
}

impl CovarianceMatrix {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        if (m[0][1] - m[1][0]).abs() > SYM_TOL {
            return Err(Error::InvalidArgument(format!("covariance is not symmetric: {m:?}")));
        }
        let c = CovarianceMatrix {
            m: [[m[0][0], m[0][1]], [m[0][1], m[1][1]]],
        };
        let ev = c.eigenvalues();
        if !(ev[0] > 0.0) || !ev[1].is_finite() {
            return Err(Error::NotPositiveDefinite(ev));
        }
        Ok(c)
    }

    pub fn diag(a: f64, b: f64) -> Result<Self> {
        Self::new([[a, 0.0], [0.0, b]])
    }

    pub fn identity() -> Self {
        CovarianceMatrix {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let tr = self.m[0][0] + self.m[1][1];
        let half_gap = (((self.m[0][0] - self.m[1][1]) / 2.0).powi(2) + self.m[0][1].powi(2)).sqrt();
        [tr / 2.0 - half_gap, tr / 2.0 + half_gap]
    }

    /// `⟨Σ⁻¹x, x⟩`.
    pub fn inverse_quadratic_form(&self, x: [f64; 2]) -> Result<f64> {
        let det = self.det();
        if det <= DET_MIN {
            return Err(Error::SingularSigma { det });
        }
        let [[a, b], [_, d]] = self.m;
        Ok((d * x[0] * x[0] - 2.0 * b * x[0] * x[1] + a * x[1] * x[1]) / det)
    }

    /// `Φ_B(0) = 1/(2π√det Σ)`.
    pub fn density_at_zero(&self) -> Result<f64> {
        gaussian_density([0.0, 0.0], self)
    }
}

impl TryFrom<[[f64; 2]; 2]> for CovarianceMatrix {
    type Error = Error;

    fn try_from(m: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(m)
    }
}

impl From<CovarianceMatrix> for [[f64; 2]; 2] {
    fn from(c: CovarianceMatrix) -> Self {
        c.m
    }
}

/// Density of the centred Gaussian with covariance Σ:
/// `exp(-⟨Σ⁻¹x, x⟩/2) / (2π √det Σ)`.
pub fn gaussian_density(x: [f64; 2], sigma: &CovarianceMatrix) -> Result<f64> {
    let det = sigma.det();
    if det <= DET_MIN {
        return Err(Error::SingularSigma { det });
    }
    let q = sigma.inverse_quadratic_form(x)?;
    Ok((-q / 2.0).exp() / (2.0 * PI * det.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn density_at_origin() {
        let id = CovarianceMatrix::identity();
        assert!((gaussian_density([0.0, 0.0], &id).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let half = CovarianceMatrix::diag(0.5, 0.5).unwrap();
        assert!((gaussian_density([0.0, 0.0], &half).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(CovarianceMatrix::new([[1.0, 2.0], [2.0, 1.0]]), Err(Error::NotPositiveDefinite(_))));
        assert!(CovarianceMatrix::new([[1.0, 0.1], [0.2, 1.0]]).is_err());
        let nearly = CovarianceMatrix { m: [[1e-8, 0.0], [0.0, 1e-8]] };
        assert!(matches!(gaussian_density([0.0, 0.0], &nearly), Err(Error::SingularSigma { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn density_integrates_to_one(a in 0.2f64..3.0, b in 0.2f64..3.0, r in -0.8f64..0.8) {
            let c = r * (a * b).sqrt();
            let sigma = CovarianceMatrix::new([[a, c], [c, b]]).unwrap();
            let s = a.max(b).sqrt();
            let h = s / 20.0;
            let steps = 320;
            let mut total = 0.0;
            for i in 0..steps {
                let x = -8.0 * s + (i as f64 + 0.5) * h;
                for j in 0..steps {
                    let y = -8.0 * s + (j as f64 + 0.5) * h;
                    total += gaussian_density([x, y], &sigma).unwrap();
                }
            }
            prop_assert!((total * h * h - 1.0).abs() < 1e-3);
        }

        #[test]
        fn eigenvalues_match_trace_and_det(a in 0.1f64..3.0, b in 0.1f64..3.0, r in -0.9f64..0.9) {
            let c = r * (a * b).sqrt();
            let sigma = CovarianceMatrix::new([[a, c], [c, b]]).unwrap();
            let [l0, l1] = sigma.eigenvalues();
            prop_assert!((l0 + l1 - a - b).abs() < 1e-12);
            prop_assert!((l0 * l1 - sigma.det()).abs() < 1e-12);
        }
    }
}
