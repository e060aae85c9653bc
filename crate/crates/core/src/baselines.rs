//! Comparison estimators: plain OLS, and sufficient-statistics perturbation
//! with an adaptively chosen ridge term (AdaSSP).
//!
//! AdaSSP splits `(ε, δ)` into three equal parts. One privately estimates
//! the smallest eigenvalue of `XᵀX` to pick the ridge strength, one perturbs
//! `XᵀX` with a symmetric Gaussian matrix, and one perturbs `Xᵀy`. All
//! three use the Gaussian scale `sqrt(ln(6/δ)) / (ε/3)`, multiplied by the
//! statistic's sensitivity (`B_X²` for `XᵀX` and the eigenvalue, `B_X·B_Y`
//! for `Xᵀy`). The ridge is
//! `max(0, sqrt(d·ln(6/δ)·ln(2d²/ρ))·B_X²/(ε/3) - λ̃_min)` with `ρ = 0.05`,
//! where `λ̃_min` is the noisy, downward-shifted eigenvalue estimate.
//!
//! Bounds are checked against the data rather than enforced by clipping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::PrivacyBudget;
use crate::noise::{gaussian, RngHandle};
use crate::regression::{fit_ols, Dataset};

/// Non-private OLS on the full dataset.
pub fn non_dp_baseline(data: &Dataset) -> Vec<f64> {
    fit_ols(data)
}

/// Per-row `ℓ₂` bound on features and absolute bound on labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataBounds {
    pub feature_norm_bound: f64,
    pub label_bound: f64,
}

impl DataBounds {
    pub fn new(feature_norm_bound: f64, label_bound: f64) -> Result<Self> {
        if !(feature_norm_bound > 0.0 && feature_norm_bound.is_finite())
            || !(label_bound > 0.0 && label_bound.is_finite())
        {
            return Err(Error::param("data bounds must be positive and finite"));
        }
        Ok(Self {
            feature_norm_bound,
            label_bound,
        })
    }

    /// The tightest bounds that hold on `data`. Reading them off the data
    /// is not private.
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let x = data
            .features()
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max);
        let y = data.labels().amax();
        Self::new(x, y)
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        for (i, row) in data.features().row_iter().enumerate() {
            let norm = row.norm();
            if norm > self.feature_norm_bound {
                return Err(Error::BoundViolation {
                    row: i,
                    detail: format!(
                        "feature norm {norm} exceeds bound {}",
                        self.feature_norm_bound
                    ),
                });
            }
            let y = data.labels()[i].abs();
            if y > self.label_bound {
                return Err(Error::BoundViolation {
                    row: i,
                    detail: format!("label magnitude {y} exceeds bound {}", self.label_bound),
                });
            }
        }
        Ok(())
    }
}

/// Noise scales and ridge constants derived from the budget and bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SspCalibration {
    /// Standard deviation of each entry of the `XᵀX` noise.
    pub gram_sigma: f64,
    /// Standard deviation of each entry of the `Xᵀy` noise.
    pub cross_sigma: f64,
    /// Standard deviation of the eigenvalue noise.
    pub eigen_sigma: f64,
    /// Downward shift applied to the noisy eigenvalue.
    pub eigen_shift: f64,
    /// Ridge strength used when the noisy eigenvalue is zero.
    pub ridge_ceiling: f64,
}

pub const SSP_FAILURE_PROBABILITY: f64 = 0.05;

impl SspCalibration {
    pub fn new(budget: PrivacyBudget, bounds: DataBounds, d: usize) -> Self {
        let third = budget.epsilon / 3.0;
        let log_term = (6.0 / budget.delta).ln();
        let scale = log_term.sqrt() / third;
        let bx2 = bounds.feature_norm_bound.powi(2);
        let d = d as f64;
        let ridge_ceiling =
            (d * log_term * (2.0 * d * d / SSP_FAILURE_PROBABILITY).ln()).sqrt() * bx2 / third;
        Self {
            gram_sigma: scale * bx2,
            cross_sigma: scale * bounds.feature_norm_bound * bounds.label_bound,
            eigen_sigma: scale * bx2,
            eigen_shift: log_term / third * bx2,
            ridge_ceiling,
        }
    }
}

/// `d × d` Gaussian matrix with the upper triangle drawn and mirrored.
pub fn symmetric_gaussian(d: usize, sigma: f64, rng: &mut RngHandle) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let z = gaussian(sigma, rng)?;
            out[(i, j)] = z;
            out[(j, i)] = z;
        }
    }
    Ok(out)
}

/// Solves `(XᵀX + ridge·I + gram_noise) β = Xᵀy + cross_noise`.
///
/// Falls back to the pseudo-inverse if the perturbed matrix is singular.
pub fn solve_perturbed(
    gram: &DMatrix<f64>,
    cross: &DVector<f64>,
    ridge: f64,
    gram_noise: &DMatrix<f64>,
    cross_noise: &DVector<f64>,
) -> Vec<f64> {
    let d = gram.nrows();
    let a = gram + gram_noise + DMatrix::identity(d, d) * ridge;
    let b = cross + cross_noise;
    if let Some(beta) = a.clone().lu().solve(&b) {
        if beta.iter().all(|v| v.is_finite()) {
            return beta.iter().copied().collect();
        }
    }
    let svd = a.svd(true, true);
    let tol = d as f64 * f64::EPSILON * svd.singular_values.max();
    svd.solve(&b, tol)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; d])
}

/// Private OLS from noisy sufficient statistics with an adaptive ridge.
pub fn ssp_regression(
    data: &Dataset,
    budget: PrivacyBudget,
    bounds: DataBounds,
    rng: &mut RngHandle,
) -> Result<Vec<f64>> {
    bounds.check(data)?;
    let d = data.d();
    let cal = SspCalibration::new(budget, bounds, d);
    let x = data.features();
    let gram = x.tr_mul(x);
    let cross = x.tr_mul(data.labels());

    let min_eigen = gram.clone().symmetric_eigen().eigenvalues.min().max(0.0);
    let noisy_eigen = (min_eigen + gaussian(cal.eigen_sigma, rng)? - cal.eigen_shift).max(0.0);
    let ridge = (cal.ridge_ceiling - noisy_eigen).max(0.0);

    let gram_noise = symmetric_gaussian(d, cal.gram_sigma, rng)?;
    let cross_noise = DVector::from_iterator(
        d,
        (0..d)
            .map(|_| gaussian(cal.cross_sigma, rng))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(solve_perturbed(
        &gram,
        &cross,
        ridge,
        &gram_noise,
        &cross_noise,
    ))
}
