//! Closed-form CRPS of a 1-Fréchet forecast under the measure `r^{-1/2} dr`,
//! its derivative in the scale, its expectation, and the multivariate
//! objective assembled from max-linear projections.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::ProjectionMatrix;
use crate::numerics::CompensatedSum;
use crate::special_fn::{gamma_half_unchecked, SQRT_HALF_PI, SQRT_PI};

/// One observed projection paired with the model scale it is scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrpsTerm {
    pub m: f64,
    pub v: f64,
}

impl CrpsTerm {
    pub fn new(m: f64, v: f64) -> Result<Self> {
        check_m(m)?;
        check_v(v)?;
        Ok(Self { m, v })
    }

    pub fn score(&self) -> f64 {
        crps_unchecked(self.m, self.v, self.v.sqrt())
    }
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Domain(format!("observation must be positive and finite, got {m}")));
    }
    Ok(())
}

fn check_v(v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("model scale must be nonnegative and finite, got {v}")));
    }
    Ok(())
}

/// `∫₀^∞ (e^{-v/r} − 1{m ≤ r})² r^{-1/2} dr`
/// `= 4[√m(e^{-v/m} − 1/2) + √v(γ(1/2, v/m) − √(π/2))]`.
pub fn crps_frechet(m: f64, v: f64) -> Result<f64> {
    check_m(m)?;
    check_v(v)?;
    Ok(crps_unchecked(m, v, v.sqrt()))
}

#[inline]
pub(crate) fn crps_unchecked(m: f64, v: f64, sqrt_v: f64) -> f64 {
    let ratio = v / m;
    let a = m.sqrt() * ((-ratio).exp() - 0.5);
    let b = sqrt_v * (gamma_half_unchecked(ratio) - SQRT_HALF_PI);
    // Non-negative in exact arithmetic; clamp rounding residue near the minimum.
    (4.0 * (a + b)).max(0.0)
}

/// Derivative of [`crps_frechet`] in `v`: `2(γ(1/2, v/m) − √(π/2)) / √v`.
pub fn crps_frechet_dv(m: f64, v: f64) -> Result<f64> {
    check_m(m)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("derivative requires a positive scale, got {v}")));
    }
    Ok(crps_dv_unchecked(m, v))
}

#[inline]
pub(crate) fn crps_dv_unchecked(m: f64, v: f64) -> f64 {
    2.0 * (gamma_half_unchecked(v / m) - SQRT_HALF_PI) / v.sqrt()
}

/// Mean score `E 𝔉(X, v) = 2√π(2√(v₀+v) − √v₀ − √(2v))` for `X` 1-Fréchet
/// with scale `v₀`.
pub fn expected_crps(v0: f64, v: f64) -> Result<f64> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::Domain(format!("true scale must be positive, got {v0}")));
    }
    check_v(v)?;
    Ok(2.0 * SQRT_PI * (2.0 * (v0 + v).sqrt() - v0.sqrt() - (2.0 * v).sqrt()))
}

/// `Σᵢ Σ_u 𝔉(M_u⁽ⁱ⁾, V(u))` with `v_values[u]` aligned to the projection
/// columns. Rows are scored in parallel but reduced in row order with a
/// compensated sum, so the result does not depend on the worker count.
pub fn crps_objective(projections: &ProjectionMatrix, v_values: &[f64]) -> Result<f64> {
    if v_values.len() != projections.cols() {
        return Err(Error::Contract(format!(
            "{} model scales supplied for {} projection columns",
            v_values.len(),
            projections.cols()
        )));
    }
    for (u, &v) in v_values.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("model scale for direction {u} is {v}")));
        }
    }
    Ok(objective_unchecked(projections, v_values))
}

pub(crate) fn objective_unchecked(projections: &ProjectionMatrix, v_values: &[f64]) -> f64 {
    let sqrt_v: Vec<f64> = v_values.iter().map(|v| v.sqrt()).collect();
    let row_sums: Vec<f64> = (0..projections.rows())
        .into_par_iter()
        .map(|i| {
            projections
                .row(i)
                .iter()
                .zip(v_values.iter().zip(&sqrt_v))
                .map(|(&m, (&v, &sv))| crps_unchecked(m, v, sv))
                .collect::<CompensatedSum>()
                .value()
        })
        .collect();
    row_sums.into_iter().collect::<CompensatedSum>().value()
}
