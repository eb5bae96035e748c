//! Mismatched maximum-likelihood (MML) estimates under the assumed Gaussian
//! model: the secondary scatter `S₀`, the `T₀`/`T₁` covariance estimates and
//! the closed-form amplitude estimate.

use log::warn;
use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::linalg::{CVector, Cholesky, Dataset, HermitianMatrix, C64};

/// Unnormalized secondary scatter `S₀ = Σ x xᴴ` (no `1/M₀` factor).
///
/// With fewer vectors than the dimension the result is singular; this is only
/// logged, and every later operation that needs `S₀⁻¹` fails on it.
pub fn secondary_scatter(secondary: &[CVector]) -> Result<HermitianMatrix> {
    let n = secondary
        .first()
        .map(CVector::dim)
        .ok_or_else(|| Error::InvalidParameter("secondary data is empty".into()))?;
    if secondary.len() < n {
        warn!("secondary data has {} vectors in dimension {n}: S0 is singular", secondary.len());
    }
    HermitianMatrix::outer_sum(n, secondary)
}

/// `T₀ = (X₁X₁ᴴ + S₀)/M`
pub fn t0_matrix(primary: &[CVector], s0: &HermitianMatrix, m: usize) -> Result<HermitianMatrix> {
    let x1 = HermitianMatrix::outer_sum(s0.dim(), primary)?;
    Ok(x1.add(s0)?.scaled(1.0 / m as f64))
}

/// `T₁(η) = (Σ (x − αv)(x − αv)ᴴ + S₀)/M` with `α = η₁ + iη₂`.
pub fn t1_matrix(primary: &[CVector], s0: &HermitianMatrix, m: usize, eta: [f64; 2], v: &CVector) -> Result<HermitianMatrix> {
    if v.dim() != s0.dim() {
        return Err(Error::DimensionMismatch { expected: s0.dim(), actual: v.dim() });
    }
    let alpha = C64::new(eta[0], eta[1]);
    let residuals: Vec<CVector> = primary.iter().map(|x| x.minus_scaled(alpha, v)).collect();
    t0_matrix(&residuals, s0, m)
}

/// `α̂ = (1/M₁) Σ vᴴS₀⁻¹x / (vᴴS₀⁻¹v)` from an already factored `S₀`.
pub fn mml_alpha_factored(primary: &[CVector], s0: &Cholesky, v: &CVector) -> Result<C64> {
    if primary.is_empty() {
        return Err(Error::InvalidParameter("primary data is empty".into()));
    }
    if v.norm_sqr() == 0.0 {
        return Err(Error::InvalidParameter("steering vector must be nonzero".into()));
    }
    let w = s0.solve(v)?;
    let vsv = v.dot(&w).re;
    let sum = primary.iter().fold(C64::new(0.0, 0.0), |acc, x| acc + w.dot(x));
    Ok(sum / (primary.len() as f64 * vsv))
}

/// MML amplitude estimate `η̂ = [Re α̂, Im α̂]`.
pub fn mml_alpha(primary: &[CVector], s0: &HermitianMatrix, v: &CVector) -> Result<[f64; 2]> {
    let a = mml_alpha_factored(primary, &s0.cholesky()?, v)?;
    Ok([a.re, a.im])
}

/// Consistent estimate of the interest block, `P̂ = 2(vᴴT⁻¹v)·I₂`.
pub fn p_hat(v: &CVector, scatter: &HermitianMatrix) -> Result<Matrix2<f64>> {
    let q = scatter.cholesky()?.whiten(v)?.norm_sqr();
    Ok(Matrix2::identity() * (2.0 * q))
}

/// All MML quantities for one dataset.
#[derive(Clone, Debug)]
pub struct MmlFit {
    pub eta_hat: [f64; 2],
    pub t0: HermitianMatrix,
    pub t1: HermitianMatrix,
    pub s0: HermitianMatrix,
}

impl MmlFit {
    pub fn new(data: &Dataset) -> Result<Self> {
        let s0 = secondary_scatter(&data.secondary)?;
        let eta_hat = mml_alpha(&data.primary, &s0, &data.steering)?;
        let t0 = t0_matrix(&data.primary, &s0, data.m())?;
        let t1 = t1_matrix(&data.primary, &s0, data.m(), eta_hat, &data.steering)?;
        Ok(Self { eta_hat, t0, t1, s0 })
    }

    pub fn alpha_hat(&self) -> C64 {
        C64::new(self.eta_hat[0], self.eta_hat[1])
    }
}
