//! Decision statistics: the multi-sample mismatched GLRT, Kelly's GLRT, the
//! misspecified Wald test and the AMF. All four are asymptotically χ²₂ under
//! the null hypothesis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mml_alpha_factored, p_hat, secondary_scatter, t0_matrix, t1_matrix};
use crate::linalg::{CVector, Cholesky, Dataset, HermitianMatrix, C64};

/// Smallest argument passed to `ln` in Kelly's statistic.
pub const KELLY_LOG_FLOOR: f64 = 1e-300;

/// Asymptotic χ² degrees of freedom of every statistic (dim of η).
pub const DOF: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Mglrt,
    Kelly,
    Wald,
    Amf,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [DetectorKind::Mglrt, DetectorKind::Kelly, DetectorKind::Wald, DetectorKind::Amf];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Mglrt => "mglrt",
            DetectorKind::Kelly => "kelly",
            DetectorKind::Wald => "wald",
            DetectorKind::Amf => "amf",
        }
    }

    /// Kelly and AMF are single-primary-vector detectors.
    pub fn needs_single_primary(self) -> bool {
        matches!(self, DetectorKind::Kelly | DetectorKind::Amf)
    }
}

/// Covariance estimate plugged into the Wald statistic's `P̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaldScatter {
    /// `T₁(η̂)`, the MML covariance under the alternative.
    #[default]
    T1AtEtaHat,
    /// `S₀/M₀`, the secondary-only sample covariance.
    S0OverM0,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub statistic: f64,
    pub detector: DetectorKind,
    pub dof: u32,
    /// Set when Kelly's log argument hit [`KELLY_LOG_FLOOR`].
    pub clamped: bool,
}

impl DetectorOutput {
    fn new(detector: DetectorKind, statistic: f64) -> Self {
        Self { statistic: statistic.max(0.0), detector, dof: DOF, clamped: false }
    }
}

/// `S₀` factored once, with the whitened steering vector `u = L⁻¹v`.
struct Whitened {
    chol: Cholesky,
    u: CVector,
    vsv: f64,
}

impl Whitened {
    fn new(s0: &HermitianMatrix, v: &CVector) -> Result<Self> {
        if v.norm_sqr() == 0.0 {
            return Err(Error::InvalidParameter("steering vector must be nonzero".into()));
        }
        let chol = s0.cholesky()?;
        let u = chol.whiten(v)?;
        let vsv = u.norm_sqr();
        Ok(Self { chol, u, vsv })
    }

    fn kelly(&self, x: &CVector, m0: usize) -> Result<DetectorOutput> {
        let y = self.chol.whiten(x)?;
        let proj = self.u.dot(&y).norm_sqr();
        let ratio = proj / (self.vsv * (1.0 + y.norm_sqr()));
        let mut out = DetectorOutput::new(DetectorKind::Kelly, 0.0);
        let scale = -2.0 * (m0 as f64 + 1.0);
        if 1.0 - ratio < KELLY_LOG_FLOOR {
            out.statistic = scale * KELLY_LOG_FLOOR.ln();
            out.clamped = true;
        } else {
            out.statistic = (scale * (-ratio).ln_1p()).max(0.0);
        }
        Ok(out)
    }

    fn amf(&self, x: &CVector, m0: usize) -> Result<DetectorOutput> {
        let y = self.chol.whiten(x)?;
        let proj = self.u.dot(&y).norm_sqr();
        Ok(DetectorOutput::new(DetectorKind::Amf, 2.0 * m0 as f64 * proj / self.vsv))
    }

    fn mglrt(&self, data: &Dataset, s0: &HermitianMatrix) -> Result<DetectorOutput> {
        let log_ratio = self.mglrt_log_ratio(data, s0)?;
        Ok(DetectorOutput::new(DetectorKind::Mglrt, 2.0 * data.m() as f64 * log_ratio))
    }

    /// `ln |T₀| − ln |T₁(η̂)|`. Can be slightly negative for M₁ > 1, where α̂
    /// is not the exact minimizer of `|T₁|`.
    fn mglrt_log_ratio(&self, data: &Dataset, s0: &HermitianMatrix) -> Result<f64> {
        let (n, m1, m) = (data.n(), data.m1(), data.m());
        let alpha = mml_alpha_factored(&data.primary, &self.chol, &data.steering)?;
        Ok(if m1 < n {
            // Sylvester form: |I + X₁ᴴS₀⁻¹X₁| / |I + X̃₁ᴴS₀⁻¹X̃₁| on M₁×M₁ matrices.
            let y: Vec<CVector> = data.primary.iter().map(|x| self.chol.whiten(x)).collect::<Result<_>>()?;
            let y_res: Vec<CVector> = y.iter().map(|yi| yi.minus_scaled(alpha, &self.u)).collect();
            gram_logdet(&y)? - gram_logdet(&y_res)?
        } else {
            let t0 = t0_matrix(&data.primary, s0, m)?;
            let t1 = t1_matrix(&data.primary, s0, m, [alpha.re, alpha.im], &data.steering)?;
            t0.cholesky()?.logdet() - t1.cholesky()?.logdet()
        })
    }

    fn wald(&self, data: &Dataset, s0: &HermitianMatrix, choice: WaldScatter) -> Result<DetectorOutput> {
        let alpha = mml_alpha_factored(&data.primary, &self.chol, &data.steering)?;
        let p = match choice {
            WaldScatter::T1AtEtaHat => {
                p_hat(&data.steering, &t1_matrix(&data.primary, s0, data.m(), [alpha.re, alpha.im], &data.steering)?)?
            }
            // vᴴ(S₀/M₀)⁻¹v = M₀·vᴴS₀⁻¹v from the factor already in hand
            WaldScatter::S0OverM0 => nalgebra::Matrix2::identity() * (2.0 * data.m0() as f64 * self.vsv),
        };
        let eta = nalgebra::Vector2::new(alpha.re, alpha.im);
        let w = data.m1() as f64 * (eta.transpose() * p * eta)[(0, 0)];
        Ok(DetectorOutput::new(DetectorKind::Wald, w))
    }
}

/// `ln |I + [yᵢᴴyⱼ]|`
fn gram_logdet(y: &[CVector]) -> Result<f64> {
    let k = HermitianMatrix::from_lower_fn(y.len(), |i, j| {
        let g = y[i].dot(&y[j]);
        if i == j {
            g + 1.0
        } else {
            g
        }
    });
    Ok(k.cholesky()?.logdet())
}

fn single_primary(data: &Dataset, kind: DetectorKind) -> Result<&CVector> {
    if data.m1() != 1 {
        return Err(Error::InvalidParameter(format!(
            "{} needs exactly one primary vector, got {}",
            kind.name(),
            data.m1()
        )));
    }
    Ok(&data.primary[0])
}

/// Mismatched GLRT, `Λ = 2M ln(|T₀| / |T₁(η̂)|)`.
///
/// Uses the M₁×M₁ determinant form when `M₁ < N` and the N×N form otherwise;
/// both are the same number.
pub fn mglrt(data: &Dataset) -> Result<DetectorOutput> {
    let s0 = secondary_scatter(&data.secondary)?;
    Whitened::new(&s0, &data.steering)?.mglrt(data, &s0)
}

/// Kelly's GLRT for one primary vector `x`,
/// `Λ = −2(M₀+1) ln(1 − |vᴴS₀⁻¹x|² / ((vᴴS₀⁻¹v)(1 + xᴴS₀⁻¹x)))`.
pub fn kelly(x: &CVector, s0: &HermitianMatrix, v: &CVector, m0: usize) -> Result<DetectorOutput> {
    Whitened::new(s0, v)?.kelly(x, m0)
}

/// Misspecified Wald statistic `W = M₁ η̂ᵀ P̂ η̂`, with `P̂ = 2(vᴴT⁻¹v)I₂` built
/// from the chosen covariance estimate `T`.
pub fn wald(data: &Dataset, scatter: WaldScatter) -> Result<DetectorOutput> {
    let s0 = secondary_scatter(&data.secondary)?;
    Whitened::new(&s0, &data.steering)?.wald(data, &s0, scatter)
}

/// Closed form of the Wald statistic with `T₁(η̂)`:
/// `W = 2(vᴴT₁⁻¹v) / (M₁(vᴴS₀⁻¹v)²) · |Σ vᴴS₀⁻¹x|²`.
pub fn wald_explicit(data: &Dataset) -> Result<f64> {
    let s0 = secondary_scatter(&data.secondary)?;
    let chol = s0.cholesky()?;
    let v = &data.steering;
    let w = chol.solve(v)?;
    let vsv = v.dot(&w).re;
    let sum = data.primary.iter().fold(C64::new(0.0, 0.0), |acc, x| acc + w.dot(x));
    let alpha = mml_alpha_factored(&data.primary, &chol, v)?;
    let t1 = t1_matrix(&data.primary, &s0, data.m(), [alpha.re, alpha.im], v)?;
    let vtv = t1.cholesky()?.quad_form(v, v)?.re;
    Ok(2.0 * vtv / (data.m1() as f64 * vsv * vsv) * sum.norm_sqr())
}

/// Adaptive matched filter, `Λ = 2M₀ |vᴴS₀⁻¹x|² / (vᴴS₀⁻¹v)`.
pub fn amf(x: &CVector, s0: &HermitianMatrix, v: &CVector, m0: usize) -> Result<DetectorOutput> {
    Whitened::new(s0, v)?.amf(x, m0)
}

/// Evaluates several detectors on one dataset, factoring `S₀` once.
/// Outputs follow the order of `kinds`.
pub fn evaluate(data: &Dataset, kinds: &[DetectorKind], scatter: WaldScatter) -> Result<Vec<DetectorOutput>> {
    let s0 = secondary_scatter(&data.secondary)?;
    let wh = Whitened::new(&s0, &data.steering)?;
    kinds
        .iter()
        .map(|&kind| match kind {
            DetectorKind::Mglrt => wh.mglrt(data, &s0),
            DetectorKind::Wald => wh.wald(data, &s0, scatter),
            DetectorKind::Kelly => wh.kelly(single_primary(data, kind)?, data.m0()),
            DetectorKind::Amf => wh.amf(single_primary(data, kind)?, data.m0()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fixture(m1: usize) -> Dataset {
        let v = CVector::new(vec![c(1., 0.), c(0.3, -0.4), c(-0.2, 0.9)]).unwrap();
        let primary = (0..m1)
            .map(|k| CVector::new(vec![c(0.5 + k as f64, -0.1), c(0.2, 0.7 * k as f64), c(-1.1, 0.4)]).unwrap())
            .collect();
        let secondary = (0..5)
            .map(|k| {
                let t = k as f64;
                CVector::new(vec![c(t.sin(), t.cos()), c(1.0 - 0.3 * t, 0.2), c(0.1 * t * t, -0.5 + t)]).unwrap()
            })
            .collect();
        Dataset::new(primary, secondary, v).unwrap()
    }

    #[test]
    fn zero_primary_gives_zero() {
        let mut d = fixture(3);
        d.primary = vec![CVector::zeros(3); 3];
        assert_eq!(mglrt(&d).unwrap().statistic, 0.0);
        assert_eq!(wald(&d, WaldScatter::T1AtEtaHat).unwrap().statistic, 0.0);
        let s0 = secondary_scatter(&d.secondary).unwrap();
        assert_eq!(amf(&CVector::zeros(3), &s0, &d.steering, 5).unwrap().statistic, 0.0);
    }

    #[test]
    fn kelly_hand_value() {
        let v = CVector::basis(2, 0);
        let out = kelly(&v, &HermitianMatrix::identity(2), &v, 1).unwrap();
        assert!((out.statistic - 4.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(out.dof, 2);
        assert!(!out.clamped);
    }

    #[test]
    fn kelly_orthogonal_is_zero() {
        let v = CVector::basis(2, 0);
        let x = CVector::basis(2, 1);
        assert_eq!(kelly(&x, &HermitianMatrix::identity(2), &v, 3).unwrap().statistic, 0.0);
    }

    #[test]
    fn amf_hand_value() {
        let m0 = 7;
        let v = CVector::basis(3, 1);
        let out = amf(&v, &HermitianMatrix::identity(3).scaled(m0 as f64), &v, m0).unwrap();
        assert!((out.statistic - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mglrt_forms_agree() {
        // M₁ = 2 < N = 3 uses the Gram form; compare with the N×N form by hand.
        let d = fixture(2);
        let fit = crate::estimators::MmlFit::new(&d).unwrap();
        let direct = fit.t0.cholesky().unwrap().logdet() - fit.t1.cholesky().unwrap().logdet();
        let s0 = secondary_scatter(&d.secondary).unwrap();
        let got = Whitened::new(&s0, &d.steering).unwrap().mglrt_log_ratio(&d, &s0).unwrap();
        assert!((got - direct).abs() <= 1e-10 * direct.abs(), "{got} vs {direct}");
    }

    #[test]
    fn single_primary_detectors_reject_many() {
        let d = fixture(2);
        assert!(evaluate(&d, &[DetectorKind::Kelly], WaldScatter::default()).is_err());
        assert!(evaluate(&d, &[DetectorKind::Mglrt, DetectorKind::Wald], WaldScatter::default()).is_ok());
    }

    #[test]
    fn singular_s0_is_reported() {
        let mut d = fixture(1);
        d.secondary.truncate(2);
        assert!(matches!(mglrt(&d), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(wald(&d, WaldScatter::S0OverM0), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn kelly_clamp_is_flagged() {
        // a huge x along v rounds the ratio to exactly 1
        let v = CVector::basis(2, 0);
        let s0 = HermitianMatrix::identity(2);
        let x = v.scaled(c(1e9, 0.));
        let out = kelly(&x, &s0, &v, 4).unwrap();
        assert!(out.clamped);
        assert!((out.statistic - (-10.0 * KELLY_LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn evaluate_matches_individual_calls() {
        let d = fixture(1);
        let s0 = secondary_scatter(&d.secondary).unwrap();
        let all = evaluate(&d, &DetectorKind::ALL, WaldScatter::S0OverM0).unwrap();
        assert_eq!(all[0], mglrt(&d).unwrap());
        assert_eq!(all[1], kelly(&d.primary[0], &s0, &d.steering, 5).unwrap());
        assert_eq!(all[2], wald(&d, WaldScatter::S0OverM0).unwrap());
        assert_eq!(all[3], amf(&d.primary[0], &s0, &d.steering, 5).unwrap());
    }
}
