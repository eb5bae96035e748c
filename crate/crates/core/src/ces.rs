//! True data laws: complex elliptically symmetric (CES) samplers.
//!
//! Every family is normalized so its scatter matrix is the covariance matrix.
//! The three compound-Gaussian families draw `x = αv + √τ·L·z` with a unit-mean
//! texture `τ`. The generalized Gaussian draws its quadratic-form variate
//! directly: `x = αv + √R·L·u` with `u` uniform on the complex unit sphere and
//! `E{R} = N`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{CVector, Cholesky, HermitianMatrix, C64};

/// Density-generator family of the true data distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CesModel {
    Gaussian,
    /// Complex t: inverse-gamma texture with shape `dof/2`. Needs `dof > 2`.
    ComplexT { dof: f64 },
    /// K-distribution: gamma texture with shape `shape`.
    KDist { shape: f64 },
    /// Generalized Gaussian with density generator `exp(-t^shape)`.
    GenGaussian { shape: f64 },
}

impl CesModel {
    pub fn complex_t(dof: f64) -> Result<Self> {
        let m = CesModel::ComplexT { dof };
        m.validate()?;
        Ok(m)
    }

    pub fn k_dist(shape: f64) -> Result<Self> {
        let m = CesModel::KDist { shape };
        m.validate()?;
        Ok(m)
    }

    pub fn gen_gaussian(shape: f64) -> Result<Self> {
        let m = CesModel::GenGaussian { shape };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CesModel::Gaussian => Ok(()),
            CesModel::ComplexT { dof } if dof.is_finite() && dof > 2.0 => Ok(()),
            CesModel::ComplexT { dof } => Err(Error::InvalidParameter(format!(
                "complex-t needs dof > 2 for a finite covariance, got {dof}"
            ))),
            CesModel::KDist { shape } | CesModel::GenGaussian { shape } if shape.is_finite() && shape > 0.0 => Ok(()),
            _ => Err(Error::InvalidParameter(format!("shape parameter of {self:?} must be positive"))),
        }
    }

    /// Short label used in tables, e.g. `complex_t(5)`.
    pub fn label(&self) -> String {
        match *self {
            CesModel::Gaussian => "gaussian".to_string(),
            CesModel::ComplexT { dof } => format!("complex_t({dof})"),
            CesModel::KDist { shape } => format!("k_dist({shape})"),
            CesModel::GenGaussian { shape } => format!("gen_gaussian({shape})"),
        }
    }

    pub fn is_compound_gaussian(&self) -> bool {
        !matches!(self, CesModel::GenGaussian { .. })
    }
}

/// Texture law of a compound-Gaussian family, normalized to unit mean.
#[derive(Clone, Debug)]
enum Texture {
    Unit,
    InverseGamma { gamma: Gamma<f64>, scale: f64 },
    Gamma(Gamma<f64>),
}

impl Texture {
    fn for_model(model: &CesModel) -> Result<Self> {
        model.validate()?;
        let bad = |e: rand_distr::GammaError| Error::InvalidParameter(e.to_string());
        match *model {
            CesModel::Gaussian => Ok(Texture::Unit),
            CesModel::ComplexT { dof } => {
                let shape = dof / 2.0;
                Ok(Texture::InverseGamma { gamma: Gamma::new(shape, 1.0).map_err(bad)?, scale: shape - 1.0 })
            }
            CesModel::KDist { shape } => Ok(Texture::Gamma(Gamma::new(shape, 1.0 / shape).map_err(bad)?)),
            CesModel::GenGaussian { .. } => Err(Error::Unsupported(
                "the generalized Gaussian has no dimension-free texture law; use sample_modular".into(),
            )),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Texture::Unit => 1.0,
            Texture::InverseGamma { gamma, scale } => scale / gamma.sample(rng),
            Texture::Gamma(gamma) => gamma.sample(rng),
        }
    }
}

/// Draws `count` unit-mean textures of a compound-Gaussian family.
pub fn sample_texture<R: Rng + ?Sized>(model: &CesModel, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let texture = Texture::for_model(model)?;
    Ok((0..count).map(|_| texture.draw(rng)).collect())
}

/// Law of the quadratic form `R = (x−αv)ᴴΣ⁻¹(x−αv)` in dimension `dim`,
/// normalized so `E{R} = dim`.
#[derive(Clone, Debug)]
enum Modular {
    Compound { texture: Texture, chi: Gamma<f64> },
    GenGaussian { gamma: Gamma<f64>, inv_shape: f64, scale: f64 },
}

impl Modular {
    fn new(model: &CesModel, dim: usize) -> Result<Self> {
        model.validate()?;
        let bad = |e: rand_distr::GammaError| Error::InvalidParameter(e.to_string());
        let n = dim as f64;
        match *model {
            CesModel::GenGaussian { shape } => {
                // Q^s ~ Gamma(N/s, 1) and E{Q} = Γ((N+1)/s) / Γ(N/s).
                let mean_q = (ln_gamma((n + 1.0) / shape) - ln_gamma(n / shape)).exp();
                Ok(Modular::GenGaussian {
                    gamma: Gamma::new(n / shape, 1.0).map_err(bad)?,
                    inv_shape: 1.0 / shape,
                    scale: n / mean_q,
                })
            }
            _ => Ok(Modular::Compound {
                texture: Texture::for_model(model)?,
                chi: Gamma::new(n, 1.0).map_err(bad)?,
            }),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Modular::Compound { texture, chi } => texture.draw(rng) * chi.sample(rng),
            Modular::GenGaussian { gamma, inv_shape, scale } => scale * gamma.sample(rng).powf(*inv_shape),
        }
    }
}

/// Draws `count` quadratic-form variates of `model` in dimension `dim`
/// (unit mean after division by `dim`). Works for every family.
pub fn sample_modular<R: Rng + ?Sized>(model: &CesModel, dim: usize, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let modular = Modular::new(model, dim)?;
    Ok((0..count).map(|_| modular.draw(rng)).collect())
}

/// Mean, covariance and true law of the data vectors.
#[derive(Clone, Debug)]
pub struct SignalScenario {
    pub alpha: C64,
    pub steering: CVector,
    pub sigma: HermitianMatrix,
    pub model: CesModel,
}

impl SignalScenario {
    pub fn new(alpha: C64, steering: CVector, sigma: HermitianMatrix, model: CesModel) -> Result<Self> {
        if steering.norm_sqr() == 0.0 {
            return Err(Error::InvalidParameter("steering vector must be nonzero".into()));
        }
        if steering.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), actual: steering.dim() });
        }
        model.validate()?;
        Ok(Self { alpha, steering, sigma, model })
    }

    /// Same scenario with a different amplitude.
    pub fn with_alpha(&self, alpha: C64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn sampler(&self) -> Result<CesSampler> {
        CesSampler::new(self)
    }
}

/// Prepared sampler: the colouring factor and the family's random laws are
/// computed once and reused for every draw.
#[derive(Clone, Debug)]
pub struct CesSampler {
    mean: Vec<C64>,
    chol: Cholesky,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Compound(Texture),
    Spherical(Modular),
}

impl CesSampler {
    pub fn new(scn: &SignalScenario) -> Result<Self> {
        let chol = scn.sigma.cholesky()?;
        let kind = if scn.model.is_compound_gaussian() {
            SamplerKind::Compound(Texture::for_model(&scn.model)?)
        } else {
            SamplerKind::Spherical(Modular::new(&scn.model, scn.sigma.dim())?)
        };
        let mean = scn.steering.iter().map(|v| v * scn.alpha).collect();
        Ok(Self { mean, chol, kind })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let n = self.dim();
        let mut z = circular_gaussian(n, rng);
        let gain = match &self.kind {
            SamplerKind::Compound(texture) => texture.draw(rng).sqrt(),
            SamplerKind::Spherical(modular) => {
                let norm = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
                z.iter_mut().for_each(|w| *w /= norm);
                modular.draw(rng).sqrt()
            }
        };
        let coloured = self.chol.mul_lower(&z);
        CVector::from_vec_unchecked(self.mean.iter().zip(coloured).map(|(m, c)| m + c * gain).collect())
    }

    pub fn draw_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<CVector> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

/// Standard circular complex Gaussian vector, `E{z zᴴ} = I`.
pub fn circular_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re * s, im * s)
        })
        .collect()
}

/// Draws `count` i.i.d. vectors from the scenario's CES law.
pub fn sample_ces<R: Rng + ?Sized>(scn: &SignalScenario, count: usize, rng: &mut R) -> Result<Vec<CVector>> {
    Ok(CesSampler::new(scn)?.draw_many(count, rng))
}

/// Log-density of the assumed complex Gaussian model,
/// `−N ln π − ln|Φ| − (x−αv)ᴴΦ⁻¹(x−αv)`.
pub fn gaussian_loglik(x: &CVector, alpha: C64, v: &CVector, phi: &HermitianMatrix) -> Result<f64> {
    let chol = phi.cholesky()?;
    let r = x.minus_scaled(alpha, v);
    let q = chol.whiten(&r)?.norm_sqr();
    Ok(-(x.dim() as f64) * PI.ln() - chol.logdet() - q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn rng() -> crate::rng::StreamRng {
        substream(11, Stream::Fixture, 0)
    }

    #[test]
    fn gaussian_texture_is_unit() {
        assert_eq!(sample_texture(&CesModel::Gaussian, 3, &mut rng()).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn complex_t_needs_dof_above_two() {
        assert!(CesModel::complex_t(2.0).is_err());
        assert!(CesModel::complex_t(1.5).is_err());
        assert!(CesModel::complex_t(2.5).is_ok());
        assert!(CesModel::k_dist(0.0).is_err());
        assert!(CesModel::gen_gaussian(-1.0).is_err());
        assert!(sample_texture(&CesModel::ComplexT { dof: 2.0 }, 1, &mut rng()).is_err());
    }

    #[test]
    fn gen_gaussian_has_no_texture() {
        let m = CesModel::gen_gaussian(0.5).unwrap();
        assert!(matches!(sample_texture(&m, 4, &mut rng()), Err(Error::Unsupported(_))));
        assert_eq!(sample_modular(&m, 4, 4, &mut rng()).unwrap().len(), 4);
    }

    #[test]
    fn texture_means_are_one() {
        for model in [CesModel::k_dist(2.0).unwrap(), CesModel::complex_t(5.0).unwrap()] {
            let t = sample_texture(&model, 1_000_000, &mut rng()).unwrap();
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            assert!((mean - 1.0).abs() < 0.01, "{model:?}: mean {mean}");
            assert!(t.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn modular_means_are_dim() {
        for model in [
            CesModel::Gaussian,
            CesModel::k_dist(2.0).unwrap(),
            CesModel::gen_gaussian(0.5).unwrap(),
            CesModel::gen_gaussian(2.0).unwrap(),
        ] {
            let r = sample_modular(&model, 4, 400_000, &mut rng()).unwrap();
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            assert!((mean / 4.0 - 1.0).abs() < 0.01, "{model:?}: mean {mean}");
        }
    }

    #[test]
    fn zero_draws() {
        let scn = SignalScenario::new(C64::new(0., 0.), CVector::basis(2, 0), HermitianMatrix::identity(2), CesModel::Gaussian).unwrap();
        assert!(sample_ces(&scn, 0, &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn sampling_needs_pd_sigma() {
        let scn = SignalScenario::new(C64::new(0., 0.), CVector::basis(2, 0), HermitianMatrix::from_diag(&[1.0, 0.0]), CesModel::Gaussian).unwrap();
        assert!(matches!(sample_ces(&scn, 1, &mut rng()), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sampling_is_reproducible() {
        let scn = SignalScenario::new(C64::new(0.3, -0.1), CVector::basis(3, 1), HermitianMatrix::identity(3), CesModel::complex_t(5.0).unwrap()).unwrap();
        let a = sample_ces(&scn, 50, &mut rng()).unwrap();
        let b = sample_ces(&scn, 50, &mut rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loglik_examples() {
        let n = 3;
        let ll = gaussian_loglik(&CVector::zeros(n), C64::new(0., 0.), &CVector::basis(n, 0), &HermitianMatrix::identity(n)).unwrap();
        assert!((ll + n as f64 * PI.ln()).abs() < 1e-14);
        let one = CVector::from_real(&[1.0]).unwrap();
        let ll = gaussian_loglik(&one, C64::new(0., 0.), &one, &HermitianMatrix::identity(1)).unwrap();
        assert!((ll - (-PI.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn model_json_shape() {
        let m: CesModel = serde_json::from_str(r#"{"kind":"complex_t","dof":5}"#).unwrap();
        assert_eq!(m, CesModel::ComplexT { dof: 5.0 });
        let m: CesModel = serde_json::from_str(r#"{"kind":"gaussian"}"#).unwrap();
        assert_eq!(m, CesModel::Gaussian);
        assert!(serde_json::from_str::<CesModel>(r#"{"kind":"k_dist","shape":2,"typo":1}"#).is_err());
        assert_eq!(CesModel::gen_gaussian(0.5).unwrap().label(), "gen_gaussian(0.5)");
    }
}
