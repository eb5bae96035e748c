use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::asymptotics::chi2_quantile;
use crate::ces::{CesModel, SignalScenario};
use crate::detectors::{DetectorKind, WaldScatter, DOF};
use crate::error::{Error, Result};
use crate::linalg::{CVector, HermitianMatrix, C64};

pub const SCHEMA_VERSION: u32 = 1;

/// Default sample size of the sandwich-matrix expectation.
pub const DEFAULT_SAMPLE_SIZE: usize = 1_000_000;

/// True covariance matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    #[default]
    Identity,
    /// `Σ_jk = ρ^|j−k|`
    ExpCorrelation { rho: f64 },
    /// Row-major real and imaginary parts.
    Explicit { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

/// Steering vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SteeringSpec {
    /// Unit-norm `v_n = exp(i2πfn)/√N`.
    Fourier { freq: f64 },
    Explicit { re: Vec<f64>, im: Vec<f64> },
}

impl Default for SteeringSpec {
    fn default() -> Self {
        SteeringSpec::Fourier { freq: 0.0 }
    }
}

impl SigmaSpec {
    pub fn build(&self, n: usize) -> Result<HermitianMatrix> {
        match self {
            SigmaSpec::Identity => Ok(HermitianMatrix::identity(n)),
            SigmaSpec::ExpCorrelation { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidConfig(format!("sigma.rho must satisfy |rho| < 1, got {rho}")));
                }
                Ok(HermitianMatrix::from_lower_fn(n, |i, j| C64::new(rho.powi((i - j) as i32), 0.0)))
            }
            SigmaSpec::Explicit { re, im } => {
                if re.len() != n || im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
                    return Err(Error::InvalidConfig(format!("sigma.re and sigma.im must both be {n}x{n}")));
                }
                let rows: Vec<C64> = (0..n * n).map(|k| C64::new(re[k / n][k % n], im[k / n][k % n])).collect();
                HermitianMatrix::from_rows(n, &rows).map_err(|e| Error::InvalidConfig(format!("sigma: {e}")))
            }
        }
    }
}

impl SteeringSpec {
    pub fn build(&self, n: usize) -> Result<CVector> {
        match self {
            SteeringSpec::Fourier { freq } => {
                let scale = 1.0 / (n as f64).sqrt();
                CVector::new((0..n).map(|k| C64::from_polar(scale, 2.0 * PI * freq * k as f64)).collect())
            }
            SteeringSpec::Explicit { re, im } => {
                if re.len() != n || im.len() != n {
                    return Err(Error::InvalidConfig(format!("steering.re and steering.im must have length {n}")));
                }
                CVector::new(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
            }
        }
        .map_err(|e| Error::InvalidConfig(format!("steering: {e}")))
    }
}

/// One experiment: geometry, true law, detectors and Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n: usize,
    pub m1: usize,
    pub m0: usize,
    pub model: CesModel,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub steering: SteeringSpec,
    /// `[Re α, Im α]`; zero under the null hypothesis.
    #[serde(default)]
    pub alpha: [f64; 2],
    pub detectors: Vec<DetectorKind>,
    #[serde(default)]
    pub wald_scatter: WaldScatter,
    pub trials: usize,
    pub seed: u64,
    /// Explicit decision thresholds.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Nominal false-alarm levels; each contributes its χ²₂ threshold and,
    /// with enough trials, an empirical calibration.
    #[serde(default)]
    pub nominal_pfa: Vec<f64>,
    /// SNR grid (dB) for detection sweeps, SNR = |α|²·vᴴΣ⁻¹v.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Sample size of the sandwich expectation (asymptotics only).
    #[serde(default)]
    pub sample_size: Option<usize>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version must be {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.m1 == 0 {
            return bad("m1 must be at least 1".into());
        }
        if self.m0 < self.n {
            return bad(format!("m0 >= n is required so S0 is invertible (m0 = {}, n = {})", self.m0, self.n));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.detectors.is_empty() {
            return bad("detectors must list at least one detector".into());
        }
        let unique: BTreeSet<_> = self.detectors.iter().collect();
        if unique.len() != self.detectors.len() {
            return bad("detectors must not repeat".into());
        }
        if let Some(d) = self.detectors.iter().find(|d| d.needs_single_primary()) {
            if self.m1 != 1 {
                return bad(format!("detector {} requires m1 = 1 (m1 = {})", d.name(), self.m1));
            }
        }
        if !self.alpha.iter().all(|a| a.is_finite()) {
            return bad("alpha must be finite".into());
        }
        self.model.validate().map_err(|e| Error::InvalidConfig(format!("model: {e}")))?;
        if let Some(p) = self.nominal_pfa.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("nominal_pfa entries must lie in (0, 1), got {p}"));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("thresholds must be finite and nonnegative, got {t}"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("snr_db entries must be finite, got {s}"));
        }
        if self.sample_size == Some(0) {
            return bad("sample_size must be positive".into());
        }
        let sigma = self.sigma.build(self.n)?;
        sigma
            .cholesky()
            .map_err(|e| Error::InvalidConfig(format!("sigma must be positive definite: {e}")))?;
        let v = self.steering.build(self.n)?;
        if v.norm_sqr() == 0.0 {
            return bad("steering vector must be nonzero".into());
        }
        Ok(())
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha[0], self.alpha[1])
    }

    pub fn is_null(&self) -> bool {
        self.alpha == [0.0, 0.0]
    }

    pub fn scenario(&self) -> Result<SignalScenario> {
        SignalScenario::new(self.alpha(), self.steering.build(self.n)?, self.sigma.build(self.n)?, self.model)
    }

    /// Decision thresholds: explicit ones first, then the χ²₂ quantiles of the
    /// nominal levels, each tagged with its nominal level.
    pub fn threshold_set(&self) -> Result<Vec<Threshold>> {
        let mut out: Vec<Threshold> = self.thresholds.iter().map(|&value| Threshold { value, nominal_pfa: None }).collect();
        for &p in &self.nominal_pfa {
            out.push(Threshold { value: chi2_quantile(1.0 - p, DOF)?, nominal_pfa: Some(p) });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub nominal_pfa: Option<f64>,
}
