//! Chi-square and weighted chi-square distribution functions.

use std::f64::consts::PI;

use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

/// Target bound on the truncated tail of the Imhof integral.
const IMHOF_TAIL_TOL: f64 = 1e-10;
/// Absolute tolerance per adaptive quadrature panel.
const IMHOF_PANEL_TOL: f64 = 1e-13;

/// CDF of the central χ² law with `dof` degrees of freedom.
pub fn chi2_cdf(t: f64, dof: u32) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if dof == 2 {
        return -(-t / 2.0).exp_m1();
    }
    gamma_lr(dof as f64 / 2.0, t / 2.0)
}

/// Upper quantile: the threshold `t` with `P(χ²_dof ≤ t) = p_level`.
pub fn chi2_quantile(p_level: f64, dof: u32) -> Result<f64> {
    if !(p_level > 0.0 && p_level < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p_level}")));
    }
    if dof == 0 {
        return Err(Error::InvalidParameter("degrees of freedom must be positive".into()));
    }
    if dof == 2 {
        return Ok(-2.0 * (-p_level).ln_1p());
    }
    let mut hi = dof as f64;
    while chi2_cdf(hi, dof) < p_level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof) < p_level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(Σ λᵢ vᵢ ≤ t)` with independent `vᵢ ~ χ²₁`.
///
/// Equal weights reduce to a scaled χ²; otherwise the characteristic function
/// is inverted numerically (Imhof's integral).
pub fn weighted_chisq_cdf(lambdas: &[f64], t: f64) -> Result<f64> {
    validate_weights(lambdas)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let first = lambdas[0];
    if lambdas.iter().all(|&l| l == first) {
        return Ok(chi2_cdf(t / first, lambdas.len() as u32));
    }
    Ok(imhof_cdf(lambdas, t))
}

/// [`weighted_chisq_cdf`] without the equal-weights shortcut: always inverts
/// the characteristic function.
pub fn weighted_chisq_cdf_numeric(lambdas: &[f64], t: f64) -> Result<f64> {
    validate_weights(lambdas)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(imhof_cdf(lambdas, t))
}

fn validate_weights(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("at least one weight is required".into()));
    }
    if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidParameter(format!("weights must be positive and finite, got {bad}")));
    }
    Ok(())
}

struct Imhof<'a> {
    lambdas: &'a [f64],
    t: f64,
}

impl Imhof<'_> {
    /// Phase `θ(u) = ½ Σ atan(λu) − ½ t u`.
    fn theta(&self, u: f64) -> f64 {
        0.5 * self.lambdas.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * self.t * u
    }

    fn theta_prime(&self, u: f64) -> f64 {
        0.5 * self.lambdas.iter().map(|l| l / (1.0 + l * l * u * u)).sum::<f64>() - 0.5 * self.t
    }

    /// Envelope `1/(u ρ(u))` with `ρ(u) = Π (1 + λ²u²)^{1/4}`.
    fn envelope(&self, u: f64) -> f64 {
        let log_rho: f64 = self.lambdas.iter().map(|l| 0.25 * (l * l * u * u).ln_1p()).sum();
        (-log_rho).exp() / u
    }

    fn integrand(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.5 * (self.lambdas.iter().sum::<f64>() - self.t);
        }
        self.theta(u).sin() * self.envelope(u)
    }

    /// Bound on `(1/π) |∫_U^∞ integrand|`: the smaller of the absolute
    /// envelope bound and, once the phase is monotone, the oscillation bound
    /// `2·envelope(U) / |θ'(U)|`.
    fn tail_bound(&self, u: f64) -> f64 {
        let k = self.lambdas.len() as f64 / 2.0;
        let sqrt_prod: f64 = self.lambdas.iter().map(|l| l.sqrt()).product();
        let absolute = 1.0 / (PI * k * u.powf(k) * sqrt_prod);
        let slope = self.theta_prime(u);
        let oscillating = if slope < 0.0 { 2.0 * self.envelope(u) / (PI * -slope) } else { f64::INFINITY };
        absolute.min(oscillating)
    }
}

fn imhof_cdf(lambdas: &[f64], t: f64) -> f64 {
    let im = Imhof { lambdas, t };
    let mut upper = 1.0;
    while im.tail_bound(upper) > IMHOF_TAIL_TOL {
        upper *= 1.5;
    }
    // Panels of at most a quarter of the local oscillation period, growing
    // geometrically with u where the envelope changes slowly.
    let base = PI / (lambdas.iter().sum::<f64>() + t);
    let mut integral = 0.0;
    let mut a = 0.0;
    while a < upper {
        let freq = im.theta_prime(a).abs().max(1e-300);
        let width = (PI / (2.0 * freq)).min(0.5 * a + base);
        let b = (a + width).min(upper);
        integral += adaptive_gk(&|u| im.integrand(u), a, b, IMHOF_PANEL_TOL, 30);
        a = b;
    }
    (0.5 - integral / PI).clamp(0.0, 1.0)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 step: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        kronrod += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adaptive_gk(f, a, m, 0.5 * tol, depth - 1) + adaptive_gk(f, m, b, 0.5 * tol, depth - 1)
}
