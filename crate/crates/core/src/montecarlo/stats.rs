use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at 95% confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of an
/// ascending sample and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidParameter("KS distance of an empty sample".into()));
    }
    if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("KS sample must be sorted ascending".into()));
    }
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(d.clamp(0.0, 1.0))
}

/// Linearly interpolated `q`-quantile of an ascending sample.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Log-spaced histogram of a nonnegative statistic, used in place of full
/// storage for very long runs. Counts are integers, so merging is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileSketch {
    pub log10_lo: f64,
    pub log10_hi: f64,
    /// Values below `10^log10_lo`.
    pub below: u64,
    /// Values above `10^log10_hi`.
    pub above: u64,
    pub counts: Vec<u64>,
    pub total: u64,
    pub min: f64,
    pub max: f64,
}

impl QuantileSketch {
    pub const BINS: usize = 16_384;

    pub fn new() -> Self {
        Self {
            log10_lo: -12.0,
            log10_hi: 6.0,
            below: 0,
            above: 0,
            counts: vec![0; Self::BINS],
            total: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn width(&self) -> f64 {
        (self.log10_hi - self.log10_lo) / self.counts.len() as f64
    }

    pub fn push(&mut self, x: f64) {
        self.total += 1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        let lx = if x > 0.0 { x.log10() } else { f64::NEG_INFINITY };
        if lx < self.log10_lo {
            self.below += 1;
        } else if lx >= self.log10_hi {
            self.above += 1;
        } else {
            let k = (((lx - self.log10_lo) / self.width()) as usize).min(self.counts.len() - 1);
            self.counts[k] += 1;
        }
    }

    /// Approximate `q`-quantile; relative error at most one bin width
    /// (about 0.25%) inside the covered range.
    pub fn quantile(&self, q: f64) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        let target = q.clamp(0.0, 1.0) * self.total as f64;
        let mut cum = self.below as f64;
        if target <= cum {
            return self.min.max(0.0);
        }
        let w = self.width();
        for (k, &c) in self.counts.iter().enumerate() {
            if c > 0 && cum + c as f64 >= target {
                let frac = (target - cum) / c as f64;
                let lx = self.log10_lo + (k as f64 + frac) * w;
                return 10f64.powf(lx).clamp(self.min, self.max);
            }
            cum += c as f64;
        }
        self.max
    }
}

impl Default for QuantileSketch {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{chi2_cdf, chi2_quantile};

    #[test]
    fn wilson_contains_estimate() {
        for (s, n) in [(0, 10), (10, 10), (3, 10), (1000, 20000), (0, 1)] {
            let (lo, hi) = wilson_interval(s, n);
            let p = s as f64 / n as f64;
            assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{s}/{n}: [{lo}, {hi}]");
        }
        // textbook value: 5/100 → [0.02154, 0.11175]
        let (lo, hi) = wilson_interval(5, 100);
        assert!((lo - 0.021_543).abs() < 1e-5 && (hi - 0.111_750).abs() < 1e-5, "{lo} {hi}");
    }

    #[test]
    fn ks_single_atom() {
        let c = 1.3;
        let f = |x: f64| chi2_cdf(x, 2);
        let d = ks_distance(&[c], f).unwrap();
        assert!((d - f(c).max(1.0 - f(c))).abs() < 1e-15);
    }

    #[test]
    fn ks_stratified_grid() {
        let n = 500;
        let sample: Vec<f64> = (0..n).map(|i| chi2_quantile((i as f64 + 0.5) / n as f64, 2).unwrap()).collect();
        let d = ks_distance(&sample, |x| chi2_cdf(x, 2)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12, "{d}");
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(ks_distance(&[], |x| x).is_err());
        assert!(ks_distance(&[2.0, 1.0], |x| x).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sorted_quantile(&s, 0.5), 3.0);
        assert_eq!(sorted_quantile(&s, 0.125), 1.5);
        assert_eq!(sorted_quantile(&s, 1.0), 5.0);
    }

    #[test]
    fn sketch_tracks_quantiles() {
        let mut sk = QuantileSketch::new();
        let n = 100_000;
        for i in 0..n {
            sk.push(chi2_quantile((i as f64 + 0.5) / n as f64, 2).unwrap());
        }
        sk.push(0.0);
        for q in [0.01, 0.5, 0.95, 0.999] {
            let exact = chi2_quantile(q, 2).unwrap();
            assert!((sk.quantile(q) / exact - 1.0).abs() < 5e-3, "q={q}");
        }
        assert_eq!(sk.quantile(0.0), 0.0);
    }
}
