//! Monte Carlo experiment harness: null and alternative trials, false-alarm
//! and detection rates with Wilson intervals, KS distances to χ²₂ and
//! empirical threshold calibration.
//!
//! Trial `i` always draws from the substream `(seed, Trial, i)`, and results
//! are folded in trial order, so every output is independent of the worker
//! count. Detection sweeps reuse the same trial substreams at every SNR point
//! (common random numbers), which keeps Pd curves smooth and makes the α = 0
//! point identical to the null run.

mod config;
mod stats;

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, SigmaSpec, SteeringSpec, Threshold, DEFAULT_SAMPLE_SIZE, SCHEMA_VERSION};
pub use stats::{ks_distance, sorted_quantile, wilson_interval, QuantileSketch, Z_95};

use crate::asymptotics::{chi2_cdf, chi2_quantile};
use crate::ces::{CesSampler, SignalScenario};
use crate::detectors::{evaluate, DetectorKind, DetectorOutput, DOF};
use crate::error::{Error, Result};
use crate::linalg::{CVector, Dataset, HermitianMatrix, C64};
use crate::rng::{substream, Stream};

/// Statistics are kept in full up to this many trials; longer runs switch to
/// a [`QuantileSketch`] and skip the KS distance.
pub const FULL_STORAGE_LIMIT: usize = 1_000_000;

/// Minimum expected number of exceedances for an empirical calibration.
pub const MIN_CALIBRATION_EXCEEDANCES: f64 = 100.0;

const CHUNK: usize = 4096;

pub const SNR_DEFINITION: &str = "|alpha|^2 * v^H Sigma^-1 v";

/// Rejection rate at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub threshold: f64,
    pub nominal_pfa: Option<f64>,
    pub exceedances: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl RateEstimate {
    fn new(threshold: &Threshold, exceedances: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(exceedances, trials);
        let estimate = if trials == 0 { 0.0 } else { exceedances as f64 / trials as f64 };
        Self { threshold: threshold.value, nominal_pfa: threshold.nominal_pfa, exceedances, trials, estimate, ci_lo, ci_hi }
    }
}

/// Empirical versus asymptotic threshold at one nominal false-alarm level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub nominal_pfa: f64,
    pub empirical_threshold: f64,
    pub asymptotic_threshold: f64,
    /// `(empirical − asymptotic) / asymptotic`
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub detector: DetectorKind,
    /// Ascending statistics (full-storage mode).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<f64>,
    /// Histogram sketch (runs longer than [`FULL_STORAGE_LIMIT`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sketch: Option<QuantileSketch>,
    pub rates: Vec<RateEstimate>,
    /// KS distance to χ²₂; null-hypothesis points in full-storage mode only.
    pub ks_chi2: Option<f64>,
    /// Trials whose statistic saturated (Kelly log floor or infinite value).
    pub overflow_events: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calibration: Vec<Calibration>,
}

impl DetectorSummary {
    /// Empirical `q`-quantile of the statistic.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if !self.statistics.is_empty() {
            Some(sorted_quantile(&self.statistics, q))
        } else {
            self.sketch.as_ref().map(|s| s.quantile(q))
        }
    }
}

/// One amplitude of the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// `None` for the signal-free point (SNR = −∞ dB).
    pub snr_db: Option<f64>,
    pub alpha: [f64; 2],
    pub trials: usize,
    pub detectors: Vec<DetectorSummary>,
}

impl OperatingPoint {
    pub fn snr_db_value(&self) -> f64 {
        self.snr_db.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn detector(&self, kind: DetectorKind) -> Option<&DetectorSummary> {
        self.detectors.iter().find(|d| d.detector == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub model: String,
    pub snr_definition: String,
    /// `vᴴΣ⁻¹v`
    pub steering_gain: f64,
    pub requested_trials: usize,
    pub partial: bool,
    pub points: Vec<OperatingPoint>,
    /// Measured run time; kept out of the serialized result so that result
    /// files stay byte-reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExperimentResult {
    /// Signal-free point, if the run has one.
    pub fn null_point(&self) -> Option<&OperatingPoint> {
        self.points.iter().find(|p| p.alpha == [0.0, 0.0])
    }

    pub fn detector(&self, kind: DetectorKind) -> Option<&DetectorSummary> {
        self.points.first().and_then(|p| p.detector(kind))
    }

    /// Flat table, one row per (point, detector, threshold). The rate column
    /// is the false-alarm rate at α = 0 and the detection rate otherwise.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for point in &self.points {
            for det in &point.detectors {
                for rate in &det.rates {
                    w.write_record([
                        det.detector.name().to_string(),
                        self.model.clone(),
                        self.config.n.to_string(),
                        self.config.m1.to_string(),
                        self.config.m0.to_string(),
                        point.trials.to_string(),
                        fmt_f64(rate.threshold),
                        fmt_f64(rate.estimate),
                        fmt_f64(rate.ci_lo),
                        fmt_f64(rate.ci_hi),
                        det.ks_chi2.map(fmt_f64).unwrap_or_default(),
                        self.seed.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Detection curve of one detector, sorted by SNR then threshold.
    pub fn roc_rows(&self, kind: DetectorKind) -> Vec<RocRow> {
        let mut rows: Vec<RocRow> = self
            .points
            .iter()
            .filter_map(|p| p.detector(kind).map(|d| (p, d)))
            .flat_map(|(p, d)| {
                d.rates.iter().map(move |r| RocRow {
                    snr_db: p.snr_db_value(),
                    threshold: r.threshold,
                    pd: r.estimate,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                })
            })
            .collect();
        rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.threshold.total_cmp(&b.threshold)));
        rows
    }

    pub fn write_roc_csv<W: Write>(&self, kind: DetectorKind, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROC_HEADER)?;
        for r in self.roc_rows(kind) {
            w.write_record([fmt_f64(r.snr_db), fmt_f64(r.threshold), fmt_f64(r.pd), fmt_f64(r.ci_lo), fmt_f64(r.ci_hi)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 12] =
    ["detector", "model", "N", "M1", "M0", "trials", "threshold", "pfa_hat", "ci_lo", "ci_hi", "ks", "seed"];

pub const ROC_HEADER: [&str; 5] = ["snr_db", "threshold", "pd", "ci_lo", "ci_hi"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocRow {
    pub snr_db: f64,
    pub threshold: f64,
    pub pd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Per-detector accumulator, folded in trial order.
struct Accumulator {
    kind: DetectorKind,
    full: bool,
    values: Vec<f64>,
    sketch: QuantileSketch,
    exceed: Vec<u64>,
    overflow: u64,
}

impl Accumulator {
    fn new(kind: DetectorKind, full: bool, thresholds: usize) -> Self {
        let sketch = if full { QuantileSketch { counts: Vec::new(), ..QuantileSketch::new() } } else { QuantileSketch::new() };
        Self { kind, full, values: Vec::new(), sketch, exceed: vec![0; thresholds], overflow: 0 }
    }

    fn push(&mut self, out: &DetectorOutput, thresholds: &[Threshold]) {
        let s = out.statistic;
        if out.clamped || s.is_infinite() {
            self.overflow += 1;
        }
        for (count, t) in self.exceed.iter_mut().zip(thresholds) {
            if s > t.value {
                *count += 1;
            }
        }
        if self.full {
            self.values.push(s);
        } else {
            self.sketch.push(s);
        }
    }

    fn finish(mut self, thresholds: &[Threshold], trials: usize, null: bool) -> DetectorSummary {
        let rates = self.exceed.iter().zip(thresholds).map(|(&e, t)| RateEstimate::new(t, e, trials as u64)).collect();
        let (statistics, sketch, ks_chi2) = if self.full {
            self.values.sort_by(f64::total_cmp);
            let ks = if null && trials > 0 { ks_distance(&self.values, |x| chi2_cdf(x, DOF)).ok() } else { None };
            (self.values, None, ks)
        } else {
            (Vec::new(), Some(self.sketch), None)
        };
        DetectorSummary { detector: self.kind, statistics, sketch, rates, ks_chi2, overflow_events: self.overflow, calibration: Vec::new() }
    }
}

/// Everything a trial needs, prepared once per operating point.
struct TrialContext<'a> {
    config: &'a ExperimentConfig,
    primary: CesSampler,
    secondary: CesSampler,
    steering: CVector,
}

impl TrialContext<'_> {
    fn run(&self, index: usize) -> Result<Vec<DetectorOutput>> {
        let cfg = self.config;
        let mut rng = substream(cfg.seed, Stream::Trial, index as u64);
        let primary = self.primary.draw_many(cfg.m1, &mut rng);
        let secondary = self.secondary.draw_many(cfg.m0, &mut rng);
        let data = Dataset::new(primary, secondary, self.steering.clone())?;
        let outs = evaluate(&data, &cfg.detectors, cfg.wald_scatter)?;
        if let Some(o) = outs.iter().find(|o| o.statistic.is_nan()) {
            return Err(Error::InvalidParameter(format!("{} statistic is NaN at trial {index}", o.detector.name())));
        }
        Ok(outs)
    }
}

/// Runs one operating point. On a failing trial the trials before it are
/// summarized and returned together with the error.
fn run_point(
    config: &ExperimentConfig,
    scenario: &SignalScenario,
    thresholds: &[Threshold],
    snr_db: Option<f64>,
) -> (OperatingPoint, Option<Error>) {
    let alpha = [scenario.alpha.re, scenario.alpha.im];
    let null = alpha == [0.0, 0.0];
    let full = config.trials <= FULL_STORAGE_LIMIT;
    let mut accs: Vec<Accumulator> = config.detectors.iter().map(|&k| Accumulator::new(k, full, thresholds.len())).collect();
    let mut completed = 0;
    let mut failure = None;

    let prepared = scenario
        .sampler()
        .and_then(|p| scenario.with_alpha(C64::new(0.0, 0.0)).sampler().map(|s| (p, s)));
    match prepared {
        Err(e) => failure = Some(e),
        Ok((primary, secondary)) => {
            let ctx = TrialContext { config, primary, secondary, steering: scenario.steering.clone() };
            'chunks: for start in (0..config.trials).step_by(CHUNK) {
                let end = (start + CHUNK).min(config.trials);
                let outs: Vec<Result<Vec<DetectorOutput>>> = (start..end).into_par_iter().map(|i| ctx.run(i)).collect();
                for out in outs {
                    match out {
                        Ok(outs) => {
                            for (acc, o) in accs.iter_mut().zip(&outs) {
                                acc.push(o, thresholds);
                            }
                            completed += 1;
                        }
                        Err(e) => {
                            failure = Some(e);
                            break 'chunks;
                        }
                    }
                }
            }
        }
    }

    let detectors = accs.into_iter().map(|a| a.finish(thresholds, completed, null)).collect();
    (OperatingPoint { snr_db, alpha, trials: completed, detectors }, failure)
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn run_points(
    config: &ExperimentConfig,
    points: &[(Option<f64>, C64)],
    thresholds: &[Threshold],
    workers: usize,
) -> Result<ExperimentResult> {
    config.validate()?;
    let started = Instant::now();
    let scenario = config.scenario()?;
    let steering_gain = steering_gain(&scenario.sigma, &scenario.steering)?;

    let (done, failure) = with_workers(workers, || {
        let mut done = Vec::with_capacity(points.len());
        for &(snr_db, alpha) in points {
            let (point, failure) = run_point(config, &scenario.with_alpha(alpha), thresholds, snr_db);
            done.push(point);
            if failure.is_some() {
                return (done, failure);
            }
        }
        (done, None)
    })?;

    let mut result = ExperimentResult {
        config: config.clone(),
        seed: config.seed,
        model: config.model.label(),
        snr_definition: SNR_DEFINITION.to_string(),
        steering_gain,
        requested_trials: config.trials,
        partial: failure.is_some(),
        points: done,
        wall_time: Duration::ZERO,
    };
    attach_calibration(&mut result);
    result.wall_time = started.elapsed();
    match failure {
        None => Ok(result),
        Some(e) => {
            let completed = result.points.last().map_or(0, |p| p.trials);
            log::error!("run stopped after {completed} trials: {e}");
            Err(Error::PartialRun { completed, requested: config.trials, message: e.to_string(), result: Box::new(result) })
        }
    }
}

/// Empirical calibration on the null point for every nominal level with at
/// least [`MIN_CALIBRATION_EXCEEDANCES`] expected exceedances.
fn attach_calibration(result: &mut ExperimentResult) {
    let levels = result.config.nominal_pfa.clone();
    for point in result.points.iter_mut().filter(|p| p.alpha == [0.0, 0.0]) {
        let trials = point.trials as f64;
        for det in &mut point.detectors {
            det.calibration = levels
                .iter()
                .filter(|&&p| p * trials >= MIN_CALIBRATION_EXCEEDANCES)
                .filter_map(|&p| calibration_entry(det, p).ok())
                .collect();
        }
    }
}

fn calibration_entry(det: &DetectorSummary, nominal_pfa: f64) -> Result<Calibration> {
    let asymptotic_threshold = chi2_quantile(1.0 - nominal_pfa, DOF)?;
    let empirical_threshold = det
        .quantile(1.0 - nominal_pfa)
        .ok_or_else(|| Error::InvalidParameter("no statistics recorded".into()))?;
    Ok(Calibration {
        nominal_pfa,
        empirical_threshold,
        asymptotic_threshold,
        relative_gap: (empirical_threshold - asymptotic_threshold) / asymptotic_threshold,
    })
}

/// `vᴴΣ⁻¹v`
pub fn steering_gain(sigma: &HermitianMatrix, v: &CVector) -> Result<f64> {
    Ok(sigma.cholesky()?.quad_form(v, v)?.re)
}

/// Null-hypothesis run. Rates are reported at the explicit thresholds and at
/// the χ²₂ quantiles of the nominal levels.
pub fn run_h0(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    config.validate()?;
    if !config.is_null() {
        return Err(Error::InvalidConfig("run_h0 requires alpha = 0".into()));
    }
    let thresholds = config.threshold_set()?;
    run_points(config, &[(None, C64::new(0.0, 0.0))], &thresholds, workers)
}

/// Amplitudes of the SNR grid, with the phase of the configured amplitude.
/// Without a grid, the configured amplitude alone.
pub fn snr_points(config: &ExperimentConfig) -> Result<Vec<(Option<f64>, C64)>> {
    let alpha = config.alpha();
    let gain = steering_gain(&config.sigma.build(config.n)?, &config.steering.build(config.n)?)?;
    let snr_of = |a: C64| if a.norm_sqr() == 0.0 { None } else { Some(10.0 * (a.norm_sqr() * gain).log10()) };
    if config.snr_db.is_empty() {
        return Ok(vec![(snr_of(alpha), alpha)]);
    }
    let phase = if alpha.norm_sqr() > 0.0 { alpha.arg() } else { 0.0 };
    Ok(config
        .snr_db
        .iter()
        .map(|&db| (Some(db), C64::from_polar((10f64.powf(db / 10.0) / gain).sqrt(), phase)))
        .collect())
}

/// Detection run over the SNR grid (or the configured amplitude) at the given
/// thresholds.
pub fn run_h1(config: &ExperimentConfig, thresholds: &[Threshold], workers: usize) -> Result<ExperimentResult> {
    config.validate()?;
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("run_h1 needs at least one threshold (thresholds or nominal_pfa)".into()));
    }
    run_points(config, &snr_points(config)?, thresholds, workers)
}

/// Detection curves: the signal-free point followed by the SNR grid.
pub fn run_roc(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let thresholds = config.threshold_set()?;
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("roc needs thresholds or nominal_pfa".into()));
    }
    let mut points = vec![(None, C64::new(0.0, 0.0))];
    points.extend(snr_points(config)?.into_iter().filter(|p| p.0.is_some()));
    run_points(config, &points, &thresholds, workers)
}

/// Empirical `(1 − nominal_pfa)` threshold of every detector from a null run,
/// next to the asymptotic χ²₂ threshold.
pub fn calibrate_threshold(
    config: &ExperimentConfig,
    nominal_pfa: f64,
    workers: usize,
) -> Result<Vec<(DetectorKind, Calibration)>> {
    if !(nominal_pfa > 0.0 && nominal_pfa < 1.0) {
        return Err(Error::InvalidConfig(format!("nominal_pfa must lie in (0, 1), got {nominal_pfa}")));
    }
    let needed = (MIN_CALIBRATION_EXCEEDANCES / nominal_pfa).ceil() as usize;
    if config.trials < needed {
        return Err(Error::InvalidConfig(format!(
            "calibration at pfa {nominal_pfa} needs at least {needed} trials (have {})",
            config.trials
        )));
    }
    let mut cfg = config.clone();
    cfg.alpha = [0.0, 0.0];
    cfg.nominal_pfa = Vec::new();
    let result = run_h0(&cfg, workers)?;
    result.points[0].detectors.iter().map(|d| Ok((d.detector, calibration_entry(d, nominal_pfa)?))).collect()
}
