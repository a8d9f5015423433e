//! Error metrics against a known truth and the confidence-interval driven
//! trial protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::case::GridCase;
use crate::casegen::{assign_devices, generate_with_assignment, NoiseSpec, SeCase};
use crate::error::{Error, Result};
use crate::linear_se::{solve_linear_se, EstimateResult};
use crate::nonlinear_se::{solve_nonlinear_se, NlOptions};
use crate::powerflow::{solve_power_flow, PfOptions};
use crate::rng::{derive_seed, Domain};
use crate::stats::Welford;

fn check_lengths(est_vr: &[f64], est_vi: &[f64], vr: &[f64], vi: &[f64]) -> Result<()> {
    for (a, b) in [(est_vr.len(), vr.len()), (est_vi.len(), vi.len()), (est_vr.len(), est_vi.len())] {
        if a != b {
            return Err(Error::LengthMismatch { left: a, right: b });
        }
    }
    Ok(())
}

fn stacked_errors<'a>(
    est_vr: &'a [f64],
    est_vi: &'a [f64],
    vr: &'a [f64],
    vi: &'a [f64],
) -> impl Iterator<Item = f64> + 'a {
    est_vr
        .iter()
        .zip(vr)
        .chain(est_vi.iter().zip(vi))
        .map(|(a, b)| a - b)
}

/// Sum of squared errors of the stacked rectangular voltage vector.
pub fn sigma_ss(est_vr: &[f64], est_vi: &[f64], vr: &[f64], vi: &[f64]) -> Result<f64> {
    check_lengths(est_vr, est_vi, vr, vi)?;
    Ok(stacked_errors(est_vr, est_vi, vr, vi).map(|e| e * e).sum())
}

/// Largest absolute error over the stacked rectangular components.
pub fn sigma_max(est_vr: &[f64], est_vi: &[f64], vr: &[f64], vi: &[f64]) -> Result<f64> {
    check_lengths(est_vr, est_vi, vr, vi)?;
    Ok(stacked_errors(est_vr, est_vi, vr, vi).fold(0.0, |m, e| m.max(e.abs())))
}

/// Largest per-bus complex error modulus.
pub fn sigma_max_modulus(est_vr: &[f64], est_vi: &[f64], vr: &[f64], vi: &[f64]) -> Result<f64> {
    check_lengths(est_vr, est_vi, vr, vi)?;
    Ok((0..vr.len()).fold(0.0, |m, k| m.max((est_vr[k] - vr[k]).hypot(est_vi[k] - vi[k]))))
}

/// Squared complex error per bus.
pub fn bus_squared_errors(est_vr: &[f64], est_vi: &[f64], vr: &[f64], vi: &[f64]) -> Result<Vec<f64>> {
    check_lengths(est_vr, est_vi, vr, vi)?;
    Ok((0..vr.len())
        .map(|k| (est_vr[k] - vr[k]).powi(2) + (est_vi[k] - vi[k]).powi(2))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    SigmaSs,
    SigmaMax,
}

impl Measure {
    pub fn eval(self, est: &EstimateResult, vr: &[f64], vi: &[f64]) -> Result<f64> {
        match self {
            Measure::SigmaSs => sigma_ss(&est.vr, &est.vi, vr, vi),
            Measure::SigmaMax => sigma_max(&est.vr, &est.vi, vr, vi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    DeltaI,
    DeltaY,
}

impl Model {
    pub fn estimate(self, se: &SeCase, nl: &NlOptions) -> Result<EstimateResult> {
        match self {
            Model::DeltaI => solve_linear_se(se),
            Model::DeltaY => solve_nonlinear_se(se, nl),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::DeltaI => "delta-i",
            Model::DeltaY => "delta-y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOptions {
    pub level: f64,
    pub rel: f64,
    pub min_trials: usize,
    pub max_trials: usize,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions {
            level: 0.99,
            rel: 0.05,
            min_trials: 30,
            max_trials: 2000,
        }
    }
}

impl CiOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0) {
            return Err(Error::Config("rel must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("confidence level must lie in (0, 1)".into()));
        }
        if self.max_trials == 0 || self.min_trials > self.max_trials {
            return Err(Error::Config("need 0 < max_trials and min_trials ≤ max_trials".into()));
        }
        Ok(())
    }

    /// Two-sided normal quantile for the confidence level.
    pub fn z(&self) -> f64 {
        let normal = Normal::standard();
        normal.inverse_cdf(0.5 + 0.5 * self.level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Ci,
    MaxTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub ci_half_width: f64,
    pub trials: usize,
    pub stopped_by: StopReason,
    /// The relative criterion was undefined: the interval still contained 0
    /// (or the mean vanished) at `max_trials`.
    pub degenerate_mean: bool,
    /// Trial indices whose estimation failed; not part of `values`.
    pub failed_trials: Vec<u64>,
}

/// Incremental form of [`ci_stopping`].
#[derive(Debug, Clone)]
pub struct CiStopper {
    opts: CiOptions,
    z: f64,
    acc: Welford,
    values: Vec<f64>,
    stop: Option<StopReason>,
}

impl CiStopper {
    pub fn new(opts: CiOptions) -> Result<Self> {
        opts.validate()?;
        Ok(CiStopper {
            z: opts.z(),
            opts,
            acc: Welford::default(),
            values: Vec::new(),
            stop: None,
        })
    }

    pub fn half_width(&self) -> f64 {
        let n = self.acc.n;
        if n < 2 {
            f64::INFINITY
        } else {
            self.z * self.acc.std() / (n as f64).sqrt()
        }
    }

    /// Feeds one value; returns true once the stream should stop.
    pub fn push(&mut self, x: f64) -> bool {
        if self.stop.is_some() {
            return true;
        }
        self.values.push(x);
        self.acc.push(x);
        let n = self.values.len();
        if n >= self.opts.min_trials {
            let hw = self.half_width();
            let mean = self.acc.mean;
            if hw == 0.0 || (mean != 0.0 && hw < self.opts.rel * mean.abs()) {
                self.stop = Some(StopReason::Ci);
            }
        }
        if self.stop.is_none() && n >= self.opts.max_trials {
            self.stop = Some(StopReason::MaxTrials);
        }
        self.stop.is_some()
    }

    pub fn finish(self, failed_trials: Vec<u64>) -> TrialStats {
        let hw = if self.acc.n < 2 { 0.0 } else { self.half_width() };
        let mean = self.acc.mean;
        let stopped_by = self.stop.unwrap_or(StopReason::MaxTrials);
        TrialStats {
            trials: self.values.len(),
            values: self.values,
            mean,
            ci_half_width: hw,
            stopped_by,
            degenerate_mean: stopped_by == StopReason::MaxTrials && (mean.abs() < 1e-15 || mean.abs() <= hw),
            failed_trials,
        }
    }
}

/// Consumes `values` until the CI criterion or `max_trials` stops it.
pub fn ci_stopping(values: impl IntoIterator<Item = f64>, opts: &CiOptions) -> Result<TrialStats> {
    let mut s = CiStopper::new(*opts)?;
    for v in values {
        if s.push(v) {
            break;
        }
    }
    Ok(s.finish(Vec::new()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model: Model,
    pub measure: Measure,
    pub ci: CiOptions,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub nl: NlOptions,
    pub pf: PfOptions,
}

/// Runs estimation trials until the CI criterion is met. The power flow and
/// device placement are computed once; trial `t` draws its measurement noise
/// from a seed derived from `(cfg.seed, t)`.
pub fn run_trials(c: &GridCase, spec: &NoiseSpec, cfg: &TrialConfig) -> Result<TrialStats> {
    if cfg.threads == 0 {
        return run_trials_in_pool(c, spec, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_trials_in_pool(c, spec, cfg))
}

fn run_trials_in_pool(c: &GridCase, spec: &NoiseSpec, cfg: &TrialConfig) -> Result<TrialStats> {
    let mut stopper = CiStopper::new(cfg.ci)?;
    let pf = solve_power_flow(c, &cfg.pf)?;
    let kinds = assign_devices(c, spec, cfg.seed)?;
    let trial = |t: u64| -> Result<f64> {
        let se = generate_with_assignment(&pf, c, spec, &kinds, derive_seed(cfg.seed, Domain::TrialSeed, t))?;
        let est = cfg.model.estimate(&se, &cfg.nl)?;
        cfg.measure.eval(&est, &pf.vr, &pf.vi)
    };

    let chunk = (2 * rayon::current_num_threads()).max(1) as u64;
    let mut failed = Vec::new();
    let mut next = 0u64;
    // failed trials do not count towards max_trials but are capped as well
    let limit = 2 * cfg.ci.max_trials as u64;
    'outer: while next < limit {
        let hi = (next + chunk).min(limit);
        let results: Vec<Result<f64>> = (next..hi).into_par_iter().map(trial).collect();
        for (t, r) in (next..hi).zip(results) {
            match r {
                Ok(v) => {
                    if stopper.push(v) {
                        break 'outer;
                    }
                }
                Err(e) if e.is_numerical() => {
                    log::warn!("trial {t} failed: {e}");
                    failed.push(t);
                }
                Err(e) => return Err(e),
            }
        }
        next = hi;
    }
    Ok(stopper.finish(failed))
}
