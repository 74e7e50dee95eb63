//! Resampling standard errors: nonparametric bootstrap over capture-history rows with a
//! data-driven number of resamples, and a delete-one jackknife fallback.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::EstimatorResult;
use crate::error::{Error, Result};
use crate::history::CaptureHistory;
use crate::suffstat::PatternCounts;

/// Resample-count rule: standard errors are tracked at multiples of `step` resamples and
/// the first multiple whose SE moved by less than `threshold` from the previous one is
/// used, up to `b_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub b_max: usize,
    pub step: usize,
    pub threshold: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b_max: 1000, step: 100, threshold: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Bootstrap,
    Jackknife,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub var: f64,
    pub method: VarianceMethod,
    /// Resamples behind the chosen SE (0 for the jackknife).
    pub resamples: usize,
    /// False when no multiple of `step` met the threshold and `b_max` was used.
    pub converged: bool,
}

#[derive(Default)]
struct Running {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn sd(&self) -> Option<f64> {
        (self.count >= 2).then(|| (self.m2 / (self.count - 1) as f64).sqrt())
    }
}

enum BootstrapOutcome {
    Done(VarianceEstimate),
    TooManyInvalid,
}

fn bootstrap_driver<R, D>(cfg: &BootstrapConfig, rng: &mut R, mut draw: D) -> Result<BootstrapOutcome>
where
    R: Rng + ?Sized,
    D: FnMut(&mut R) -> Option<f64>,
{
    if cfg.step == 0 || cfg.b_max < cfg.step {
        return Err(Error::Input(format!(
            "bootstrap needs 0 < step <= b_max (step {}, b_max {})",
            cfg.step, cfg.b_max
        )));
    }
    let mut stats = Running::default();
    let mut invalid = 0usize;
    let mut previous: Option<f64> = None;
    let mut last = None;
    let checkpoints = cfg.b_max / cfg.step;
    for checkpoint in 1..=checkpoints {
        for _ in 0..cfg.step {
            match draw(rng) {
                Some(x) => stats.push(x),
                None => invalid += 1,
            }
        }
        let b = checkpoint * cfg.step;
        if 2 * invalid > b {
            return Ok(BootstrapOutcome::TooManyInvalid);
        }
        let se = stats.sd();
        if let (Some(prev), Some(se)) = (previous, se) {
            if (se - prev).abs() < cfg.threshold {
                return Ok(BootstrapOutcome::Done(VarianceEstimate {
                    var: se * se,
                    method: VarianceMethod::Bootstrap,
                    resamples: b,
                    converged: true,
                }));
            }
        }
        previous = se;
        last = se.map(|se| (se, b));
    }
    match last {
        Some((se, b)) => Ok(BootstrapOutcome::Done(VarianceEstimate {
            var: se * se,
            method: VarianceMethod::Bootstrap,
            resamples: b,
            converged: false,
        })),
        None => Ok(BootstrapOutcome::TooManyInvalid),
    }
}

/// Bootstrap variance of `estimator` on `h`, resampling unit rows with replacement.
///
/// Falls back to [`jackknife_se`] when the estimator is invalid on more than half the
/// resamples.
pub fn bootstrap_se<F, R>(
    h: &CaptureHistory,
    estimator: F,
    cfg: &BootstrapConfig,
    rng: &mut R,
) -> Result<VarianceEstimate>
where
    F: Fn(&CaptureHistory) -> EstimatorResult,
    R: Rng + ?Sized,
{
    let n = h.n_units();
    let labels: Arc<[String]> = (0..n).map(|i| format!("r{i}")).collect::<Vec<_>>().into();
    let mut picks = vec![0usize; n];
    let outcome = bootstrap_driver(cfg, rng, |rng| {
        for p in picks.iter_mut() {
            *p = rng.random_range(0..n);
        }
        let r = estimator(&h.resampled(&picks, &labels));
        r.is_valid().then_some(r.point)
    })?;
    match outcome {
        BootstrapOutcome::Done(v) => Ok(v),
        BootstrapOutcome::TooManyInvalid => jackknife_se(h, estimator),
    }
}

/// Bootstrap for estimators that depend on the data only through capture-pattern counts.
///
/// Drawing `n` rows with replacement and tallying their patterns is a multinomial draw
/// over the distinct patterns, so this samples that multinomial directly; the resampling
/// distribution is the same as [`bootstrap_se`]'s.
pub fn bootstrap_se_patterns<F, R>(
    p: &PatternCounts,
    estimator: F,
    cfg: &BootstrapConfig,
    rng: &mut R,
) -> Result<VarianceEstimate>
where
    F: Fn(&PatternCounts) -> EstimatorResult,
    R: Rng + ?Sized,
{
    let n = p.observed();
    let mut resample = p.clone();
    let outcome = bootstrap_driver(cfg, rng, |rng| {
        let mut remaining = n;
        let mut mass = n;
        for (slot, &(_, count)) in resample.counts.iter_mut().zip(&p.counts) {
            if remaining == 0 {
                slot.1 = 0;
            } else if count == mass {
                slot.1 = remaining;
                remaining = 0;
            } else {
                let prob = count as f64 / mass as f64;
                let k = Binomial::new(remaining, prob).expect("probability in [0, 1]").sample(rng);
                slot.1 = k;
                remaining -= k;
            }
            mass -= count;
        }
        let r = estimator(&resample);
        r.is_valid().then_some(r.point)
    })?;
    match outcome {
        BootstrapOutcome::Done(v) => Ok(v),
        BootstrapOutcome::TooManyInvalid => jackknife_se_patterns(p, estimator),
    }
}

fn jackknife_variance(values: &[(f64, u64)]) -> f64 {
    let n: u64 = values.iter().map(|&(_, w)| w).sum();
    let mean = values.iter().map(|&(x, w)| x * w as f64).sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|&(x, w)| w as f64 * (x - mean).powi(2)).sum();
    (n as f64 - 1.0) / n as f64 * ss
}

/// Delete-one-unit jackknife variance `((n-1)/n) Σ (θ̂_(i) - θ̄)²`.
pub fn jackknife_se<F>(h: &CaptureHistory, estimator: F) -> Result<VarianceEstimate>
where
    F: Fn(&CaptureHistory) -> EstimatorResult,
{
    let n = h.n_units();
    if n < 2 {
        return Err(Error::Input("jackknife needs at least two units".into()));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let r = estimator(&h.without_unit(i)?);
        if !r.is_valid() {
            return Err(Error::Numerical(format!(
                "estimator `{}` invalid without unit `{}`",
                r.estimator,
                h.units()[i]
            )));
        }
        values.push((r.point, 1));
    }
    Ok(VarianceEstimate {
        var: jackknife_variance(&values),
        method: VarianceMethod::Jackknife,
        resamples: 0,
        converged: true,
    })
}

/// [`jackknife_se`] for pattern-determined estimators: removing a unit with pattern `x`
/// decrements one count, so only one evaluation per distinct pattern is needed.
pub fn jackknife_se_patterns<F>(p: &PatternCounts, estimator: F) -> Result<VarianceEstimate>
where
    F: Fn(&PatternCounts) -> EstimatorResult,
{
    if p.observed() < 2 {
        return Err(Error::Input("jackknife needs at least two units".into()));
    }
    let mut values = Vec::new();
    for (i, &(pattern, count)) in p.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let mut reduced = p.clone();
        reduced.counts[i].1 -= 1;
        let r = estimator(&reduced);
        if !r.is_valid() {
            return Err(Error::Numerical(format!(
                "estimator `{}` invalid without a unit with pattern {pattern:b}",
                r.estimator
            )));
        }
        values.push((r.point, count));
    }
    Ok(VarianceEstimate {
        var: jackknife_variance(&values),
        method: VarianceMethod::Jackknife,
        resamples: 0,
        converged: true,
    })
}
