//! Rao-Blackwell averaging over consistent reorderings, its variance estimate, and
//! Gelman-Rubin convergence diagnostics.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorResult, Evaluator};
use crate::history::CaptureHistory;
use crate::rng::{purpose, substream};
use crate::samplers::{enumerate, Chain, ChainOptions};
use crate::suffstat::{Model, SufficientStatistic};

/// Below this fraction of valid per-state estimates the RB result is reported invalid.
pub const MIN_VALID_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RbResult {
    pub estimator: &'static str,
    pub point: f64,
    /// `None` when no state carried a variance estimate.
    pub var: Option<f64>,
    pub fallback_used: bool,
    /// Number of chain steps `M` (states averaged: `M + 1`); for exact enumeration, the
    /// number of reorderings.
    pub chain_length: usize,
    pub valid_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RbResult {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none() && self.point.is_finite()
    }
}

/// Per-state estimates and variance estimates of one estimator.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceEntry {
    pub estimator: &'static str,
    /// `NaN` where the estimator was invalid on that state.
    pub estimates: Vec<f64>,
    pub vars: Vec<Option<f64>>,
}

impl TraceEntry {
    fn push(&mut self, r: &EstimatorResult) {
        if r.is_valid() {
            self.estimates.push(r.point);
            self.vars.push(r.var);
        } else {
            self.estimates.push(f64::NAN);
            self.vars.push(None);
        }
    }
}

/// Estimates along a chain, states `m = 0..M`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChainTrace {
    /// Whether the move into state `m` was accepted (`false` for the seed state).
    pub accepted: Vec<bool>,
    pub entries: Vec<TraceEntry>,
}

impl ChainTrace {
    fn new(evaluator: &Evaluator) -> Self {
        Self {
            accepted: Vec::new(),
            entries: evaluator
                .estimators()
                .iter()
                .map(|e| TraceEntry { estimator: e.id(), ..Default::default() })
                .collect(),
        }
    }

    fn record(&mut self, accepted: bool, results: &[EstimatorResult]) {
        self.accepted.push(accepted);
        for (entry, r) in self.entries.iter_mut().zip(results) {
            entry.push(r);
        }
    }

    pub fn entry(&self, estimator: &str) -> Option<&TraceEntry> {
        self.entries.iter().find(|e| e.estimator == estimator)
    }

    /// CSV with columns `iteration,accepted,estimator_id,estimate,var_estimate`; invalid
    /// or missing values are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "accepted", "estimator_id", "estimate", "var_estimate"])?;
        for (m, accepted) in self.accepted.iter().enumerate() {
            for entry in &self.entries {
                let est = entry.estimates[m];
                w.write_record([
                    m.to_string(),
                    u8::from(*accepted).to_string(),
                    entry.estimator.to_string(),
                    if est.is_finite() { est.to_string() } else { String::new() },
                    entry.vars[m].map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `mean(var̂) - mean((γ̂ - γ̃)²)` over states with both values, or `mean(var̂)` with the
/// fallback flag when that difference is negative. `None` without any variance.
pub fn rb_var_mcmc(estimates: &[f64], vars: &[Option<f64>], gamma_tilde: f64) -> Option<(f64, bool)> {
    let (mut count, mut var_sum, mut dev_sum) = (0usize, 0.0, 0.0);
    for (&e, v) in estimates.iter().zip(vars) {
        if let (true, Some(v)) = (e.is_finite(), v) {
            count += 1;
            var_sum += v;
            dev_sum += (e - gamma_tilde).powi(2);
        }
    }
    if count == 0 {
        return None;
    }
    let mean_var = var_sum / count as f64;
    let v = mean_var - dev_sum / count as f64;
    if v < 0.0 {
        Some((mean_var, true))
    } else {
        Some((v, false))
    }
}

fn summarize(entry: &TraceEntry, chain_length: usize) -> RbResult {
    let valid: Vec<f64> = entry.estimates.iter().copied().filter(|e| e.is_finite()).collect();
    let valid_fraction = valid.len() as f64 / entry.estimates.len().max(1) as f64;
    let mut result = RbResult {
        estimator: entry.estimator,
        point: f64::NAN,
        var: None,
        fallback_used: false,
        chain_length,
        valid_fraction,
        failure: None,
    };
    if valid_fraction < MIN_VALID_FRACTION {
        result.failure = Some(format!(
            "estimator valid on {:.1}% of states (needs {:.0}%)",
            100.0 * valid_fraction,
            100.0 * MIN_VALID_FRACTION
        ));
        return result;
    }
    result.point = valid.iter().sum::<f64>() / valid.len() as f64;
    if let Some((var, fallback)) = rb_var_mcmc(&entry.estimates, &entry.vars, result.point) {
        result.var = Some(var);
        result.fallback_used = fallback;
    }
    result
}

/// RB estimates by averaging over every consistent reordering.
pub fn rb_exact(evaluator: &mut Evaluator, original: &CaptureHistory, model: Model) -> Result<Vec<RbResult>> {
    let stat = SufficientStatistic::reduce(model, original)?;
    let mut trace = ChainTrace::new(evaluator);
    enumerate::for_each_reordering(&stat, |rows| {
        let r = original.with_rows(rows.to_vec());
        trace.record(true, &evaluator.evaluate_all(&r));
    })
    .map_err(|e| match e {
        Error::EnumerationTooLarge(msg) => {
            Error::EnumerationTooLarge(format!("{msg}; use the MCMC estimate instead"))
        }
        other => other,
    })?;
    let count = trace.accepted.len();
    Ok(trace.entries.iter().map(|e| summarize(e, count)).collect())
}

/// Output of one RB chain.
#[derive(Debug, Clone, Serialize)]
pub struct RbRun {
    pub results: Vec<RbResult>,
    pub acceptance_rate: f64,
    #[serde(skip)]
    pub trace: ChainTrace,
}

/// Runs `chain_length` steps of the model's sampler from its seeding rule and averages
/// every registered estimator over states `0..=chain_length`.
pub fn rb_mcmc<R: Rng + ?Sized>(
    evaluator: &mut Evaluator,
    original: &CaptureHistory,
    model: Model,
    chain_length: usize,
    options: ChainOptions,
    rng: &mut R,
) -> Result<RbRun> {
    if chain_length == 0 {
        return Err(Error::Input("chain length must be at least 1".into()));
    }
    let chain = Chain::new(model, original, options, rng)?;
    run_chain(evaluator, chain, chain_length, rng)
}

fn run_chain<R: Rng + ?Sized>(
    evaluator: &mut Evaluator,
    mut chain: Chain,
    chain_length: usize,
    rng: &mut R,
) -> Result<RbRun> {
    let mut trace = ChainTrace::new(evaluator);
    let mut last = evaluator.evaluate_all(chain.current());
    trace.record(false, &last);
    for _ in 0..chain_length {
        let accepted = chain.step(rng);
        if accepted {
            last = evaluator.evaluate_all(chain.current());
        }
        trace.record(accepted, &last);
    }
    Ok(RbRun {
        results: trace.entries.iter().map(|e| summarize(e, chain_length)).collect(),
        acceptance_rate: chain.state().acceptance_rate(),
        trace,
    })
}

/// Number of leading states discarded as burn-in: 10% of the chain, rounded down.
pub fn burn_in(len: usize) -> usize {
    len / 10
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Potential scale reduction `R̂ = sqrt(V̂/W)` with `V̂ = (L-1)/L W + B/L`.
///
/// Chains are used as given (discard burn-in first). Returns 1 when `W = B = 0` and
/// `+inf` when only `W = 0`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Input("Gelman-Rubin needs at least two chains".into()));
    }
    let len = chains[0].len();
    if len < 2 || chains.iter().any(|c| c.len() != len) {
        return Err(Error::Input("Gelman-Rubin needs chains of equal length, at least 2".into()));
    }
    let l = len as f64;
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_and_var(c)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let b = l * mean_and_var(&means).1;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v_hat = (l - 1.0) / l * w + b / l;
    Ok((v_hat / w).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticEntry {
    pub estimator: &'static str,
    pub gamma_tilde: f64,
    pub var: Option<f64>,
    pub fallback_used: bool,
    pub valid_fraction: f64,
    /// `None` when the estimator is invalid on too many states to compare chains.
    pub gelman_rubin: Option<f64>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub model: Model,
    pub chains: usize,
    pub chain_length: usize,
    pub burn_in: usize,
    pub estimators: Vec<DiagnosticEntry>,
}

/// Runs `n_chains` chains from [`crate::samplers::seed_reorderings`] and reports, per
/// estimator, the RB summary of the pooled post-burn-in states and `R̂` across chains.
pub fn diagnose(
    evaluator: &mut Evaluator,
    original: &CaptureHistory,
    model: Model,
    n_chains: usize,
    chain_length: usize,
    options: ChainOptions,
    seed: u64,
) -> Result<DiagnosticReport> {
    if n_chains < 2 {
        return Err(Error::Input("diagnostics need at least two chains".into()));
    }
    let seeds = crate::samplers::seed_reorderings(
        model,
        original,
        n_chains,
        options,
        &mut substream(seed, &[purpose::DIAGNOSTIC_SEEDS]),
    )?;
    let mut runs = Vec::with_capacity(n_chains);
    for (c, start) in seeds.into_iter().enumerate() {
        let chain = Chain::starting_at(model, original, start, options)?;
        let mut rng = substream(seed, &[purpose::DIAGNOSTIC_CHAIN, c as u64]);
        runs.push(run_chain(evaluator, chain, chain_length, &mut rng)?);
    }
    let skip = burn_in(chain_length + 1);
    let acceptance_rate = runs.iter().map(|r| r.acceptance_rate).sum::<f64>() / n_chains as f64;
    let estimators = (0..evaluator.estimators().len())
        .map(|j| {
            let kept: Vec<&TraceEntry> = runs.iter().map(|r| &r.trace.entries[j]).collect();
            let pooled = TraceEntry {
                estimator: kept[0].estimator,
                estimates: kept.iter().flat_map(|e| e.estimates[skip..].iter().copied()).collect(),
                vars: kept.iter().flat_map(|e| e.vars[skip..].iter().copied()).collect(),
            };
            let summary = summarize(&pooled, chain_length);
            let chains: Vec<Vec<f64>> = kept
                .iter()
                .map(|e| e.estimates[skip..].iter().copied().filter(|x| x.is_finite()).collect())
                .collect();
            let common = chains.iter().map(Vec::len).min().unwrap_or(0);
            let trimmed: Vec<Vec<f64>> = chains.into_iter().map(|mut c| {
                c.truncate(common);
                c
            }).collect();
            DiagnosticEntry {
                estimator: summary.estimator,
                gamma_tilde: summary.point,
                var: summary.var,
                fallback_used: summary.fallback_used,
                valid_fraction: summary.valid_fraction,
                gelman_rubin: gelman_rubin(&trimmed).ok(),
                acceptance_rate,
            }
        })
        .collect();
    Ok(DiagnosticReport {
        model,
        chains: n_chains,
        chain_length,
        burn_in: skip,
        estimators,
    })
}
