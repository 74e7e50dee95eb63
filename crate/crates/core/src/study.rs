//! Replicated simulation studies: preliminary versus RB estimates over many histories.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{wald_ci, BootstrapConfig, Estimator, EstimatorResult, Evaluator};
use crate::rb::{diagnose, rb_mcmc, RbResult};
use crate::rng::{derive_seed, purpose, substream};
use crate::samplers::ChainOptions;
use crate::simulate::{draw_nonempty, PopulationConfig};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "RECAP_RB_THREADS";

/// Estimates above this multiple of the true population size (or below zero) are
/// discarded, per estimator.
pub const DEFAULT_DISCARD_FACTOR: f64 = 200.0;

pub const BUNDLED_CONFIGS: [(&str, &str); 5] = [
    ("study1", include_str!("../configs/study1_m0.json")),
    ("study2", include_str!("../configs/study2_mh_strata.json")),
    ("study3", include_str!("../configs/study3_mh_uniform.json")),
    ("study4", include_str!("../configs/study4_mb.json")),
    ("study5", include_str!("../configs/study5_mt.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrConfig {
    pub enabled: bool,
    pub chains: usize,
}

impl Default for GrConfig {
    fn default() -> Self {
        Self { enabled: false, chains: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub name: String,
    pub population: PopulationConfig,
    pub runs: usize,
    pub chain_length: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub chain: ChainOptions,
    #[serde(default)]
    pub gr_diagnostics: GrConfig,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    /// Upper discard threshold; defaults to `200 N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discard_above: Option<f64>,
}

fn default_level() -> f64 {
    0.95
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("study config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED_CONFIGS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| {
                let names: Vec<&str> = BUNDLED_CONFIGS.iter().map(|c| c.0).collect();
                Error::Input(format!("no bundled config `{name}` (have {})", names.join(", ")))
            })?;
        Self::from_json(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        if self.runs == 0 {
            return Err(Error::Input("runs must be at least 1".into()));
        }
        if self.chain_length == 0 {
            return Err(Error::Input("chain_length must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Input("no estimators listed".into()));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::Input(format!("ci_level {} is not in (0, 1)", self.ci_level)));
        }
        if self.gr_diagnostics.enabled && self.gr_diagnostics.chains < 2 {
            return Err(Error::Input("Gelman-Rubin diagnostics need at least two chains".into()));
        }
        Ok(())
    }

    pub fn discard_limit(&self) -> f64 {
        self.discard_above
            .unwrap_or(DEFAULT_DISCARD_FACTOR * self.population.population as f64)
    }
}

/// Everything recorded for one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    /// 0 for the first attempt, 1 after a retry.
    pub attempt: u64,
    pub observed: usize,
    pub empty_redraws: usize,
    pub preliminary: Vec<EstimatorResult>,
    pub rb: Vec<RbResult>,
    pub acceptance_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gelman_rubin: Option<Vec<Option<f64>>>,
}

fn run_once(cfg: &StudyConfig, run: usize, attempt: u64) -> Result<RunRecord> {
    let id = [run as u64, attempt];
    let (h, empty_redraws) =
        draw_nonempty(&cfg.population, &mut substream(cfg.seed, &[purpose::HISTORY, id[0], id[1]]))?;
    let model = cfg.population.model;
    let mut evaluator = Evaluator::new(
        cfg.estimators.clone(),
        cfg.bootstrap,
        derive_seed(cfg.seed, &[purpose::CHAIN_VARIANCE, id[0], id[1]]),
    );
    let preliminary = evaluator.evaluate_all(&h);
    let chain = rb_mcmc(
        &mut evaluator,
        &h,
        model,
        cfg.chain_length,
        cfg.chain,
        &mut substream(cfg.seed, &[purpose::CHAIN, id[0], id[1]]),
    )?;
    let gelman_rubin = if cfg.gr_diagnostics.enabled {
        let mut points = Evaluator::points_only(cfg.estimators.clone());
        let report = diagnose(
            &mut points,
            &h,
            model,
            cfg.gr_diagnostics.chains,
            cfg.chain_length,
            cfg.chain,
            derive_seed(cfg.seed, &[purpose::DIAGNOSTIC_SEEDS, id[0], id[1]]),
        )?;
        Some(report.estimators.iter().map(|e| e.gelman_rubin).collect())
    } else {
        None
    };
    Ok(RunRecord {
        run,
        attempt,
        observed: h.n_units(),
        empty_redraws,
        preliminary,
        rb: chain.results,
        acceptance_rate: chain.acceptance_rate,
        gelman_rubin,
    })
}

fn run_with_retry(cfg: &StudyConfig, run: usize) -> std::result::Result<RunRecord, String> {
    run_once(cfg, run, 0)
        .or_else(|_| run_once(cfg, run, 1))
        .map_err(|e| e.to_string())
}

/// Size of the worker pool: `RECAP_RB_THREADS` if set to a positive integer, else the
/// rayon default.
pub fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| run_with_retry(cfg, run))
            .collect()
    });
    let mut records = Vec::with_capacity(cfg.runs);
    let mut failed = Vec::new();
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => records.push(r),
            Err(msg) => failed.push(FailedRun { run, error: msg }),
        }
    }
    if records.is_empty() {
        return Err(Error::Numerical(format!(
            "all {} runs failed; first error: {}",
            cfg.runs, failed[0].error
        )));
    }
    Ok(StudyReport::aggregate(cfg, records, failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Preliminary,
    Rb,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Preliminary => "preliminary",
            Variant::Rb => "rb",
        }
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: &'static str,
    pub variant: Variant,
    pub mean: f64,
    /// Across-run variance with divisor `R`, so `mse = var + (mean - N)²`.
    pub var: f64,
    pub mse: f64,
    pub coverage: f64,
    pub avg_ci_length: f64,
    /// Share of runs where the RB variance difference was negative (RB rows only).
    pub neg_var_frac: Option<f64>,
    pub runs_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedRun {
    pub run: usize,
    pub error: String,
}

/// Pearson correlations between estimate columns; `NaN` (JSON `null`) where undefined.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }
}

/// Pearson correlation over the entries where both values are finite. `NaN` with fewer
/// than two such entries or when either column is constant on them.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Correlation matrix of named per-run columns.
pub fn correlations(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    if columns.first().is_none_or(|c| c.1.len() < 2) {
        return Err(Error::Input("correlations need at least two runs".into()));
    }
    let values = columns
        .iter()
        .map(|(_, a)| columns.iter().map(|(_, b)| pearson(a, b)).collect())
        .collect();
    Ok(CorrelationMatrix { names: columns.iter().map(|c| c.0.clone()).collect(), values })
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub name: String,
    pub true_population: usize,
    pub runs: usize,
    pub chain_length: usize,
    pub failed_runs: Vec<FailedRun>,
    pub retried_runs: usize,
    pub empty_redraws: usize,
    pub mean_acceptance_rate: f64,
    /// Runs excluded per estimator (invalid or outside `[0, discard_limit]`).
    pub discarded: BTreeMap<String, usize>,
    pub discard_limit: f64,
    pub rows: Vec<MetricRow>,
    pub correlations: CorrelationMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_gelman_rubin: Option<BTreeMap<String, f64>>,
    #[serde(skip)]
    pub records: Vec<RunRecord>,
    #[serde(skip)]
    columns: Vec<(String, Vec<f64>)>,
}

fn keep(pre: &EstimatorResult, rb: &RbResult, limit: f64) -> bool {
    let ok = |x: f64| x.is_finite() && (0.0..=limit).contains(&x);
    pre.is_valid() && rb.is_valid() && ok(pre.point) && ok(rb.point)
}

impl StudyReport {
    fn aggregate(cfg: &StudyConfig, records: Vec<RunRecord>, failed_runs: Vec<FailedRun>) -> Self {
        let truth = cfg.population.population as f64;
        let limit = cfg.discard_limit();
        let mut rows = Vec::new();
        let mut discarded = BTreeMap::new();
        let mut columns = Vec::new();
        for (j, estimator) in cfg.estimators.iter().enumerate() {
            let id = estimator.id();
            let kept: Vec<&RunRecord> = records
                .iter()
                .filter(|r| keep(&r.preliminary[j], &r.rb[j], limit))
                .collect();
            discarded.insert(id.to_string(), records.len() - kept.len());
            let pre: Vec<(EstimatorResult, f64)> = kept
                .iter()
                .map(|r| (r.preliminary[j].clone(), r.observed as f64))
                .collect();
            let rb: Vec<(EstimatorResult, f64)> = kept
                .iter()
                .map(|r| (EstimatorResult::new(id, r.rb[j].point, r.rb[j].var), r.observed as f64))
                .collect();
            let fallback = kept.iter().filter(|r| r.rb[j].fallback_used).count();
            rows.push(metric_row(id, Variant::Preliminary, &pre, truth, cfg.ci_level, None));
            let frac = (!kept.is_empty()).then(|| fallback as f64 / kept.len() as f64);
            rows.push(metric_row(id, Variant::Rb, &rb, truth, cfg.ci_level, frac));

            let column = |f: &dyn Fn(&RunRecord) -> f64| -> Vec<f64> {
                records
                    .iter()
                    .map(|r| if keep(&r.preliminary[j], &r.rb[j], limit) { f(r) } else { f64::NAN })
                    .collect()
            };
            columns.push((id.to_string(), column(&|r| r.preliminary[j].point)));
            columns.push((format!("{id}_rb"), column(&|r| r.rb[j].point)));
        }
        let correlations = correlations(&columns).unwrap_or_else(|_| CorrelationMatrix {
            names: columns.iter().map(|c| c.0.clone()).collect(),
            values: vec![vec![f64::NAN; columns.len()]; columns.len()],
        });
        let mean_gelman_rubin = cfg.gr_diagnostics.enabled.then(|| {
            cfg.estimators
                .iter()
                .enumerate()
                .map(|(j, e)| {
                    let values: Vec<f64> = records
                        .iter()
                        .filter_map(|r| r.gelman_rubin.as_ref().and_then(|g| g[j]))
                        .filter(|x| x.is_finite())
                        .collect();
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    (e.id().to_string(), mean)
                })
                .collect()
        });
        Self {
            name: cfg.name.clone(),
            true_population: cfg.population.population,
            runs: cfg.runs,
            chain_length: cfg.chain_length,
            failed_runs,
            retried_runs: records.iter().filter(|r| r.attempt > 0).count(),
            empty_redraws: records.iter().map(|r| r.empty_redraws).sum(),
            mean_acceptance_rate: records.iter().map(|r| r.acceptance_rate).sum::<f64>()
                / records.len() as f64,
            discarded,
            discard_limit: limit,
            rows,
            correlations,
            mean_gelman_rubin,
            records,
            columns,
        }
    }

    pub fn row(&self, estimator: &str, variant: Variant) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.variant == variant)
    }

    /// Per-run estimate column (`id` or `id_rb`), `NaN` for discarded runs.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    /// Summary table: `estimator,variant,mean,var,mse,coverage,avg_ci_length,neg_var_frac`.
    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["estimator", "variant", "mean", "var", "mse", "coverage", "avg_ci_length", "neg_var_frac"])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.to_string(),
                r.variant.as_str().to_string(),
                r.mean.to_string(),
                r.var.to_string(),
                r.mse.to_string(),
                r.coverage.to_string(),
                r.avg_ci_length.to_string(),
                r.neg_var_frac.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-run estimates: `run,observed,<id>,<id>_rb,...`; discarded entries are empty.
    pub fn write_raw_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["run".to_string(), "observed".to_string()];
        header.extend(self.columns.iter().map(|c| c.0.clone()));
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![r.run.to_string(), r.observed.to_string()];
            row.extend(self.columns.iter().map(|c| fmt_value(c.1[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pairwise scatter data: `run,estimator_a,estimator_b,value_a,value_b` for every
    /// pair of columns and every run where both are kept.
    pub fn write_scatter_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run", "estimator_a", "estimator_b", "value_a", "value_b"])?;
        for (a, (name_a, col_a)) in self.columns.iter().enumerate() {
            for (name_b, col_b) in &self.columns[a + 1..] {
                for (i, r) in self.records.iter().enumerate() {
                    if col_a[i].is_finite() && col_b[i].is_finite() {
                        w.write_record([
                            r.run.to_string(),
                            name_a.clone(),
                            name_b.clone(),
                            col_a[i].to_string(),
                            col_b[i].to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Correlation matrix with a leading name column; undefined entries are `NaN`.
    pub fn write_correlation_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.correlations.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.correlations.names.iter().zip(&self.correlations.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn metric_row(
    estimator: &'static str,
    variant: Variant,
    results: &[(EstimatorResult, f64)],
    truth: f64,
    level: f64,
    neg_var_frac: Option<f64>,
) -> MetricRow {
    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.0.point).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.0.point - mean).powi(2)).sum::<f64>() / n;
    let mse = results.iter().map(|r| (r.0.point - truth).powi(2)).sum::<f64>() / n;
    let intervals: Vec<_> = results
        .iter()
        .filter_map(|(r, observed)| wald_ci(r, level, *observed))
        .collect();
    let m = intervals.len() as f64;
    let coverage = intervals.iter().filter(|ci| ci.contains(truth)).count() as f64 / m;
    let avg_ci_length = intervals.iter().map(|ci| ci.length()).sum::<f64>() / m;
    MetricRow {
        estimator,
        variant,
        mean,
        var,
        mse,
        coverage,
        avg_ci_length,
        neg_var_frac,
        runs_used: results.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse() {
        for (name, _) in BUNDLED_CONFIGS {
            let cfg = StudyConfig::bundled(name).unwrap();
            assert_eq!(cfg.population.population, 500);
            assert_eq!(cfg.runs, 300);
            assert_eq!(cfg.chain_length, 500);
        }
        assert!(StudyConfig::bundled("study9").is_err());
    }

    #[test]
    fn unknown_estimator_is_rejected() {
        let text = BUNDLED_CONFIGS[0].1.replace("\"sc\"", "\"poisson\"");
        assert!(StudyConfig::from_json(&text).is_err());
    }

    #[test]
    fn pearson_edge_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x + 1.0).collect();
        assert!((pearson(&a, &b) + 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[5.0; 4]).is_nan());
        assert!(pearson(&[1.0, f64::NAN, 3.0], &[2.0, 7.0, 6.0]) > 0.99);
    }

    #[test]
    fn correlations_need_two_runs() {
        assert!(correlations(&[("a".into(), vec![1.0])]).is_err());
    }

    #[test]
    fn metric_identity_and_constant_estimator() {
        let results = vec![(EstimatorResult::new("x", 510.0, Some(100.0)), 200.0)];
        let row = metric_row("x", Variant::Preliminary, &results, 500.0, 0.95, None);
        assert_eq!(row.var, 0.0);
        assert_eq!(row.mse, 100.0);
        assert_eq!(row.coverage, 1.0);
        let results = vec![
            (EstimatorResult::new("x", 480.0, Some(4.0)), 200.0),
            (EstimatorResult::new("x", 530.0, Some(4.0)), 200.0),
        ];
        let row = metric_row("x", Variant::Rb, &results, 500.0, 0.95, Some(0.0));
        assert!((row.mse - (row.var + (row.mean - 500.0).powi(2))).abs() < 1e-9);
        assert_eq!(row.coverage, 0.0);
    }
}
