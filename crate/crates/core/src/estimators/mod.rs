//! Preliminary population-size estimators and their variance estimates.
//!
//! Estimators are addressed by string identifiers through [`Estimator`]:
//!
//! | id     | estimator                                   | depends on          |
//! |--------|---------------------------------------------|---------------------|
//! | `lp`   | Chapman / Lincoln-Petersen on two occasions | unit labels         |
//! | `m0`   | M0 maximum likelihood                       | `{s, C}`            |
//! | `chao` | Chao's lower bound                          | frequencies         |
//! | `mb`   | Mb maximum likelihood                       | `{s, C_k, R}`       |
//! | `mt`   | Mt maximum likelihood (Darroch)             | `{s, n_k}`          |
//! | `sc`   | sample coverage, bootstrap variance         | frequencies, `n_k`  |

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::history::CaptureHistory;
use crate::rng::substream;
use crate::suffstat::{frequencies, patterns, reduce_m0, reduce_mb, reduce_mt, PatternCounts};

pub mod frequency;
pub mod interval;
pub mod likelihood;
pub mod lincoln_petersen;
mod optimize;
pub mod resampling;

pub use frequency::{chao_lb, sample_coverage};
pub use interval::{wald_ci, z_value, Interval};
pub use likelihood::{m0_mle, mb_mle, mt_mle};
pub use lincoln_petersen::chapman_lp;
pub use resampling::{
    bootstrap_se, bootstrap_se_patterns, jackknife_se, jackknife_se_patterns,
    BootstrapConfig, VarianceEstimate, VarianceMethod,
};

/// Fitted model parameters reported alongside a likelihood-based estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    pub population: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Per-occasion capture probabilities `q_k = p·e_k` (Mt only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<f64>,
}

impl ModelParams {
    pub(crate) fn constant(population: f64, p: f64) -> Self {
        Self { population, p: Some(p), phi: None, q: Vec::new() }
    }
}

/// A point estimate with an optional variance estimate, or a failure reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimator: &'static str,
    pub point: f64,
    pub var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
}

impl EstimatorResult {
    pub fn new(estimator: &'static str, point: f64, var: Option<f64>) -> Self {
        debug_assert!(var.is_none_or(|v| v >= 0.0), "{estimator}: negative variance {var:?}");
        Self { estimator, point, var, failure: None, params: None }
    }

    pub fn invalid(estimator: &'static str, reason: impl Into<String>) -> Self {
        Self {
            estimator,
            point: f64::NAN,
            var: None,
            failure: Some(reason.into()),
            params: None,
        }
    }

    pub fn with_params(mut self, params: ModelParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn is_valid(&self) -> bool {
        self.failure.is_none() && self.point.is_finite()
    }
}

/// A registered estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Chapman's estimator on a pair of zero-based occasions.
    LincolnPetersen { first: usize, second: usize },
    M0,
    Chao,
    Mb,
    Mt,
    SampleCoverage,
}

impl Estimator {
    pub const IDS: [&'static str; 6] = ["lp", "m0", "chao", "mb", "mt", "sc"];

    pub fn id(&self) -> &'static str {
        match self {
            Estimator::LincolnPetersen { .. } => "lp",
            Estimator::M0 => "m0",
            Estimator::Chao => "chao",
            Estimator::Mb => "mb",
            Estimator::Mt => "mt",
            Estimator::SampleCoverage => "sc",
        }
    }

    /// Parses a comma-separated list of identifiers.
    pub fn parse_list(list: &str) -> Result<Vec<Estimator>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }

    /// Point estimate (and analytic variance where one exists) on `h`.
    pub fn point(&self, h: &CaptureHistory) -> EstimatorResult {
        match *self {
            Estimator::LincolnPetersen { first, second } => chapman_lp(h, first, second),
            Estimator::M0 => m0_mle(&reduce_m0(h)),
            Estimator::Chao => chao_lb(&frequencies(h), h.occasions()),
            Estimator::Mb => mb_mle(&reduce_mb(h)),
            Estimator::Mt => mt_mle(&reduce_mt(h)),
            Estimator::SampleCoverage => sample_coverage(&patterns(h)),
        }
    }

    /// Whether the estimate is a function of the frequency counts alone.
    pub fn frequency_determined(&self) -> bool {
        matches!(self, Estimator::Chao)
    }

    fn needs_resampled_variance(&self) -> bool {
        matches!(self, Estimator::SampleCoverage)
    }
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::LincolnPetersen { first: 0, second: 1 }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Estimator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let id = String::deserialize(d)?;
        id.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(Estimator::default()),
            "m0" => Ok(Estimator::M0),
            "chao" => Ok(Estimator::Chao),
            "mb" => Ok(Estimator::Mb),
            "mt" => Ok(Estimator::Mt),
            "sc" => Ok(Estimator::SampleCoverage),
            other => Err(Error::Input(format!(
                "unknown estimator `{other}` (expected one of {})",
                Estimator::IDS.join(", ")
            ))),
        }
    }
}

/// Evaluates a set of estimators with variance estimates, resampling where needed.
///
/// Resampled variances are cached by capture-pattern counts; their random stream is
/// derived from `(seed, index, counts)`, so the value attached to given counts does not
/// depend on evaluation order.
#[derive(Debug, Clone)]
pub struct Evaluator {
    estimators: Vec<Estimator>,
    bootstrap: BootstrapConfig,
    seed: u64,
    resample: bool,
    cache: HashMap<PatternCounts, Option<f64>>,
}

impl Evaluator {
    pub fn new(estimators: Vec<Estimator>, bootstrap: BootstrapConfig, seed: u64) -> Self {
        Self { estimators, bootstrap, seed, resample: true, cache: HashMap::new() }
    }

    /// An evaluator that skips resampled variances (points and analytic variances only).
    pub fn points_only(estimators: Vec<Estimator>) -> Self {
        Self { resample: false, ..Self::new(estimators, BootstrapConfig::default(), 0) }
    }

    pub fn estimators(&self) -> &[Estimator] {
        &self.estimators
    }

    pub fn evaluate(&mut self, index: usize, h: &CaptureHistory) -> EstimatorResult {
        let estimator = self.estimators[index];
        let mut result = estimator.point(h);
        if self.resample && result.is_valid() && estimator.needs_resampled_variance() {
            let p = patterns(h);
            let var = match self.cache.get(&p) {
                Some(&v) => v,
                None => {
                    let mut path = vec![index as u64];
                    path.extend(p.counts.iter().flat_map(|&(x, c)| [x, c]));
                    let mut rng = substream(self.seed, &path);
                    let v = bootstrap_se_patterns(&p, sample_coverage, &self.bootstrap, &mut rng)
                        .ok()
                        .map(|v| v.var);
                    self.cache.insert(p, v);
                    v
                }
            };
            result.var = var;
        }
        result
    }

    pub fn evaluate_all(&mut self, h: &CaptureHistory) -> Vec<EstimatorResult> {
        (0..self.estimators.len()).map(|i| self.evaluate(i, h)).collect()
    }
}
