//! Synthetic closed populations and their capture histories.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{CaptureHistory, MAX_OCCASIONS};
use crate::suffstat::Model;

/// Redraws allowed when a draw captures nobody.
pub const EMPTY_SAMPLE_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratum {
    pub size: usize,
    pub p: f64,
}

/// Capture-probability heterogeneity for Mh populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Heterogeneity {
    /// Strata of fixed size and capture probability, in unit order.
    Strata(Vec<Stratum>),
    /// Every unit is its own stratum with `p ~ Uniform(lo, hi)` drawn per history.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// True population size `N`.
    pub population: usize,
    pub model: Model,
    pub occasions: usize,
    /// Base capture probability (M0, Mb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<Heterogeneity>,
    /// Recapture multiplier (Mb): recapture probability is `phi * p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Per-occasion capture probabilities `q_k = p e_k` (Mt).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

fn probability(name: &str, p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::Input(format!("{name} = {p} is not a probability")))
    }
}

fn required<T: Clone>(field: &Option<T>, name: &str, model: Model) -> Result<T> {
    field
        .clone()
        .ok_or_else(|| Error::Input(format!("model {model} needs `{name}`")))
}

/// Capture probabilities resolved from a validated config.
enum Rule {
    Constant(f64),
    Strata(Vec<Stratum>),
    Uniform(f64, f64),
    Behavioural { p: f64, recapture: f64 },
    Time(Vec<f64>),
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.rule().map(|_| ())
    }

    fn rule(&self) -> Result<Rule> {
        if self.population == 0 {
            return Err(Error::Input("population must be positive".into()));
        }
        if self.occasions == 0 || self.occasions > MAX_OCCASIONS {
            return Err(Error::Input(format!(
                "occasions must be between 1 and {MAX_OCCASIONS}, got {}",
                self.occasions
            )));
        }
        match self.model {
            Model::M0 => Ok(Rule::Constant(probability("p", required(&self.p, "p", self.model)?)?)),
            Model::Mh => match required(&self.heterogeneity, "heterogeneity", self.model)? {
                Heterogeneity::Strata(strata) => {
                    let total: usize = strata.iter().map(|s| s.size).sum();
                    if total != self.population {
                        return Err(Error::Input(format!(
                            "stratum sizes sum to {total}, population is {}",
                            self.population
                        )));
                    }
                    for s in &strata {
                        probability("stratum p", s.p)?;
                    }
                    Ok(Rule::Strata(strata))
                }
                Heterogeneity::Uniform { lo, hi } => {
                    probability("lo", lo)?;
                    probability("hi", hi)?;
                    if lo > hi {
                        return Err(Error::Input(format!("uniform range [{lo}, {hi}] is empty")));
                    }
                    Ok(Rule::Uniform(lo, hi))
                }
            },
            Model::Mb => {
                let p = probability("p", required(&self.p, "p", self.model)?)?;
                let phi = required(&self.phi, "phi", self.model)?;
                if phi < 0.0 {
                    return Err(Error::Input(format!("phi = {phi} is negative")));
                }
                let recapture = probability("phi * p", phi * p)?;
                Ok(Rule::Behavioural { p, recapture })
            }
            Model::Mt => {
                let q = required(&self.q, "q", self.model)?;
                if q.len() != self.occasions {
                    return Err(Error::Input(format!(
                        "q has {} entries for {} occasions",
                        q.len(),
                        self.occasions
                    )));
                }
                for &qk in &q {
                    probability("q_k", qk)?;
                }
                Ok(Rule::Time(q))
            }
        }
    }
}

/// One history drawn from the population; errors with [`Error::EmptySample`] when nobody
/// is captured.
///
/// Units are visited in population order and occasions in time order within a unit, so
/// an Mh population with one stratum consumes the stream exactly as the matching M0
/// population does.
pub fn draw_history<R: Rng + ?Sized>(cfg: &PopulationConfig, rng: &mut R) -> Result<CaptureHistory> {
    let rule = cfg.rule()?;
    let big_n = cfg.population;
    let k = cfg.occasions;
    let mut unit_p: Vec<f64> = Vec::new();
    let mut unit_stratum: Vec<u32> = Vec::new();
    match &rule {
        Rule::Strata(strata) => {
            for (g, s) in strata.iter().enumerate() {
                unit_p.extend(std::iter::repeat_n(s.p, s.size));
                unit_stratum.extend(std::iter::repeat_n(g as u32 + 1, s.size));
            }
        }
        Rule::Uniform(lo, hi) => {
            unit_p = (0..big_n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
            unit_stratum = (1..=big_n as u32).collect();
        }
        _ => {}
    }

    let mut units = Vec::new();
    let mut rows = Vec::new();
    let mut strata = Vec::new();
    for i in 0..big_n {
        let mut row = 0u64;
        for occ in 0..k {
            let p = match &rule {
                Rule::Constant(p) => *p,
                Rule::Strata(_) | Rule::Uniform(..) => unit_p[i],
                Rule::Behavioural { p, recapture } => {
                    if row == 0 {
                        *p
                    } else {
                        *recapture
                    }
                }
                Rule::Time(q) => q[occ],
            };
            if rng.random::<f64>() < p {
                row |= 1 << occ;
            }
        }
        if row != 0 {
            units.push(format!("u{}", i + 1));
            rows.push(row);
            if !unit_stratum.is_empty() {
                strata.push(unit_stratum[i]);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    CaptureHistory::new(units, rows, k, (!strata.is_empty()).then_some(strata))
}

/// [`draw_history`] with up to [`EMPTY_SAMPLE_RETRIES`] redraws after an empty sample.
/// Returns the history and the number of redraws.
pub fn draw_nonempty<R: Rng + ?Sized>(cfg: &PopulationConfig, rng: &mut R) -> Result<(CaptureHistory, usize)> {
    for attempt in 0..=EMPTY_SAMPLE_RETRIES {
        match draw_history(cfg, rng) {
            Ok(h) => return Ok((h, attempt)),
            Err(Error::EmptySample) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::EmptySample)
}

/// Expected observed units, total captures and recaptures of a draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedCounts {
    pub observed: f64,
    pub captures: f64,
    pub recaptures: f64,
}

pub fn expected_counts(cfg: &PopulationConfig) -> Result<ExpectedCounts> {
    let big_n = cfg.population as f64;
    let k = cfg.occasions as i32;
    let miss_all = |p: f64| (1.0 - p).powi(k);
    let (observed, captures) = match cfg.rule()? {
        Rule::Constant(p) => (big_n * (1.0 - miss_all(p)), big_n * f64::from(k) * p),
        Rule::Strata(strata) => strata.iter().fold((0.0, 0.0), |(n, c), s| {
            let size = s.size as f64;
            (n + size * (1.0 - miss_all(s.p)), c + size * f64::from(k) * s.p)
        }),
        Rule::Uniform(lo, hi) => {
            let avg_miss = if hi > lo {
                ((1.0 - lo).powi(k + 1) - (1.0 - hi).powi(k + 1)) / (f64::from(k + 1) * (hi - lo))
            } else {
                miss_all(lo)
            };
            (big_n * (1.0 - avg_miss), big_n * f64::from(k) * 0.5 * (lo + hi))
        }
        Rule::Behavioural { p, recapture } => {
            let per_unit: f64 = (0..k)
                .map(|occ| {
                    let unmarked = (1.0 - p).powi(occ);
                    unmarked * p + (1.0 - unmarked) * recapture
                })
                .sum();
            (big_n * (1.0 - miss_all(p)), big_n * per_unit)
        }
        Rule::Time(q) => {
            let miss: f64 = q.iter().map(|qk| 1.0 - qk).product();
            (big_n * (1.0 - miss), big_n * q.iter().sum::<f64>())
        }
    };
    Ok(ExpectedCounts { observed, captures, recaptures: captures - observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn m0(p: f64) -> PopulationConfig {
        PopulationConfig {
            population: 500,
            model: Model::M0,
            occasions: 3,
            p: Some(p),
            heterogeneity: None,
            phi: None,
            q: None,
        }
    }

    #[test]
    fn certain_capture_catches_everyone_every_time() {
        let h = draw_history(&m0(1.0), &mut substream(1, &[])).unwrap();
        assert_eq!(h.n_units(), 500);
        assert_eq!(h.total_captures(), 1500);
    }

    #[test]
    fn zero_probability_is_an_empty_sample() {
        assert!(matches!(draw_history(&m0(0.0), &mut substream(1, &[])), Err(Error::EmptySample)));
        assert!(matches!(draw_nonempty(&m0(0.0), &mut substream(1, &[])), Err(Error::EmptySample)));
        let e = expected_counts(&m0(0.0)).unwrap();
        assert_eq!((e.observed, e.captures, e.recaptures), (0.0, 0.0, 0.0));
    }

    #[test]
    fn closed_form_expectations() {
        let e = expected_counts(&m0(0.15)).unwrap();
        // 500 (1 - 0.85^3) = 500 (1 - 0.614125)
        assert!((e.observed - 192.9375).abs() < 1e-9);
        let mt = PopulationConfig { model: Model::Mt, p: None, q: Some(vec![0.10, 0.15, 0.20]), ..m0(0.15) };
        assert!((expected_counts(&mt).unwrap().observed - 194.0).abs() < 1e-9);
    }

    #[test]
    fn single_stratum_matches_m0_draw_for_draw() {
        let mh = PopulationConfig {
            model: Model::Mh,
            p: None,
            heterogeneity: Some(Heterogeneity::Strata(vec![Stratum { size: 500, p: 0.15 }])),
            ..m0(0.15)
        };
        let a = draw_history(&m0(0.15), &mut substream(9, &[1])).unwrap();
        let b = draw_history(&mh, &mut substream(9, &[1])).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.units(), b.units());
        assert!(b.strata().unwrap().iter().all(|&g| g == 1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(m0(1.5).validate().is_err());
        let mb = PopulationConfig { model: Model::Mb, phi: Some(8.0), ..m0(0.15) };
        assert!(mb.validate().is_err());
        let mh = PopulationConfig {
            model: Model::Mh,
            heterogeneity: Some(Heterogeneity::Strata(vec![Stratum { size: 10, p: 0.1 }])),
            ..m0(0.15)
        };
        assert!(mh.validate().is_err());
        let mt = PopulationConfig { model: Model::Mt, q: Some(vec![0.1]), ..m0(0.15) };
        assert!(mt.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = draw_history(&m0(0.15), &mut substream(3, &[7])).unwrap();
        let b = draw_history(&m0(0.15), &mut substream(3, &[7])).unwrap();
        assert_eq!(a, b);
    }
}
