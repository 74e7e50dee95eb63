//! Reduced data for each capture model.
//!
//! Every statistic keeps the set of observed unit labels `s` alongside the counts that
//! the model's likelihood depends on. Two histories with equal statistics under a model
//! are equally likely under that model, so any sample reordering that keeps the
//! statistic fixed is an equally plausible version of the observed data.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::CaptureHistory;

/// Closed-population capture model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Constant capture probability.
    M0,
    /// Per-stratum capture probabilities.
    Mh,
    /// Behavioural response after first capture.
    Mb,
    /// Per-occasion capture probabilities.
    Mt,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::M0 => "m0",
            Model::Mh => "mh",
            Model::Mb => "mb",
            Model::Mt => "mt",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(Model::M0),
            "mh" => Ok(Model::Mh),
            "mb" => Ok(Model::Mb),
            "mt" => Ok(Model::Mt),
            other => Err(Error::Input(format!(
                "unknown model `{other}` (expected m0, mh, mb or mt)"
            ))),
        }
    }
}

/// `{s, C}` for the heterogeneity model: total captures per stratum.
///
/// With a single stratum this is the M0 statistic `{s, C}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffStatMh {
    units: Arc<[String]>,
    strata: Arc<[u32]>,
    captures: Vec<u64>,
    occasions: usize,
}

impl SuffStatMh {
    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// 1-based stratum of each unit, in unit order.
    pub fn strata_of_units(&self) -> &[u32] {
        &self.strata
    }

    /// `C_1..C_G`.
    pub fn captures(&self) -> &[u64] {
        &self.captures
    }

    pub fn n_strata(&self) -> usize {
        self.captures.len()
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn total_captures(&self) -> u64 {
        self.captures.iter().sum()
    }

    /// `n_(j)`: observed units per stratum.
    pub fn stratum_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.captures.len()];
        for &g in self.strata.iter() {
            sizes[g as usize - 1] += 1;
        }
        sizes
    }

    /// Unit indices of each stratum, in unit order.
    pub fn stratum_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.captures.len()];
        for (i, &g) in self.strata.iter().enumerate() {
            members[g as usize - 1].push(i);
        }
        members
    }

    /// An all-zero history shell carrying the units and strata, for samplers to fill.
    pub(crate) fn template(&self) -> CaptureHistory {
        CaptureHistory::new(
            self.units.to_vec(),
            vec![1; self.units.len()],
            self.occasions,
            Some(self.strata.to_vec()),
        )
        .expect("statistic built from a valid history")
    }
}

/// `{s, C_k, C, R}` for the behavioural model, plus per-occasion recaptures `r_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffStatMb {
    units: Arc<[String]>,
    first_captures: Vec<usize>,
    total_captures: u64,
    recaptures: u64,
    occasion_recaptures: Vec<usize>,
}

impl SuffStatMb {
    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn occasions(&self) -> usize {
        self.first_captures.len()
    }

    /// `C_1..C_K`: first-time captures per occasion.
    pub fn first_captures(&self) -> &[usize] {
        &self.first_captures
    }

    /// Total captures `C`.
    pub fn total_captures(&self) -> u64 {
        self.total_captures
    }

    /// Total recaptures `R`.
    pub fn recaptures(&self) -> u64 {
        self.recaptures
    }

    /// `r_2..r_K`: recaptures on each occasion after the first.
    pub fn occasion_recaptures(&self) -> &[usize] {
        &self.occasion_recaptures
    }

    /// `M_k`: units already marked before occasion `k`, for `k = 1..K`.
    pub fn marked_before(&self) -> Vec<usize> {
        let mut marked = Vec::with_capacity(self.first_captures.len());
        let mut acc = 0;
        for &c in &self.first_captures {
            marked.push(acc);
            acc += c;
        }
        marked
    }

    pub(crate) fn template(&self, strata: Option<&Arc<[u32]>>) -> CaptureHistory {
        CaptureHistory::new(
            self.units.to_vec(),
            vec![1; self.units.len()],
            self.occasions(),
            strata.map(|s| s.to_vec()),
        )
        .expect("statistic built from a valid history")
    }
}

/// `{s, n_k}` for the time-effects model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffStatMt {
    units: Arc<[String]>,
    occasion_sizes: Vec<usize>,
}

impl SuffStatMt {
    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn occasions(&self) -> usize {
        self.occasion_sizes.len()
    }

    /// `n_1..n_K`.
    pub fn occasion_sizes(&self) -> &[usize] {
        &self.occasion_sizes
    }

    pub(crate) fn template(&self, strata: Option<&Arc<[u32]>>) -> CaptureHistory {
        CaptureHistory::new(
            self.units.to_vec(),
            vec![1; self.units.len()],
            self.occasions(),
            strata.map(|s| s.to_vec()),
        )
        .expect("statistic built from a valid history")
    }
}

/// `f_1..f_K`: number of units captured exactly `j` times.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyCounts(pub Vec<u64>);

impl FrequencyCounts {
    /// `f_j`, one-based; zero outside `1..=K`.
    pub fn f(&self, j: usize) -> u64 {
        if j == 0 {
            0
        } else {
            self.0.get(j - 1).copied().unwrap_or(0)
        }
    }

    /// Observed units `n = Σ f_j`.
    pub fn observed(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Total captures `Σ j·f_j`.
    pub fn total_captures(&self) -> u64 {
        self.0.iter().enumerate().map(|(i, &f)| (i as u64 + 1) * f).sum()
    }

    pub fn max_captures(&self) -> usize {
        self.0.len()
    }
}

/// Number of units with each distinct capture pattern, sorted by pattern bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternCounts {
    pub occasions: usize,
    pub counts: Vec<(u64, u64)>,
}

impl PatternCounts {
    pub fn observed(&self) -> u64 {
        self.counts.iter().map(|c| c.1).sum()
    }

    pub fn frequencies(&self) -> FrequencyCounts {
        let mut f = vec![0u64; self.occasions];
        for &(pattern, count) in &self.counts {
            f[pattern.count_ones() as usize - 1] += count;
        }
        FrequencyCounts(f)
    }

    /// `n_k`, units captured on occasion `k`.
    pub fn occasion_sizes(&self) -> Vec<u64> {
        (0..self.occasions)
            .map(|k| {
                self.counts
                    .iter()
                    .filter(|c| c.0 >> k & 1 == 1)
                    .map(|c| c.1)
                    .sum()
            })
            .collect()
    }
}

/// Statistic of whichever model a chain or estimator conditions on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SufficientStatistic {
    Strata(SuffStatMh),
    Behavioural(SuffStatMb),
    Time(SuffStatMt),
}

impl SufficientStatistic {
    pub fn reduce(model: Model, h: &CaptureHistory) -> Result<Self> {
        Ok(match model {
            Model::M0 => Self::Strata(reduce_m0(h)),
            Model::Mh => Self::Strata(reduce_mh(h)?),
            Model::Mb => Self::Behavioural(reduce_mb(h)),
            Model::Mt => Self::Time(reduce_mt(h)),
        })
    }

    pub fn n_units(&self) -> usize {
        match self {
            Self::Strata(s) => s.n_units(),
            Self::Behavioural(s) => s.n_units(),
            Self::Time(s) => s.n_units(),
        }
    }

    pub fn occasions(&self) -> usize {
        match self {
            Self::Strata(s) => s.occasions(),
            Self::Behavioural(s) => s.occasions(),
            Self::Time(s) => s.occasions(),
        }
    }
}

/// M0 statistic: all units treated as one stratum, whatever strata the history carries.
pub fn reduce_m0(h: &CaptureHistory) -> SuffStatMh {
    SuffStatMh {
        units: Arc::clone(h.shared_units()),
        strata: vec![1u32; h.n_units()].into(),
        captures: vec![h.total_captures()],
        occasions: h.occasions(),
    }
}

pub fn reduce_mh(h: &CaptureHistory) -> Result<SuffStatMh> {
    let strata = h.shared_strata().ok_or_else(|| {
        Error::ModelMismatch("model mh needs stratum labels on every unit".into())
    })?;
    let groups = strata.iter().copied().max().unwrap_or(1) as usize;
    let mut captures = vec![0u64; groups];
    for (i, &g) in strata.iter().enumerate() {
        captures[g as usize - 1] += u64::from(h.unit_captures(i));
    }
    Ok(SuffStatMh {
        units: Arc::clone(h.shared_units()),
        strata: Arc::clone(strata),
        captures,
        occasions: h.occasions(),
    })
}

pub fn reduce_mb(h: &CaptureHistory) -> SuffStatMb {
    let occasions = h.occasions();
    let mut first_captures = vec![0usize; occasions];
    for &row in h.rows() {
        first_captures[row.trailing_zeros() as usize] += 1;
    }
    let sizes = h.occasion_sizes();
    let occasion_recaptures: Vec<usize> =
        (1..occasions).map(|k| sizes[k] - first_captures[k]).collect();
    let total_captures = h.total_captures();
    SuffStatMb {
        units: Arc::clone(h.shared_units()),
        first_captures,
        total_captures,
        recaptures: total_captures - h.n_units() as u64,
        occasion_recaptures,
    }
}

pub fn reduce_mt(h: &CaptureHistory) -> SuffStatMt {
    SuffStatMt {
        units: Arc::clone(h.shared_units()),
        occasion_sizes: h.occasion_sizes(),
    }
}

pub fn frequencies(h: &CaptureHistory) -> FrequencyCounts {
    let mut f = vec![0u64; h.occasions()];
    for &row in h.rows() {
        f[row.count_ones() as usize - 1] += 1;
    }
    FrequencyCounts(f)
}

pub fn patterns(h: &CaptureHistory) -> PatternCounts {
    let mut rows = h.rows().to_vec();
    rows.sort_unstable();
    let mut counts: Vec<(u64, u64)> = Vec::new();
    for row in rows {
        match counts.last_mut() {
            Some(last) if last.0 == row => last.1 += 1,
            _ => counts.push((row, 1)),
        }
    }
    PatternCounts { occasions: h.occasions(), counts }
}
