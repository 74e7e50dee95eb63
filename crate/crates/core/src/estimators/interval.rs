use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::EstimatorResult;

/// A two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Standard normal quantile for a two-sided interval at `level`.
pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// Wald interval `point ± z·√var`, with the lower end floored at the observed count.
///
/// `None` for invalid results or results without a variance.
pub fn wald_ci(r: &EstimatorResult, level: f64, observed: f64) -> Option<Interval> {
    let var = r.var?;
    if !r.is_valid() {
        return None;
    }
    let half = z_value(level) * var.sqrt();
    Some(Interval {
        lower: (r.point - half).max(observed),
        upper: r.point + half,
    })
}
