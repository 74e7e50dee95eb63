//! Maximum-likelihood population size under M0, Mb and Mt.
//!
//! Each estimator maximizes the model likelihood written in terms of its sufficient
//! statistic, times `binom(N, n)` for the unordered unobserved units, over continuous
//! `N` in `[n, 200 n]`. Nuisance probabilities are profiled out in closed form.

use statrs::function::gamma::ln_gamma;

use super::optimize::{maximize, second_derivative};
use super::{EstimatorResult, ModelParams};
use crate::suffstat::{SuffStatMb, SuffStatMh, SuffStatMt};

/// Upper end of the population-size search, as a multiple of the observed count.
pub const SEARCH_FACTOR: f64 = 200.0;
const N_TOLERANCE: f64 = 1e-6;

/// `x·ln(y)` with the convention `0·ln(0) = 0`.
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `ln binom(N, n)` for continuous `N ≥ n`.
pub fn ln_binom(big_n: f64, n: f64) -> f64 {
    ln_gamma(big_n + 1.0) - ln_gamma(big_n - n + 1.0) - ln_gamma(n + 1.0)
}

/// M0 log-likelihood with `p` profiled out: `p̂ = C / (K N)`.
pub fn m0_log_likelihood(observed: f64, captures: f64, occasions: f64, big_n: f64) -> f64 {
    let trials = occasions * big_n;
    let p = captures / trials;
    ln_binom(big_n, observed) + xlogy(captures, p) + xlogy(trials - captures, 1.0 - p)
}

/// M0 estimate from the pooled `{s, C}` statistic (all strata are combined).
pub fn m0_mle(stat: &SuffStatMh) -> EstimatorResult {
    const ID: &str = "m0";
    let n = stat.n_units() as f64;
    let c = stat.total_captures() as f64;
    let k = stat.occasions() as f64;
    if n == 0.0 || c == 0.0 {
        return EstimatorResult::invalid(ID, "no captures");
    }
    if c == k * n {
        return EstimatorResult::new(ID, n, Some(0.0))
            .with_params(ModelParams::constant(n, 1.0));
    }
    let loglik = |big_n: f64| m0_log_likelihood(n, c, k, big_n);
    let best = maximize(loglik, n, SEARCH_FACTOR * n, N_TOLERANCE);
    if best.at_upper {
        return EstimatorResult::invalid(ID, "unstable: likelihood increases up to the search bound");
    }
    let var = observed_information_variance(loglik, best.x, n);
    EstimatorResult::new(ID, best.x, var).with_params(ModelParams::constant(best.x, c / (k * best.x)))
}

/// Full Mb log-likelihood in `(N, p, φ)`.
///
/// First captures contribute `p^n (1-p)^(Σ_k (N - M_k) - n)` and recaptures contribute
/// `(φp)^R (1-φp)^(Σ_k M_k - R)`, where `M_k` counts units marked before occasion `k`.
/// Returns `-inf` outside the parameter space.
pub fn mb_log_likelihood(stat: &SuffStatMb, big_n: f64, p: f64, phi: f64) -> f64 {
    let c = phi * p;
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&c) || phi < 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = stat.n_units() as f64;
    let (first_trials, marked_trials) = mb_trials(stat, big_n);
    let r = stat.recaptures() as f64;
    ln_binom(big_n, n)
        + xlogy(n, p)
        + xlogy(first_trials - n, 1.0 - p)
        + xlogy(r, c)
        + xlogy(marked_trials - r, 1.0 - c)
}

/// `(Σ_k (N - M_k), Σ_k M_k)`.
fn mb_trials(stat: &SuffStatMb, big_n: f64) -> (f64, f64) {
    let marked: usize = stat.marked_before().iter().sum();
    let k = stat.occasions() as f64;
    (k * big_n - marked as f64, marked as f64)
}

/// Mb log-likelihood with `p` and `φ` profiled out.
pub fn mb_profile_log_likelihood(stat: &SuffStatMb, big_n: f64) -> f64 {
    let n = stat.n_units() as f64;
    let (first_trials, marked_trials) = mb_trials(stat, big_n);
    let p = n / first_trials;
    let r = stat.recaptures() as f64;
    let recapture_part = if marked_trials > 0.0 {
        let c = r / marked_trials;
        xlogy(r, c) + xlogy(marked_trials - r, 1.0 - c)
    } else {
        0.0
    };
    ln_binom(big_n, n) + xlogy(n, p) + xlogy(first_trials - n, 1.0 - p) + recapture_part
}

pub fn mb_mle(stat: &SuffStatMb) -> EstimatorResult {
    const ID: &str = "mb";
    let n = stat.n_units() as f64;
    if n == 0.0 {
        return EstimatorResult::invalid(ID, "no captures");
    }
    let loglik = |big_n: f64| mb_profile_log_likelihood(stat, big_n);
    let best = maximize(loglik, n, SEARCH_FACTOR * n, N_TOLERANCE);
    if best.at_upper {
        return EstimatorResult::invalid(ID, "unstable: likelihood increases up to the search bound");
    }
    let var = if best.x == n {
        Some(0.0)
    } else {
        observed_information_variance(loglik, best.x, n)
    };
    let (first_trials, marked_trials) = mb_trials(stat, best.x);
    let p = n / first_trials;
    let phi = if marked_trials > 0.0 {
        Some(stat.recaptures() as f64 / marked_trials / p)
    } else {
        None
    };
    EstimatorResult::new(ID, best.x, var).with_params(ModelParams {
        population: best.x,
        p: Some(p),
        phi,
        q: Vec::new(),
    })
}

/// Residual of the Darroch equation `(1 - n/N) - Π_k (1 - n_k/N)`.
pub fn darroch_residual(stat: &SuffStatMt, big_n: f64) -> f64 {
    let n = stat.n_units() as f64;
    let product: f64 = stat
        .occasion_sizes()
        .iter()
        .map(|&nk| 1.0 - nk as f64 / big_n)
        .product();
    (1.0 - n / big_n) - product
}

/// Mt estimate: root `N ≥ n` of the Darroch equation, with `q̂_k = n_k / N̂`.
pub fn mt_mle(stat: &SuffStatMt) -> EstimatorResult {
    const ID: &str = "mt";
    let n = stat.n_units() as f64;
    let sizes: Vec<f64> = stat.occasion_sizes().iter().map(|&s| s as f64).collect();
    if n == 0.0 {
        return EstimatorResult::invalid(ID, "no captures");
    }
    let params = |big_n: f64| ModelParams {
        population: big_n,
        p: None,
        phi: None,
        q: sizes.iter().map(|s| s / big_n).collect(),
    };
    if sizes.contains(&n) {
        return EstimatorResult::new(ID, n, Some(0.0)).with_params(params(n));
    }
    if sizes.iter().sum::<f64>() <= n {
        return EstimatorResult::invalid(ID, "no overlap between occasions; the estimate diverges");
    }
    // log form: increasing from -inf just above n, positive for large N when there is overlap
    let score = |big_n: f64| {
        (1.0 - n / big_n).ln() - sizes.iter().map(|s| (1.0 - s / big_n).ln()).sum::<f64>()
    };
    let mut lo = n;
    let mut hi = 2.0 * n;
    while score(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > SEARCH_FACTOR * n {
            return EstimatorResult::invalid(ID, "unstable: root lies beyond the search bound");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let curvature = -n / (root * (root - n))
        + sizes.iter().map(|s| s / (root * (root - s))).sum::<f64>();
    let var = (curvature < 0.0).then(|| -1.0 / curvature);
    EstimatorResult::new(ID, root, var).with_params(params(root))
}

fn observed_information_variance<F: Fn(f64) -> f64>(loglik: F, at: f64, lo: f64) -> Option<f64> {
    if at <= lo {
        return Some(0.0);
    }
    match second_derivative(loglik, at, lo) {
        Some(d2) if d2 < 0.0 => Some(-1.0 / d2),
        _ => None,
    }
}
