//! Estimators built from frequency counts `f_j` and capture-pattern counts.

use super::EstimatorResult;
use crate::suffstat::{FrequencyCounts, PatternCounts};

/// Chao's lower bound for `K` occasions, `n + ((K-1)/K) f1²/(2 f2)`, with the
/// bias-corrected `n + ((K-1)/K) f1(f1-1)/2` when there are no doubletons.
pub fn chao_lb(f: &FrequencyCounts, occasions: usize) -> EstimatorResult {
    const ID: &str = "chao";
    let n = f.observed() as f64;
    let f1 = f.f(1) as f64;
    let f2 = f.f(2) as f64;
    if n == 0.0 {
        return EstimatorResult::invalid(ID, "no captures");
    }
    if occasions < 2 {
        return EstimatorResult::invalid(ID, "needs at least two occasions");
    }
    let a = (occasions - 1) as f64 / occasions as f64;
    if f2 > 0.0 {
        let ratio = f1 / f2;
        let point = n + a * f1 * f1 / (2.0 * f2);
        let var = f2 * (0.25 * a * a * ratio.powi(4) + a * a * ratio.powi(3) + 0.5 * a * ratio.powi(2));
        EstimatorResult::new(ID, point, Some(var))
    } else {
        let point = n + a * f1 * (f1 - 1.0) / 2.0;
        let var = if f1 > 0.0 {
            a * f1 * (f1 - 1.0) / 2.0 + a * a * f1 * (2.0 * f1 - 1.0).powi(2) / 4.0
                - a * a * f1.powi(4) / (4.0 * point)
        } else {
            0.0
        };
        EstimatorResult::new(ID, point, Some(var.max(0.0)))
    }
}

/// Sample-coverage estimator for `K` occasions under heterogeneous capture probabilities.
///
/// With `T = Σ j f_j`, coverage `Ĉ = 1 - (f1 - 2 f2/(K-1))/T` (capped at 1), `N̂₀ = n/Ĉ`
/// and squared coefficient of variation
/// `γ̂² = max(N̂₀ Σ j(j-1) f_j / (2 Σ_{k<l} n_k n_l) - 1, 0)`, the estimate is
/// `N̂₀ + (f1/Ĉ) γ̂²`. No variance is attached; it comes from resampling.
pub fn sample_coverage(p: &PatternCounts) -> EstimatorResult {
    const ID: &str = "sc";
    let f = p.frequencies();
    let n = f.observed() as f64;
    if n == 0.0 {
        return EstimatorResult::invalid(ID, "no captures");
    }
    if p.occasions < 2 {
        return EstimatorResult::invalid(ID, "needs at least two occasions");
    }
    let total = f.total_captures() as f64;
    let f1 = f.f(1) as f64;
    let f2 = f.f(2) as f64;
    let coverage = (1.0 - (f1 - 2.0 * f2 / (p.occasions - 1) as f64) / total).min(1.0);
    if coverage <= 0.0 {
        return EstimatorResult::invalid(ID, "zero estimated coverage");
    }
    let n0 = n / coverage;
    let pairs: f64 = f
        .0
        .iter()
        .enumerate()
        .map(|(i, &fj)| {
            let j = (i + 1) as f64;
            j * (j - 1.0) * fj as f64
        })
        .sum();
    let sizes = p.occasion_sizes();
    let sum: f64 = sizes.iter().map(|&x| x as f64).sum();
    let cross = sum * sum - sizes.iter().map(|&x| (x as f64).powi(2)).sum::<f64>();
    let gamma_sq = if cross > 0.0 { (n0 * pairs / cross - 1.0).max(0.0) } else { 0.0 };
    EstimatorResult::new(ID, n0 + f1 / coverage * gamma_sq, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::CaptureHistory;
    use crate::suffstat::patterns;

    fn fc(v: &[u64]) -> FrequencyCounts {
        FrequencyCounts(v.to_vec())
    }

    fn pc(occasions: usize, counts: &[(u64, u64)]) -> PatternCounts {
        PatternCounts { occasions, counts: counts.to_vec() }
    }

    #[test]
    fn chao_examples() {
        assert_eq!(chao_lb(&fc(&[0, 3, 0]), 3).point, 3.0);
        // n = 3, f1 = 2, f2 = 1: 3 + (2/3) * 4/2
        assert!((chao_lb(&fc(&[2, 1, 0]), 3).point - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(chao_lb(&fc(&[2, 1]), 2).point, 4.0);
        let r = chao_lb(&fc(&[0, 0, 5]), 3);
        assert_eq!((r.point, r.var), (5.0, Some(0.0)));
        assert!(!chao_lb(&fc(&[3]), 1).is_valid());
    }

    #[test]
    fn chao_variance_formula() {
        // f1 = 4, f2 = 2, a = 2/3, ratio 2: 2 * (16/9 + 32/9 + 12/9) = 40/3
        let v = chao_lb(&fc(&[4, 2, 1]), 3).var.unwrap();
        assert!((v - 40.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn chao_without_doubletons() {
        let r = chao_lb(&fc(&[3, 0, 1]), 3);
        assert!((r.point - (4.0 + 2.0)).abs() < 1e-12);
        assert!(r.var.unwrap() >= 0.0);
    }

    #[test]
    fn sample_coverage_examples() {
        // every unit caught twice: f = (0, 3, 0); coverage capped at 1 and no heterogeneity
        let t1 = CaptureHistory::from_occasion_sets(&[&["A", "C"], &["A", "B", "C"], &["B"]], None).unwrap();
        assert_eq!(sample_coverage(&patterns(&t1)).point, 3.0);
        assert!(!sample_coverage(&pc(3, &[(0b001, 2), (0b100, 2)])).is_valid());
        assert!(!sample_coverage(&pc(1, &[(0b1, 2)])).is_valid());
        // K = 2, f = (3, 1): C = 1 - (3 - 2)/5, N0 = 5, gamma clamped to 0
        let r = sample_coverage(&pc(2, &[(0b01, 2), (0b10, 1), (0b11, 1)]));
        assert!((r.point - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sample_coverage_heterogeneity_term_against_pairwise_counts() {
        let rows = [0b001u64, 0b001, 0b111, 0b111];
        let r = sample_coverage(&pc(3, &[(0b001, 2), (0b111, 2)]));
        // recompute the CV term from pairwise occasion overlaps and sizes
        let size = |k: u32| rows.iter().filter(|&&x| x >> k & 1 == 1).count() as f64;
        let both = |k: u32, l: u32| rows.iter().filter(|&&x| x >> k & 1 == 1 && x >> l & 1 == 1).count() as f64;
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let overlap: f64 = pairs.iter().map(|&(k, l)| both(k, l)).sum();
        let products: f64 = pairs.iter().map(|&(k, l)| size(k) * size(l)).sum();
        let coverage = 1.0 - 2.0 / 8.0;
        let n0 = 4.0 / coverage;
        let gamma_sq = n0 * overlap / products - 1.0;
        assert!(gamma_sq > 0.0);
        let expected = n0 + 2.0 / coverage * gamma_sq;
        assert!((r.point - expected).abs() < 1e-12, "{} vs {expected}", r.point);
    }
}
