use super::EstimatorResult;
use crate::history::CaptureHistory;

/// Chapman's bias-adjusted two-sample Lincoln-Petersen estimator on occasions `a` and `b`
/// (zero-based), with Seber's variance.
///
/// Defined for every count, including an empty occasion (the point is then the other
/// occasion's size). Not a function of any model's sufficient statistic: it depends on
/// which units were caught on the two chosen occasions.
pub fn chapman_lp(h: &CaptureHistory, a: usize, b: usize) -> EstimatorResult {
    const ID: &str = "lp";
    if a == b || a >= h.occasions() || b >= h.occasions() {
        return EstimatorResult::invalid(
            ID,
            format!("occasion pair ({}, {}) is not valid for {} occasions", a + 1, b + 1, h.occasions()),
        );
    }
    let (mut na, mut nb, mut m) = (0u64, 0u64, 0u64);
    for &row in h.rows() {
        let in_a = row >> a & 1;
        let in_b = row >> b & 1;
        na += in_a;
        nb += in_b;
        m += in_a & in_b;
    }
    let (na, nb, m) = (na as f64, nb as f64, m as f64);
    let point = (na + 1.0) * (nb + 1.0) / (m + 1.0) - 1.0;
    let var = (na + 1.0) * (nb + 1.0) * (na - m) * (nb - m) / ((m + 1.0).powi(2) * (m + 2.0));
    EstimatorResult::new(ID, point, Some(var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chapman_on_first_two_occasions() {
        let h = CaptureHistory::from_occasion_sets(&[&["A", "C"], &["A", "B", "C"], &["B"]], None)
            .unwrap();
        let r = chapman_lp(&h, 0, 1);
        assert!((r.point - 3.0).abs() < 1e-12);
        // (3)(4)(0)(1) / ... = 0
        assert_eq!(r.var, Some(0.0));
    }

    #[test]
    fn complete_overlap_recovers_n() {
        let h = CaptureHistory::from_occasion_sets(&[&["A", "B", "C"], &["A", "B", "C"]], None)
            .unwrap();
        assert!((chapman_lp(&h, 0, 1).point - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_samples_of_ten() {
        let first: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
        let second: Vec<String> = (0..10).map(|i| format!("b{i}")).collect();
        let first: Vec<&str> = first.iter().map(String::as_str).collect();
        let second: Vec<&str> = second.iter().map(String::as_str).collect();
        let h = CaptureHistory::from_occasion_sets(&[&first, &second], None).unwrap();
        let r = chapman_lp(&h, 0, 1);
        assert!((r.point - 120.0).abs() < 1e-9);
        assert!((r.var.unwrap() - 6050.0).abs() < 1e-9);
    }

    #[test]
    fn bad_occasions_are_invalid_and_empty_ones_are_not() {
        let h = CaptureHistory::from_occasion_sets(&[&["A"], &[], &["A"]], None).unwrap();
        assert_eq!(chapman_lp(&h, 0, 1).point, 1.0);
        assert!(!chapman_lp(&h, 0, 0).is_valid());
        assert!(!chapman_lp(&h, 0, 3).is_valid());
        assert!(chapman_lp(&h, 0, 2).is_valid());
    }
}
