//! Exhaustive enumeration of consistent reorderings for small instances.

use crate::error::{Error, Result};
use crate::history::Reordering;
use crate::suffstat::SufficientStatistic;

pub const MAX_ENUMERATION_UNITS: usize = 6;
pub const MAX_ENUMERATION_OCCASIONS: usize = 4;
/// Upper bound on the number of reorderings produced.
pub const MAX_REORDERINGS: usize = 2_000_000;

/// Counters that a reordering must hit exactly, with each unit's row adding to them.
struct Targets {
    target: Vec<i64>,
    /// Counter touched by each unit's capture count (Mh: its stratum).
    stratum: Vec<usize>,
    kind: Kind,
    occasions: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    /// counter g = captures of stratum g
    Strata,
    /// counters 0..K = first captures, K..2K = recaptures, per occasion
    Behavioural,
    /// counter k = captures on occasion k
    Time,
}

impl Targets {
    fn new(stat: &SufficientStatistic) -> Self {
        match stat {
            SufficientStatistic::Strata(s) => Self {
                target: s.captures().iter().map(|&c| c as i64).collect(),
                stratum: s.strata_of_units().iter().map(|&g| g as usize - 1).collect(),
                kind: Kind::Strata,
                occasions: s.occasions(),
            },
            SufficientStatistic::Behavioural(s) => {
                let k = s.occasions();
                let mut target: Vec<i64> = s.first_captures().iter().map(|&c| c as i64).collect();
                target.push(0);
                target.extend(s.occasion_recaptures().iter().map(|&r| r as i64));
                Self { target, stratum: vec![0; s.n_units()], kind: Kind::Behavioural, occasions: k }
            }
            SufficientStatistic::Time(s) => Self {
                target: s.occasion_sizes().iter().map(|&c| c as i64).collect(),
                stratum: vec![0; s.n_units()],
                kind: Kind::Time,
                occasions: s.occasions(),
            },
        }
    }

    /// Adds `sign` times the contribution of `row` for unit `i`.
    fn apply(&self, acc: &mut [i64], i: usize, row: u64, sign: i64) {
        match self.kind {
            Kind::Strata => acc[self.stratum[i]] += sign * i64::from(row.count_ones()),
            Kind::Time => {
                for (k, a) in acc.iter_mut().enumerate().take(self.occasions) {
                    if row >> k & 1 == 1 {
                        *a += sign;
                    }
                }
            }
            Kind::Behavioural => {
                let first = row.trailing_zeros() as usize;
                acc[first] += sign;
                for k in first + 1..self.occasions {
                    if row >> k & 1 == 1 {
                        acc[self.occasions + k] += sign;
                    }
                }
            }
        }
    }

    fn within(&self, acc: &[i64]) -> bool {
        acc.iter().zip(&self.target).all(|(a, t)| a <= t)
    }
}

/// Calls `visit` with the rows of every reordering consistent with `stat`, in
/// lexicographic order of rows. Stops early with an error past [`MAX_REORDERINGS`].
pub fn for_each_reordering<F: FnMut(&[u64])>(stat: &SufficientStatistic, mut visit: F) -> Result<usize> {
    let n = stat.n_units();
    let k = stat.occasions();
    if n > MAX_ENUMERATION_UNITS || k > MAX_ENUMERATION_OCCASIONS {
        return Err(Error::EnumerationTooLarge(format!(
            "{n} units over {k} occasions; enumeration is limited to {MAX_ENUMERATION_UNITS} units \
             and {MAX_ENUMERATION_OCCASIONS} occasions, use the MCMC sampler instead"
        )));
    }
    let targets = Targets::new(stat);
    let mut acc = vec![0i64; targets.target.len()];
    let mut rows = vec![0u64; n];
    let mut count = 0usize;
    let full = (1u64 << k) - 1;
    descend(&targets, 0, full, &mut acc, &mut rows, &mut count, &mut visit)?;
    Ok(count)
}

fn descend<F: FnMut(&[u64])>(
    targets: &Targets,
    i: usize,
    full: u64,
    acc: &mut [i64],
    rows: &mut [u64],
    count: &mut usize,
    visit: &mut F,
) -> Result<()> {
    if i == rows.len() {
        if acc == targets.target.as_slice() {
            *count += 1;
            if *count > MAX_REORDERINGS {
                return Err(Error::EnumerationTooLarge(format!(
                    "more than {MAX_REORDERINGS} consistent reorderings"
                )));
            }
            visit(rows);
        }
        return Ok(());
    }
    let remaining = (rows.len() - i) as i64;
    for row in 1..=full {
        targets.apply(acc, i, row, 1);
        // every later unit adds at least one to the counters' total
        let slack: i64 = targets.target.iter().zip(acc.iter()).map(|(t, a)| t - a).sum();
        if targets.within(acc) && slack >= remaining - 1 {
            rows[i] = row;
            descend(targets, i + 1, full, acc, rows, count, visit)?;
        }
        targets.apply(acc, i, row, -1);
    }
    Ok(())
}

/// All reorderings consistent with `stat`, as histories over `template`'s units and strata.
pub fn enumerate_reorderings_over(stat: &SufficientStatistic, template: &Reordering) -> Result<Vec<Reordering>> {
    let mut out = Vec::new();
    for_each_reordering(stat, |rows| out.push(template.with_rows(rows.to_vec())))?;
    Ok(out)
}

/// All reorderings consistent with `stat`.
pub fn enumerate_reorderings(stat: &SufficientStatistic) -> Result<Vec<Reordering>> {
    let template = match stat {
        SufficientStatistic::Strata(s) => s.template(),
        SufficientStatistic::Behavioural(s) => s.template(None),
        SufficientStatistic::Time(s) => s.template(None),
    };
    enumerate_reorderings_over(stat, &template)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::history::CaptureHistory;
    use crate::suffstat::{frequencies, Model};

    fn sets(s: &[&[&str]]) -> CaptureHistory {
        CaptureHistory::from_occasion_sets(s, None).unwrap()
    }

    fn brute_force(h: &CaptureHistory, model: Model) -> usize {
        let stat = SufficientStatistic::reduce(model, h).unwrap();
        let n = h.n_units();
        let full = (1u64 << h.occasions()) - 1;
        let mut count = 0;
        let total = (full as usize).pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let rows: Vec<u64> = (0..n)
                .map(|_| {
                    let r = (c % full as usize) as u64 + 1;
                    c /= full as usize;
                    r
                })
                .collect();
            let r = h.with_rows(rows);
            if SufficientStatistic::reduce(model, &r).unwrap() == stat {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn small_history_has_81_m0_reorderings() {
        let h = sets(&[&["A", "C"], &["A", "B", "C"], &["B"]]);
        let all = enumerate_reorderings(&SufficientStatistic::reduce(Model::M0, &h).unwrap()).unwrap();
        assert_eq!(all.len(), 81);
        let profile = |r: &CaptureHistory| frequencies(r).0;
        assert_eq!(all.iter().filter(|r| profile(r) == vec![1, 1, 1]).count(), 54);
        assert_eq!(all.iter().filter(|r| profile(r) == vec![0, 3, 0]).count(), 27);
        let distinct: HashSet<_> = all.iter().map(|r| r.rows().to_vec()).collect();
        assert_eq!(distinct.len(), 81);
    }

    #[test]
    fn counts_match_brute_force() {
        let h = sets(&[&["A", "C"], &["A", "B", "C"], &["B"]]);
        for model in [Model::M0, Model::Mb, Model::Mt] {
            let stat = SufficientStatistic::reduce(model, &h).unwrap();
            assert_eq!(for_each_reordering(&stat, |_| {}).unwrap(), brute_force(&h, model), "{model}");
        }
        let four = sets(&[&["A", "B"], &["C", "A"], &["D", "B"], &["A"]]);
        for model in [Model::M0, Model::Mb, Model::Mt] {
            let stat = SufficientStatistic::reduce(model, &four).unwrap();
            assert_eq!(for_each_reordering(&stat, |_| {}).unwrap(), brute_force(&four, model), "{model}");
        }
    }

    #[test]
    fn known_small_counts() {
        let h = sets(&[&["A", "C"], &["A", "B", "C"], &["B"]]);
        let mh = h.with_strata(vec![1, 2, 1]).unwrap();
        let count = |model, h: &CaptureHistory| {
            for_each_reordering(&SufficientStatistic::reduce(model, h).unwrap(), |_| {}).unwrap()
        };
        assert_eq!(count(Model::Mh, &mh), 45);
        assert_eq!(count(Model::Mb, &h), 9);
        let seven = sets(&[&["B", "C"], &["A", "C"], &["B"]]);
        assert_eq!(count(Model::Mt, &seven), 21);
        let single = sets(&[&["A"]]);
        assert_eq!(count(Model::M0, &single), 1);
        assert_eq!(count(Model::Mt, &single), 1);
    }

    #[test]
    fn every_reordering_reduces_to_the_statistic() {
        let h = sets(&[&["A", "C"], &["A", "B", "C"], &["B"]]);
        for model in [Model::M0, Model::Mb, Model::Mt] {
            let stat = SufficientStatistic::reduce(model, &h).unwrap();
            for r in enumerate_reorderings_over(&stat, &h).unwrap() {
                assert_eq!(SufficientStatistic::reduce(model, &r).unwrap(), stat);
            }
        }
    }

    #[test]
    fn guard_rejects_large_instances() {
        let labels: Vec<String> = (0..7).map(|i| format!("u{i}")).collect();
        let h = CaptureHistory::new(labels, vec![1; 7], 2, None).unwrap();
        let stat = SufficientStatistic::reduce(Model::M0, &h).unwrap();
        assert!(matches!(enumerate_reorderings(&stat), Err(Error::EnumerationTooLarge(_))));
    }
}
