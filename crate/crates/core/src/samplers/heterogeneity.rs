//! Reorderings consistent with `{s, C_1..C_G}` (M0 and Mh).
//!
//! Candidates place every unit on one uniformly chosen occasion, then add the remaining
//! `C_j - n_(j)` captures of each stratum one at a time, each at a uniformly chosen empty
//! (unit, occasion) cell of the stratum. A reordering `r` arises from
//! `O(r) = Π_j [Π_i f_(j,i)] · (Σ_i (f_(j,i) - 1))!` placement sequences, all equally
//! likely, so candidates are drawn with probability proportional to `O(r)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use super::ChainState;
use crate::error::{Error, Result};
use crate::history::Reordering;
use crate::suffstat::SuffStatMh;

/// Metropolis-Hastings acceptance rule for candidate-distribution proposals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhAcceptance {
    /// `min{1, O(current)/O(candidate)}`: the chain is stationary on the uniform
    /// distribution over consistent reorderings.
    #[default]
    Uniform,
    /// `min{1, O(candidate)/O(current)}`: stationary on the distribution proportional to
    /// `O(r)²`. Kept for comparison runs.
    OutcomeRatio,
}

/// Precomputed layout of an Mh statistic for repeated candidate draws.
#[derive(Debug, Clone)]
pub struct MhSampler {
    members: Vec<Vec<usize>>,
    extras: Vec<usize>,
    occasions: usize,
    log_constant: f64,
    ln_counts: Vec<f64>,
    cells: Vec<(usize, usize)>,
    acceptance: MhAcceptance,
}

impl MhSampler {
    pub fn new(stat: &SuffStatMh, acceptance: MhAcceptance) -> Self {
        let members = stat.stratum_members();
        let extras: Vec<usize> = members
            .iter()
            .zip(stat.captures())
            .map(|(m, &c)| c as usize - m.len())
            .collect();
        let log_constant = extras.iter().map(|&e| ln_factorial(e as u64)).sum();
        let ln_counts = (0..=stat.occasions()).map(|j| (j.max(1) as f64).ln()).collect();
        Self {
            members,
            extras,
            occasions: stat.occasions(),
            log_constant,
            ln_counts,
            cells: Vec::new(),
            acceptance,
        }
    }

    /// Overwrites `rows` with a candidate draw.
    pub fn candidate_rows<R: Rng + ?Sized>(&mut self, rng: &mut R, rows: &mut [u64]) {
        let k = self.occasions;
        for (members, &extra) in self.members.iter().zip(&self.extras) {
            for &i in members {
                rows[i] = 1u64 << rng.random_range(0..k);
            }
            if extra == 0 {
                continue;
            }
            self.cells.clear();
            for &i in members {
                for occ in 0..k {
                    if rows[i] >> occ & 1 == 0 {
                        self.cells.push((i, occ));
                    }
                }
            }
            let (chosen, _) = self.cells.partial_shuffle(rng, extra);
            for &(i, occ) in chosen.iter() {
                rows[i] |= 1u64 << occ;
            }
        }
    }

    /// `ln O(r)` for rows consistent with the statistic.
    pub fn log_outcome_count(&self, rows: &[u64]) -> f64 {
        self.log_constant
            + rows
                .iter()
                .map(|r| self.ln_counts[r.count_ones() as usize])
                .sum::<f64>()
    }

    /// One Metropolis-Hastings step with an independent candidate-distribution proposal.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> bool {
        let mut rows = vec![0u64; state.current.n_units()];
        self.candidate_rows(rng, &mut rows);
        let current = self.log_outcome_count(state.current.rows());
        let candidate = self.log_outcome_count(&rows);
        let log_ratio = match self.acceptance {
            MhAcceptance::Uniform => current - candidate,
            MhAcceptance::OutcomeRatio => candidate - current,
        };
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        state.iteration += 1;
        if accept {
            state.current = state.current.with_rows(rows);
            state.accepted += 1;
        }
        accept
    }
}

/// One candidate-distribution draw.
pub fn mh_candidate<R: Rng + ?Sized>(stat: &SuffStatMh, rng: &mut R) -> Reordering {
    let mut sampler = MhSampler::new(stat, MhAcceptance::default());
    let mut rows = vec![0u64; stat.n_units()];
    sampler.candidate_rows(rng, &mut rows);
    stat.template().with_rows(rows)
}

/// `ln O(r)`; errors when `r` does not reduce to `stat`.
pub fn outcome_count(r: &Reordering, stat: &SuffStatMh) -> Result<f64> {
    if r.units() != stat.units() || r.occasions() != stat.occasions() {
        return Err(Error::Input("reordering is over a different unit set".into()));
    }
    let mut captures = vec![0u64; stat.n_strata()];
    for (i, &g) in stat.strata_of_units().iter().enumerate() {
        captures[g as usize - 1] += u64::from(r.unit_captures(i));
    }
    if captures != stat.captures() {
        return Err(Error::Input(format!(
            "reordering has stratum captures {captures:?}, statistic has {:?}",
            stat.captures()
        )));
    }
    Ok(MhSampler::new(stat, MhAcceptance::default()).log_outcome_count(r.rows()))
}

/// Single Mh step from `state` (a fresh sampler per call; chains reuse one).
pub fn mh_step<R: Rng + ?Sized>(mut state: ChainState, stat: &SuffStatMh, rng: &mut R) -> ChainState {
    MhSampler::new(stat, MhAcceptance::default()).step(&mut state, rng);
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::CaptureHistory;
    use crate::rng::substream;
    use crate::suffstat::{reduce_m0, reduce_mh, Model};

    fn small_strata() -> CaptureHistory {
        CaptureHistory::from_occasion_sets(
            &[&["A", "C"], &["A", "B", "C"], &["B"]],
            Some(&[("A", 1), ("B", 1), ("C", 2)]),
        )
        .unwrap()
    }

    #[test]
    fn outcome_counts_on_stratified_history() {
        let h = small_strata();
        let stat = reduce_mh(&h).unwrap();
        assert!((outcome_count(&h, &stat).unwrap() - 16f64.ln()).abs() < 1e-12);
        // units are indexed A, C, B; f_A = 3, f_C = 2, f_B = 1
        let r = h.with_rows(vec![0b111, 0b011, 0b010]);
        assert!((outcome_count(&r, &stat).unwrap() - 12f64.ln()).abs() < 1e-12);
        let bad = h.with_rows(vec![0b111, 0b011, 0b011]);
        assert!(outcome_count(&bad, &stat).is_err());
    }

    #[test]
    fn single_captures_give_unit_outcome_count() {
        let h = CaptureHistory::from_occasion_sets(&[&["A"], &["B"], &["C"]], None).unwrap();
        assert_eq!(outcome_count(&h, &reduce_m0(&h)).unwrap(), 0.0);
    }

    #[test]
    fn candidates_are_consistent() {
        let h = small_strata();
        let stat = reduce_mh(&h).unwrap();
        let mut rng = substream(3, &[]);
        for _ in 0..200 {
            let r = mh_candidate(&stat, &mut rng);
            assert_eq!(reduce_mh(&r).unwrap(), stat);
        }
    }

    #[test]
    fn no_extra_captures_means_one_capture_each() {
        let h = CaptureHistory::from_occasion_sets(&[&["A", "B"], &["C"], &[]], None).unwrap();
        let stat = reduce_m0(&h);
        let mut rng = substream(4, &[]);
        for _ in 0..50 {
            assert!(mh_candidate(&stat, &mut rng).rows().iter().all(|r| r.count_ones() == 1));
        }
    }

    #[test]
    fn saturated_stratum_has_one_candidate() {
        let h = CaptureHistory::from_occasion_sets(&[&["A", "B"], &["A", "B"]], None).unwrap();
        let stat = reduce_m0(&h);
        let r = mh_candidate(&stat, &mut substream(5, &[]));
        assert_eq!(r.rows(), &[0b11, 0b11]);
    }

    #[test]
    fn candidates_never_below_current_weight_are_always_accepted() {
        // K = 3, n = 3, C = 5: Π f is 3 for a triple and 4 for two doubles
        let h = CaptureHistory::from_occasion_sets(&[&["A", "B"], &["A", "C"], &["A"]], None).unwrap();
        let stat = reduce_m0(&h);
        let triple = h.with_rows(vec![0b111, 0b001, 0b010]);
        let doubles = h.with_rows(vec![0b011, 0b011, 0b100]);
        let mut rng = substream(6, &[]);
        for (rule, start) in [(MhAcceptance::OutcomeRatio, &triple), (MhAcceptance::Uniform, &doubles)] {
            let mut sampler = MhSampler::new(&stat, rule);
            for _ in 0..100 {
                let mut state = ChainState::new(start.clone(), Model::M0);
                assert!(sampler.step(&mut state, &mut rng));
            }
        }
    }
}
